#pragma once

// Device models in the form  T_h sigma_h' = f_h(sigma_h, theta_h, v_h)  with an
// active power injection p_h = p_s,h + p_t,h split into a source part that
// survives in steady state and a transient part fed by stored energy.
//
// Sign convention: p is always the power injected into the grid, and the
// split is normalized so that p = p_s + p_t holds exactly. Where a textbook
// expression writes the stored-energy term with the opposite sign (the
// kinetic-energy term of a machine, the regulator terms of a converter) the
// sign is folded into p_t.

#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "slackdyn/netcore.hpp"

namespace slackdyn {

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

struct MachineParams {
    double M = 10.0;          ///< mechanical starting time 2H, s
    double D = 0.0;           ///< damping, pu
    double tau_e_max = 1.0;   ///< maximum electrical torque, pu
    double tau_m0 = 0.0;      ///< torque setpoint
    double omega_n = 1.0;
};

enum class GovernorMode { Droop, Integral };

struct GovernorParams {
    double R = 0.05;
    double T = 0.5;
    GovernorMode mode = GovernorMode::Droop;
    double tau_m_ref = 0.0;   ///< tau°_m
    double agc_share = 0.0;   ///< r_h, zero when not under AGC
};

struct AgcParams {
    double K_o = 1.0;
    double xi0 = 0.0;
};

struct RlcLoadParams {
    double r = 0.0;
    double l = 1.0;  ///< pu inductance (time constant units: pu * s)
    double c = 1.0;  ///< pu capacitance (pu * s)
};

/// dc side shared by both converter families.
struct DcSideParams {
    double g_dc = 0.0;
    double c_dc = 0.05;
    double v_dc_ref = 1.0;
};

struct GflParams {
    double kp_pll = 0.25;
    double ki_pll = 12.0;
    double r_f = 0.0;
    double l_f = 0.0;
    double c_f = 0.0;
    DcSideParams dc;
    bool dc_droop = false;
    bool dc_source = true;    ///< a controllable dc source exists
    double T_dc = 0.1;
    double R_dc = 0.05;
    double i_dc0 = 0.0;       ///< i°_dc, back-initialized when left at zero
    double kp_dc = 5.0;       ///< dc-voltage loop, drives the d-axis current
    double ki_dc = 50.0;
    double kp_v = 1.0;        ///< ac-voltage loop, drives the q-axis current
    double ki_v = 20.0;
    double T_i = 0.002;       ///< inner current loop time constant, s
    double T_vm = 0.002;      ///< filter capacitor voltage time constant, s
    double p_set = 0.0;       ///< outer-loop active power reference (dispatch)
    double v_set = 1.0;
};

enum class GfmVariant { Droop, Vsm };

struct GfmParams {
    GfmVariant variant = GfmVariant::Droop;
    double D_alpha = 1.0;
    double H_alpha = 0.0;
    double M_alpha = 0.0;
    double p_ref = 0.0;       ///< back-initialized from the operating point
    double x_c = 0.1;         ///< coupling reactance between converter and bus
    double r_f = 0.0;
    DcSideParams dc;
    double v_set = 1.0;
};

enum class IdealSlackMode { Integrator, Droop };

struct IdealSlackParams {
    IdealSlackMode mode = IdealSlackMode::Integrator;
    double K = 1.0;
    double H = 0.0;
    double T = 1.0;           ///< time scale of either mode; T = 1 is the plain integrator
    double theta_ref = 0.0;
    double p0 = 0.0;
    double v_set = 1.0;
};

struct PowerSplit {
    double p_s = 0.0;
    double p_t = 0.0;
    double p_total = 0.0;
};

// ---------------------------------------------------------------------------
// Point evaluations of the individual equations
// ---------------------------------------------------------------------------

template <class S>
struct MachineState {
    S delta;
    S omega;
};

/// Swing equations; returns (delta', omega').
template <class S>
MachineState<S> eval_machine(const MachineState<S>& x, S theta, S omega_s, S tau_m, const MachineParams& p,
                             double omega_b)
{
    using std::sin;
    return {omega_b * (x.omega - omega_s),
            (tau_m - p.tau_e_max * sin(x.delta - theta) - p.D * (x.omega - p.omega_n)) / p.M};
}

inline MachineState<double> eval_machine(const MachineState<double>& x, double theta, double omega_s,
                                         const MachineParams& p, double omega_b)
{
    return eval_machine<double>(x, theta, omega_s, p.tau_m0, p, omega_b);
}

/// Classical split with constant mechanical torque.
PowerSplit machine_power_split(const MachineState<double>& x, const MachineState<double>& x_prime,
                               const MachineParams& p);

struct InertiaSpeed {
    double M;
    double omega;
};

double coi_speed(std::span<const InertiaSpeed> machines);

/// Turbine governor: returns tau_m'.
template <class S>
S eval_governor(S tau_m, S omega, const GovernorParams& g, S xi, double omega_n = 1.0)
{
    if (g.mode == GovernorMode::Integral) {
        return -(omega - omega_n) / (g.R * g.T);
    }
    return (g.tau_m_ref + g.agc_share * xi - (omega - omega_n) / g.R - tau_m) / g.T;
}

struct GovernorSplit {
    PowerSplit approximate;        ///< p_s = p°_m - (D + 1/R)(w - w_n)^2, p_t = -M w' - T tau_m'
    double p_total_exact = 0.0;    ///< w * tau_e actually delivered
    double approximation_residual = 0.0;
};

GovernorSplit machine_gov_power_split(const MachineState<double>& x, const MachineState<double>& x_prime,
                                      double tau_m, double tau_m_prime, const MachineParams& p,
                                      const GovernorParams& g);

template <class S>
S eval_agc(S omega_s, const AgcParams& a, double omega_n = 1.0)
{
    return a.K_o * (omega_n - omega_s);
}

double agc_steady_injection(double p_m0, double r_h, double omega_n, double xi);

/// Shares r_h = R_h / sum(R).
std::vector<double> conventional_agc_shares(std::span<const double> droops);

struct RlcState {
    Complex i_l;
    Complex v_c;
};

RlcState eval_rlc_load(const RlcState& x, Complex v_bus, const RlcLoadParams& p, double omega_b);

/// p_s is identically zero for a passive load; p_t is the stored-energy
/// term; resistive dissipation is returned separately so p = p_t - p_diss.
struct LoadSplit {
    PowerSplit split;
    double p_dissipated = 0.0;
};
LoadSplit load_power_split(const RlcState& x, const RlcState& x_prime, const RlcLoadParams& p);

/// Phasor steady state for a given bus voltage.
RlcState rlc_steady_state(Complex v_bus, const RlcLoadParams& p, double omega_b);

template <class S>
struct PllState {
    S zeta;
    S theta_hat;
};

template <class S>
struct PllRates {
    S d_zeta;
    S d_theta_hat;
    S dw_hat;
};

/// PLL loop filter. omega_frame is the speed of the phasor frame (1 pu in a
/// synchronous frame), so dw_hat always measures deviation from nominal.
template <class S>
PllRates<S> eval_pll(const PllState<S>& x, S theta_bus, const GflParams& p, double omega_b, S omega_frame,
                     double omega_n = 1.0)
{
    const S d_zeta = theta_bus - x.theta_hat;
    const S dw_hat = p.ki_pll * x.zeta + p.kp_pll * d_zeta;
    return {d_zeta, omega_b * (dw_hat - (omega_frame - omega_n)), dw_hat};
}

inline PllRates<double> eval_pll(const PllState<double>& x, double theta_bus, const GflParams& p, double omega_b)
{
    return eval_pll<double>(x, theta_bus, p, omega_b, 1.0);
}

template <class S>
struct DqVoltage {
    S d;
    S q;
};

template <class S>
DqVoltage<S> gfl_frame_transform(S v_bus, S theta_bus, S theta_hat)
{
    using std::cos;
    using std::sin;
    return {v_bus * cos(theta_bus - theta_hat), v_bus * sin(theta_bus - theta_hat)};
}

/// GFL state layout used by eval_gfl / gfl_power_split.
struct GflState {
    double zeta = 0.0;
    double theta_hat = 0.0;
    double v_dc = 1.0;
    double i_dc = 0.0;
    double x_dc = 0.0;   ///< dc-voltage PI integrator
    double i_d = 0.0;
    double i_q = 0.0;
    double x_v = 0.0;    ///< ac-voltage PI integrator
    double v_m = 1.0;    ///< filter capacitor voltage magnitude
};

struct BusVoltage {
    double v = 1.0;
    double theta = 0.0;
};

/// Full GFL right-hand side f (T sigma' = f) in GflState order, plus the
/// grid injection p = v^d i^d + v^q i^q. Throws DcSourceAbsent when dc droop
/// is requested without a dc source.
struct GflEval {
    GflState f;
    GflState rates;  ///< f divided by the T diagonal
    double p = 0.0;
    double q = 0.0;
    double dw_hat = 0.0;
};
GflEval eval_gfl(const GflState& x, BusVoltage bus, const GflParams& p, double omega_b, double omega_frame = 1.0);

PowerSplit gfl_power_split(const GflState& x, const GflState& x_prime, BusVoltage bus, const GflParams& p,
                           double omega_b);

struct GfmState {
    double alpha = 0.0;
    double omega_v = 0.0;  ///< virtual speed deviation, rad/s (Vsm only)
    double e = 1.0;        ///< internal voltage magnitude
};

struct GfmEval {
    GfmState rates;
    double p = 0.0;
    double q = 0.0;
    DqVoltage<double> v_dq;  ///< bus voltage in the converter frame
};
GfmEval eval_gfm(const GfmState& x, BusVoltage bus, const GfmParams& p);

PowerSplit gfm_power_split(const GfmState& x, const GfmState& x_prime, const GfmParams& p);

/// Returns sigma_hat'.
double eval_ideal_slack(double sigma_hat, double theta_bus, const IdealSlackParams& p);

// ---------------------------------------------------------------------------
// Device interface used by the time-domain engine
// ---------------------------------------------------------------------------

/// System-level quantities a device may read. Index order is fixed: the
/// Jacobian block with respect to signals follows it.
struct Signals {
    double omega_frame = 1.0;
    double omega_coi = 1.0;
    double xi = 0.0;
    double omega_n = 1.0;
    double omega_b = 376.99111843077515;
};
inline constexpr int kSignalCount = 3;

/// d f / d(sigma, v, theta, signals) and d(p, q) / d(same).
struct DeviceJacobian {
    Eigen::MatrixXd f_state;   ///< m x m
    Eigen::MatrixXd f_bus;     ///< m x 2, columns (v, theta)
    Eigen::MatrixXd f_signal;  ///< m x kSignalCount
    Eigen::MatrixXd pq_state;  ///< 2 x m
    Eigen::MatrixXd pq_bus;    ///< 2 x 2
    Eigen::MatrixXd pq_signal; ///< 2 x kSignalCount
};

struct SplitChannels {
    double p_s = 0.0;
    double p_t = 0.0;
    double p = 0.0;
    double p_dissipated = 0.0;
    std::optional<double> p_s_approx;  ///< machines: the omega ~ 1 textbook form
};

enum class UnitClass { Frequency, Power, Angle, Other };

class Device {
public:
    Device(int id, int bus) : id_(id), bus_(bus) {}
    virtual ~Device() = default;

    int id() const noexcept { return id_; }
    /// Bus id, or 0 for devices without a grid connection (AGC).
    int bus() const noexcept { return bus_; }

    virtual std::string_view type() const = 0;
    virtual std::unique_ptr<Device> clone() const = 0;

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& state_names() const noexcept { return names_; }
    /// Diagonal of T_h; zero marks an algebraic row.
    const std::vector<double>& t_diag() const noexcept { return t_; }

    virtual void residual(std::span<const double> sigma, BusVoltage bus, const Signals& s,
                          std::span<double> f) const = 0;
    virtual PowerInjection injection(std::span<const double> sigma, BusVoltage bus, const Signals& s) const = 0;
    virtual void jacobian(std::span<const double> sigma, BusVoltage bus, const Signals& s,
                          DeviceJacobian& jac) const = 0;
    virtual SplitChannels split(std::span<const double> sigma, std::span<const double> sigma_prime,
                                BusVoltage bus, const Signals& s) const = 0;

    /// Back-initialization from a solved operating point; writes sigma and
    /// may adjust internal setpoints so that all derivatives vanish.
    virtual void initialize(BusVoltage bus, PowerInjection pq, const Signals& s, std::span<double> sigma) = 0;

    virtual bool injects_power() const { return bus_ != 0; }
    virtual bool controls_voltage() const { return false; }
    virtual double voltage_setpoint() const { return 1.0; }
    /// Scheduled active power for the initial power flow.
    virtual double dispatch() const { return 0.0; }

    /// Inertia weight in the centre-of-inertia speed and the state holding the speed.
    virtual double coi_weight() const { return 0.0; }
    virtual std::optional<std::size_t> speed_state() const { return std::nullopt; }
    virtual bool provides_xi() const { return false; }

    /// Frequency estimate in pu for devices without a speed state.
    virtual std::optional<double> frequency(std::span<const double> sigma, std::span<const double> sigma_prime,
                                            BusVoltage bus, const Signals& s) const;

    /// Channel names (relative to dev<id>.) that may converge to a common slack value.
    virtual std::vector<std::pair<std::string, UnitClass>> slack_candidates() const { return {}; }

    /// Runtime parameter change; returns false for unknown fields.
    virtual bool set_param(std::string_view field, double value) = 0;

protected:
    void set_layout(std::vector<std::string> names, std::vector<double> t)
    {
        names_ = std::move(names);
        t_ = std::move(t);
    }

private:
    int id_;
    int bus_;
    std::vector<std::string> names_;
    std::vector<double> t_;
};

/// Classical machine with an optional turbine governor and ideal voltage
/// control (reactive output is an algebraic state holding v at v_set).
/// States: delta, omega, [tau_m], q.
class MachineDevice final : public Device {
public:
    MachineDevice(int id, int bus, MachineParams m, std::optional<GovernorParams> gov, double p_set, double v_set);

    std::string_view type() const override { return "machine"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<MachineDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override;
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override;
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool controls_voltage() const override { return true; }
    double voltage_setpoint() const override { return v_set_; }
    double dispatch() const override { return p_set_; }
    double coi_weight() const override { return machine_.M; }
    std::optional<std::size_t> speed_state() const override { return 1; }
    std::vector<std::pair<std::string, UnitClass>> slack_candidates() const override;
    bool set_param(std::string_view field, double value) override;

    const MachineParams& machine() const noexcept { return machine_; }
    const std::optional<GovernorParams>& governor() const noexcept { return gov_; }

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    MachineParams machine_;
    std::optional<GovernorParams> gov_;
    double p_set_;
    double v_set_;
};

/// Integral AGC: state xi.
class AgcDevice final : public Device {
public:
    AgcDevice(int id, AgcParams a);

    std::string_view type() const override { return "agc"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<AgcDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override { return {}; }
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override
    {
        return {};
    }
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool injects_power() const override { return false; }
    bool provides_xi() const override { return true; }
    bool set_param(std::string_view field, double value) override;

    const AgcParams& params() const noexcept { return agc_; }

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    AgcParams agc_;
};

/// Ideal slack source injecting p0 + sigma_hat with ideal voltage control.
/// States: sigma, q.
class IdealSlackDevice final : public Device {
public:
    IdealSlackDevice(int id, int bus, IdealSlackParams p);

    std::string_view type() const override { return "ideal_slack"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<IdealSlackDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override;
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override;
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool controls_voltage() const override { return true; }
    double voltage_setpoint() const override { return params_.v_set; }
    double dispatch() const override { return params_.p0; }
    std::vector<std::pair<std::string, UnitClass>> slack_candidates() const override
    {
        return {{"sigma", UnitClass::Power}};
    }
    bool set_param(std::string_view field, double value) override;

    const IdealSlackParams& params() const noexcept { return params_; }

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    IdealSlackParams params_;
};

/// Grid-forming converter, droop or virtual-synchronous-machine active power
/// control, internal voltage behind x_c regulated to hold v_set.
/// States: alpha, [omega_v], e.
class GfmDevice final : public Device {
public:
    GfmDevice(int id, int bus, GfmParams p, double p_set);

    std::string_view type() const override { return "gfm"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<GfmDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override;
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override;
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool controls_voltage() const override { return true; }
    double voltage_setpoint() const override { return params_.v_set; }
    double dispatch() const override { return p_set_; }
    double coi_weight() const override;
    std::optional<double> frequency(std::span<const double>, std::span<const double>, BusVoltage,
                                    const Signals&) const override;
    std::vector<std::pair<std::string, UnitClass>> slack_candidates() const override
    {
        return {{"omega", UnitClass::Frequency}};
    }
    bool set_param(std::string_view field, double value) override;

    const GfmParams& params() const noexcept { return params_; }
    GfmState unpack(std::span<const double> x) const;

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    GfmParams params_;
    double p_set_;
};

/// Grid-following converter: PLL, dc link, dc/ac PI outer loops, first-order
/// inner current loop and filter capacitor voltage.
/// States follow GflState.
class GflDevice final : public Device {
public:
    GflDevice(int id, int bus, GflParams p);

    std::string_view type() const override { return "gfl"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<GflDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override;
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override;
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool controls_voltage() const override { return true; }
    double voltage_setpoint() const override { return params_.v_set; }
    double dispatch() const override { return params_.p_set; }
    double coi_weight() const override;
    std::optional<double> frequency(std::span<const double>, std::span<const double>, BusVoltage,
                                    const Signals&) const override;
    std::vector<std::pair<std::string, UnitClass>> slack_candidates() const override
    {
        return {{"omega", UnitClass::Frequency}};
    }
    bool set_param(std::string_view field, double value) override;

    const GflParams& params() const noexcept { return params_; }

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    GflParams params_;
};

/// Series RLC load in the dq frame. States: i_re, i_im, vc_re, vc_im.
class RlcLoadDevice final : public Device {
public:
    RlcLoadDevice(int id, int bus, RlcLoadParams p);

    std::string_view type() const override { return "rlc_load"; }
    std::unique_ptr<Device> clone() const override { return std::make_unique<RlcLoadDevice>(*this); }
    void residual(std::span<const double>, BusVoltage, const Signals&, std::span<double>) const override;
    PowerInjection injection(std::span<const double>, BusVoltage, const Signals&) const override;
    void jacobian(std::span<const double>, BusVoltage, const Signals&, DeviceJacobian&) const override;
    SplitChannels split(std::span<const double>, std::span<const double>, BusVoltage, const Signals&) const override;
    void initialize(BusVoltage, PowerInjection, const Signals&, std::span<double>) override;
    bool set_param(std::string_view field, double value) override;

    const RlcLoadParams& params() const noexcept { return params_; }
    /// Equivalent shunt admittance at nominal frequency, for the initial power flow.
    Complex admittance(double omega_b) const;

    template <class S>
    void eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
              S& q) const;

private:
    RlcLoadParams params_;
};

/// Central finite-difference Jacobian of any device, for verification.
DeviceJacobian finite_difference_jacobian(const Device& dev, std::span<const double> sigma, BusVoltage bus,
                                          const Signals& s, double step = 1e-6);

}  // namespace slackdyn
