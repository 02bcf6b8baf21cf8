#include <cmath>
#include <numeric>
#include <string>

#include "device_impl.hpp"
#include "slackdyn/error.hpp"

namespace slackdyn {

PowerSplit machine_power_split(const MachineState<double>& x, const MachineState<double>& x_prime,
                               const MachineParams& p)
{
    PowerSplit s;
    const double dw = x.omega - p.omega_n;
    s.p_s = p.tau_m0 * x.omega - p.D * dw * dw;
    s.p_t = -p.M * x_prime.omega * x.omega;
    s.p_total = s.p_s + s.p_t;
    return s;
}

double coi_speed(std::span<const InertiaSpeed> machines)
{
    double num = 0.0;
    double den = 0.0;
    for (const auto& m : machines) {
        num += m.M * m.omega;
        den += m.M;
    }
    if (machines.empty() || !(den > 0.0)) {
        throw EmptyMachineSet("centre-of-inertia speed needs at least one machine with positive inertia");
    }
    return num / den;
}

GovernorSplit machine_gov_power_split(const MachineState<double>& x, const MachineState<double>& x_prime,
                                      double tau_m, double tau_m_prime, const MachineParams& p,
                                      const GovernorParams& g)
{
    GovernorSplit out;
    const double dw = x.omega - p.omega_n;
    const double p_m0 = (g.mode == GovernorMode::Integral ? tau_m : g.tau_m_ref) * p.omega_n;
    out.approximate.p_s = p_m0 - (p.D + 1.0 / g.R) * dw * dw;
    out.approximate.p_t = -p.M * x_prime.omega - g.T * tau_m_prime;
    out.approximate.p_total = out.approximate.p_s + out.approximate.p_t;
    // omega * tau_e with tau_e taken from the swing equation
    out.p_total_exact = x.omega * (tau_m - p.D * dw - p.M * x_prime.omega);
    out.approximation_residual = out.approximate.p_total - out.p_total_exact;
    return out;
}

double agc_steady_injection(double p_m0, double r_h, double omega_n, double xi)
{
    return p_m0 + r_h * omega_n * xi;
}

std::vector<double> conventional_agc_shares(std::span<const double> droops)
{
    const double total = std::accumulate(droops.begin(), droops.end(), 0.0);
    if (!(total > 0.0)) {
        throw ConfigurationError("AGC shares need positive droop coefficients");
    }
    std::vector<double> r;
    r.reserve(droops.size());
    for (double R : droops) {
        r.push_back(R / total);
    }
    return r;
}

// ---------------------------------------------------------------------------

MachineDevice::MachineDevice(int id, int bus, MachineParams m, std::optional<GovernorParams> gov, double p_set,
                             double v_set)
    : Device(id, bus), machine_(m), gov_(gov), p_set_(p_set), v_set_(v_set)
{
    if (!(m.M > 0.0) || m.D < 0.0 || !(m.tau_e_max > 0.0)) {
        throw ConfigurationError("machine " + std::to_string(id) + ": requires M > 0, D >= 0, tau_e_max > 0");
    }
    if (gov && (!(gov->R > 0.0) || !(gov->T > 0.0))) {
        throw ConfigurationError("governor of machine " + std::to_string(id) + ": requires R > 0, T > 0");
    }
    if (gov) {
        set_layout({"delta", "omega", "tau_m", "q"}, {1.0, m.M, gov->T, 0.0});
    } else {
        set_layout({"delta", "omega", "q"}, {1.0, m.M, 0.0});
    }
}

template <class S>
void MachineDevice::eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s,
                         std::span<S> f, S& p, S& q) const
{
    using std::sin;
    const S& delta = x[0];
    const S& omega = x[1];
    const S tau_m = gov_ ? x[2] : S(machine_.tau_m0);
    const std::size_t iq = gov_ ? 3 : 2;

    const auto rates = eval_machine<S>({delta, omega}, theta, sig[0], tau_m, machine_, s.omega_b);
    f[0] = rates.delta;
    f[1] = machine_.M * rates.omega;
    if (gov_) {
        f[2] = gov_->T * eval_governor<S>(tau_m, omega, *gov_, sig[2], machine_.omega_n);
    }
    f[iq] = v - v_set_;

    p = omega * machine_.tau_e_max * sin(delta - theta);
    q = x[iq];
}

void MachineDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

PowerInjection MachineDevice::injection(std::span<const double> x, BusVoltage bus, const Signals& s) const
{
    return detail::injection_impl(*this, x, bus, s);
}

void MachineDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

SplitChannels MachineDevice::split(std::span<const double> x, std::span<const double> xp, BusVoltage bus,
                                   const Signals& s) const
{
    SplitChannels out;
    const double omega = x[1];
    const double dw = omega - machine_.omega_n;
    const double d_omega = xp[1];
    const double D = machine_.D;
    out.p = injection(x, bus, s).p;
    if (gov_ && gov_->mode == GovernorMode::Droop) {
        const double setpoint = gov_->tau_m_ref + gov_->agc_share * s.xi;
        const double d_eff = D + 1.0 / gov_->R;
        out.p_s = omega * setpoint - omega * d_eff * dw;
        out.p_t = -machine_.M * d_omega * omega - gov_->T * xp[2] * omega;
        out.p_s_approx = setpoint * omega - d_eff * dw * dw;
    } else {
        const double tau_m = gov_ ? x[2] : machine_.tau_m0;
        out.p_s = omega * tau_m - D * omega * dw;
        out.p_t = -machine_.M * d_omega * omega;
        out.p_s_approx = tau_m * omega - D * dw * dw;
    }
    return out;
}

void MachineDevice::initialize(BusVoltage bus, PowerInjection pq, const Signals& s, std::span<double> x)
{
    const double wn = machine_.omega_n;
    const double ratio = pq.p / (wn * machine_.tau_e_max);
    if (!(std::abs(ratio) <= 1.0)) {
        throw DeviceInitInfeasible("machine " + std::to_string(id()) + ": required sin(delta - theta) = " +
                                       std::to_string(ratio) + " is outside [-1, 1]",
                                   id());
    }
    const double tau_m = pq.p / wn;
    x[0] = bus.theta + std::asin(ratio);
    x[1] = wn;
    machine_.tau_m0 = tau_m;
    p_set_ = pq.p;
    if (gov_) {
        x[2] = tau_m;
        if (gov_->mode == GovernorMode::Droop) {
            gov_->tau_m_ref = tau_m - gov_->agc_share * s.xi;
        }
        x[3] = pq.q;
    } else {
        x[2] = pq.q;
    }
}

std::vector<std::pair<std::string, UnitClass>> MachineDevice::slack_candidates() const
{
    return {{"omega", UnitClass::Frequency}};
}

bool MachineDevice::set_param(std::string_view field, double value)
{
    if (field == "D") {
        machine_.D = value;
    } else if (field == "tau_m0") {
        machine_.tau_m0 = value;
    } else if (field == "tau_e_max") {
        machine_.tau_e_max = value;
    } else if (field == "v_set") {
        v_set_ = value;
    } else if (gov_ && field == "tau_m_ref") {
        gov_->tau_m_ref = value;
    } else if (gov_ && field == "R") {
        gov_->R = value;
    } else if (gov_ && field == "agc_share") {
        gov_->agc_share = value;
    } else {
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

AgcDevice::AgcDevice(int id, AgcParams a) : Device(id, 0), agc_(a)
{
    if (!(a.K_o > 0.0)) {
        throw ConfigurationError("AGC gain K_o must be positive");
    }
    set_layout({"xi"}, {1.0});
}

template <class S>
void AgcDevice::eval(std::span<const S>, S, S, std::span<const S> sig, const Signals& s, std::span<S> f, S& p,
                     S& q) const
{
    f[0] = eval_agc<S>(sig[1], agc_, s.omega_n);
    p = S(0.0);
    q = S(0.0);
}

void AgcDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

void AgcDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

void AgcDevice::initialize(BusVoltage, PowerInjection, const Signals&, std::span<double> x)
{
    x[0] = agc_.xi0;
}

bool AgcDevice::set_param(std::string_view field, double value)
{
    if (field == "K_o") {
        agc_.K_o = value;
        return true;
    }
    return false;
}

}  // namespace slackdyn
