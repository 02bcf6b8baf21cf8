#include <cmath>
#include <string>

#include "device_impl.hpp"
#include "slackdyn/error.hpp"

namespace slackdyn {

namespace {
constexpr Complex kJ(0.0, 1.0);
}

RlcState eval_rlc_load(const RlcState& x, Complex v_bus, const RlcLoadParams& p, double omega_b)
{
    const Complex di = (v_bus - x.v_c - (p.r + kJ * omega_b * p.l) * x.i_l) / p.l;
    const Complex dv = (x.i_l - kJ * omega_b * p.c * x.v_c) / p.c;
    return {di, dv};
}

LoadSplit load_power_split(const RlcState& x, const RlcState& x_prime, const RlcLoadParams& p)
{
    LoadSplit out;
    const double stored = p.l * (x_prime.i_l * std::conj(x.i_l)).real() + p.c * (x_prime.v_c * std::conj(x.v_c)).real();
    out.split.p_s = 0.0;
    out.split.p_t = -stored;
    out.split.p_total = out.split.p_s + out.split.p_t;
    out.p_dissipated = p.r * std::norm(x.i_l);
    return out;
}

RlcState rlc_steady_state(Complex v_bus, const RlcLoadParams& p, double omega_b)
{
    const Complex z = p.r + kJ * omega_b * p.l + 1.0 / (kJ * omega_b * p.c);
    const Complex i = v_bus / z;
    return {i, i / (kJ * omega_b * p.c)};
}

RlcLoadDevice::RlcLoadDevice(int id, int bus, RlcLoadParams p) : Device(id, bus), params_(p)
{
    if (p.r < 0.0 || !(p.l > 0.0) || !(p.c > 0.0)) {
        throw ConfigurationError("RLC load " + std::to_string(id) + ": requires r >= 0, l > 0, c > 0");
    }
    set_layout({"i_re", "i_im", "vc_re", "vc_im"}, {p.l, p.l, p.c, p.c});
}

Complex RlcLoadDevice::admittance(double omega_b) const
{
    return 1.0 / (params_.r + kJ * omega_b * params_.l + 1.0 / (kJ * omega_b * params_.c));
}

template <class S>
void RlcLoadDevice::eval(std::span<const S> x, S v, S theta, std::span<const S>, const Signals& s, std::span<S> f,
                         S& p, S& q) const
{
    using std::cos;
    using std::sin;
    const double wl = s.omega_b * params_.l;
    const double wc = s.omega_b * params_.c;
    const S vre = v * cos(theta);
    const S vim = v * sin(theta);
    f[0] = vre - x[2] - params_.r * x[0] + wl * x[1];
    f[1] = vim - x[3] - params_.r * x[1] - wl * x[0];
    f[2] = x[0] + wc * x[3];
    f[3] = x[1] - wc * x[2];
    // the load draws V conj(I); injection is its negative
    p = -(vre * x[0] + vim * x[1]);
    q = -(vim * x[0] - vre * x[1]);
}

void RlcLoadDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

PowerInjection RlcLoadDevice::injection(std::span<const double> x, BusVoltage bus, const Signals& s) const
{
    return detail::injection_impl(*this, x, bus, s);
}

void RlcLoadDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

SplitChannels RlcLoadDevice::split(std::span<const double> x, std::span<const double> xp, BusVoltage bus,
                                   const Signals& s) const
{
    const RlcState st{{x[0], x[1]}, {x[2], x[3]}};
    const RlcState rate{{xp[0], xp[1]}, {xp[2], xp[3]}};
    const auto ls = load_power_split(st, rate, params_);
    SplitChannels out;
    out.p_s = ls.split.p_s;
    out.p_t = ls.split.p_t;
    out.p_dissipated = ls.p_dissipated;
    out.p = injection(x, bus, s).p;
    return out;
}

void RlcLoadDevice::initialize(BusVoltage bus, PowerInjection, const Signals& s, std::span<double> x)
{
    const auto st = rlc_steady_state(std::polar(bus.v, bus.theta), params_, s.omega_b);
    x[0] = st.i_l.real();
    x[1] = st.i_l.imag();
    x[2] = st.v_c.real();
    x[3] = st.v_c.imag();
}

bool RlcLoadDevice::set_param(std::string_view field, double value)
{
    if (field == "r") {
        params_.r = value;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------------------

double eval_ideal_slack(double sigma_hat, double theta_bus, const IdealSlackParams& p)
{
    if (p.mode == IdealSlackMode::Integrator) {
        return (p.theta_ref - theta_bus) / p.T;
    }
    return (p.K * (p.theta_ref - theta_bus) - p.H * sigma_hat) / p.T;
}

IdealSlackDevice::IdealSlackDevice(int id, int bus, IdealSlackParams p) : Device(id, bus), params_(p)
{
    if (!(p.T > 0.0)) {
        throw ConfigurationError("ideal slack " + std::to_string(id) + ": requires T > 0");
    }
    if (p.mode == IdealSlackMode::Droop && !(p.K > 0.0)) {
        throw ConfigurationError("droop slack " + std::to_string(id) + ": requires K > 0");
    }
    set_layout({"sigma", "q"}, {p.T, 0.0});
}

template <class S>
void IdealSlackDevice::eval(std::span<const S> x, S v, S theta, std::span<const S>, const Signals&, std::span<S> f,
                            S& p, S& q) const
{
    if (params_.mode == IdealSlackMode::Integrator) {
        f[0] = params_.theta_ref - theta;
    } else {
        f[0] = params_.K * (params_.theta_ref - theta) - params_.H * x[0];
    }
    f[1] = v - params_.v_set;
    p = params_.p0 + x[0];
    q = x[1];
}

void IdealSlackDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s,
                                std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

PowerInjection IdealSlackDevice::injection(std::span<const double> x, BusVoltage bus, const Signals& s) const
{
    return detail::injection_impl(*this, x, bus, s);
}

void IdealSlackDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s,
                                DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

SplitChannels IdealSlackDevice::split(std::span<const double> x, std::span<const double>, BusVoltage bus,
                                      const Signals& s) const
{
    SplitChannels out;
    out.p_s = params_.p0 + x[0];
    out.p_t = 0.0;
    out.p = injection(x, bus, s).p;
    return out;
}

void IdealSlackDevice::initialize(BusVoltage bus, PowerInjection pq, const Signals&, std::span<double> x)
{
    x[0] = pq.p - params_.p0;
    x[1] = pq.q;
    if (params_.mode == IdealSlackMode::Droop) {
        // equilibrium K (theta_ref - theta) = H sigma fixes the reference the device settles to
        params_.theta_ref = bus.theta + params_.H * x[0] / params_.K;
    }
}

bool IdealSlackDevice::set_param(std::string_view field, double value)
{
    if (field == "p0") {
        params_.p0 = value;
    } else if (field == "theta_ref") {
        params_.theta_ref = value;
    } else if (field == "H") {
        params_.H = value;
    } else {
        return false;
    }
    return true;
}

}  // namespace slackdyn
