#include <cmath>
#include <string>

#include "device_impl.hpp"
#include "slackdyn/error.hpp"

namespace slackdyn {

namespace {

enum GflIndex : std::size_t { kZeta, kThetaHat, kVdc, kIdc, kXdc, kId, kIq, kXv, kVm, kGflSize };

std::array<double, kGflSize> pack(const GflState& s)
{
    return {s.zeta, s.theta_hat, s.v_dc, s.i_dc, s.x_dc, s.i_d, s.i_q, s.x_v, s.v_m};
}

GflState unpack_gfl(std::span<const double> x)
{
    return {x[kZeta], x[kThetaHat], x[kVdc], x[kIdc], x[kXdc], x[kId], x[kIq], x[kXv], x[kVm]};
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid-following converter
// ---------------------------------------------------------------------------

GflDevice::GflDevice(int id, int bus, GflParams p) : Device(id, bus), params_(p)
{
    const std::string who = "GFL " + std::to_string(id);
    if (p.dc_droop && !p.dc_source) {
        throw DcSourceAbsent(who + ": dc droop requested but the dc side has no controllable source");
    }
    if (!(p.ki_pll > 0.0) || !(p.dc.c_dc > 0.0)) {
        throw ConfigurationError(who + ": requires ki_pll > 0 and c_dc > 0");
    }
    if (p.dc_droop && (!(p.R_dc > 0.0) || !(p.T_dc > 0.0))) {
        throw ConfigurationError(who + ": dc droop requires R_dc > 0 and T_dc > 0");
    }
    if (!(p.T_i > 0.0) || !(p.T_vm > 0.0)) {
        throw ConfigurationError(who + ": inner loop time constants must be positive");
    }
    set_layout({"zeta", "theta_hat", "v_dc", "i_dc", "x_dc", "i_d", "i_q", "x_v", "v_m"},
               {1.0, 1.0, p.dc.c_dc, p.dc_droop ? p.T_dc : 1.0, 1.0, p.T_i, p.T_i, 1.0, p.T_vm});
}

template <class S>
void GflDevice::eval(std::span<const S> x, S v, S theta, std::span<const S> sig, const Signals& s, std::span<S> f,
                     S& p, S& q) const
{
    const auto& c = params_;
    const auto pll = eval_pll<S>({x[kZeta], x[kThetaHat]}, theta, c, s.omega_b, sig[0], s.omega_n);
    const auto vdq = gfl_frame_transform<S>(v, theta, x[kThetaHat]);
    const S& v_dc = x[kVdc];
    const S& i_d = x[kId];
    const S& i_q = x[kIq];

    const S id_ref = x[kXdc] + c.kp_dc * (v_dc - c.dc.v_dc_ref);
    const S iq_ref = -(x[kXv] + c.kp_v * (c.v_set - v));

    f[kZeta] = pll.d_zeta;
    f[kThetaHat] = pll.d_theta_hat;
    f[kXdc] = c.ki_dc * (v_dc - c.dc.v_dc_ref);
    f[kId] = id_ref - i_d;
    f[kIq] = iq_ref - i_q;
    f[kXv] = c.ki_v * (c.v_set - v);
    f[kVm] = v - x[kVm];
    f[kIdc] = c.dc_droop ? S(c.i_dc0 - pll.dw_hat / c.R_dc - x[kIdc]) : S(0.0);

    p = vdq.d * i_d + vdq.q * i_q;
    q = vdq.q * i_d - vdq.d * i_q;

    const S stored_ac = c.l_f * (i_d * f[kId] + i_q * f[kIq]) / c.T_i + c.c_f * x[kVm] * f[kVm] / c.T_vm;
    f[kVdc] = (v_dc * x[kIdc] - c.dc.g_dc * v_dc * v_dc - p - c.r_f * (i_d * i_d + i_q * i_q) - stored_ac) / v_dc;
}

void GflDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

PowerInjection GflDevice::injection(std::span<const double> x, BusVoltage bus, const Signals& s) const
{
    return detail::injection_impl(*this, x, bus, s);
}

void GflDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

SplitChannels GflDevice::split(std::span<const double> x, std::span<const double> xp, BusVoltage bus,
                               const Signals& s) const
{
    const auto& c = params_;
    const auto st = unpack_gfl(x);
    const auto rt = unpack_gfl(xp);
    const double i2 = st.i_d * st.i_d + st.i_q * st.i_q;
    const double stored = c.dc.c_dc * rt.v_dc * st.v_dc + c.l_f * (rt.i_d * st.i_d + rt.i_q * st.i_q) +
                          c.c_f * rt.v_m * st.v_m;
    const double losses = c.dc.g_dc * st.v_dc * st.v_dc + c.r_f * i2;
    SplitChannels out;
    if (c.dc_droop) {
        const double dw_hat = c.ki_pll * st.zeta + c.kp_pll * rt.zeta;
        out.p_s = st.v_dc * c.i_dc0 - st.v_dc / c.R_dc * dw_hat - losses;
        out.p_t = -(st.v_dc * c.T_dc * rt.i_dc + stored);
    } else {
        out.p_s = st.v_dc * st.i_dc - losses;
        out.p_t = -stored;
    }
    out.p = injection(x, bus, s).p;
    return out;
}

void GflDevice::initialize(BusVoltage bus, PowerInjection pq, const Signals&, std::span<double> x)
{
    auto& c = params_;
    GflState st;
    st.zeta = 0.0;
    st.theta_hat = bus.theta;
    st.v_dc = c.dc.v_dc_ref;
    st.i_d = pq.p / bus.v;
    st.i_q = -pq.q / bus.v;
    st.x_dc = st.i_d;
    st.x_v = -st.i_q;
    st.v_m = bus.v;
    const double i2 = st.i_d * st.i_d + st.i_q * st.i_q;
    st.i_dc = (pq.p + c.dc.g_dc * st.v_dc * st.v_dc + c.r_f * i2) / st.v_dc;
    c.i_dc0 = st.i_dc;
    c.p_set = pq.p;
    c.v_set = bus.v;
    const auto packed = pack(st);
    std::copy(packed.begin(), packed.end(), x.begin());
}

double GflDevice::coi_weight() const
{
    return 0.0;
}

std::optional<double> GflDevice::frequency(std::span<const double> x, std::span<const double>, BusVoltage bus,
                                           const Signals& s) const
{
    const double dw_hat = params_.ki_pll * x[kZeta] + params_.kp_pll * (bus.theta - x[kThetaHat]);
    return s.omega_n + dw_hat;
}

bool GflDevice::set_param(std::string_view field, double value)
{
    if (field == "i_dc0") {
        params_.i_dc0 = value;
    } else if (field == "v_set") {
        params_.v_set = value;
    } else if (field == "R_dc") {
        params_.R_dc = value;
    } else {
        return false;
    }
    return true;
}

GflEval eval_gfl(const GflState& x, BusVoltage bus, const GflParams& p, double omega_b, double omega_frame)
{
    const GflDevice dev(0, 1, p);
    Signals s;
    s.omega_b = omega_b;
    s.omega_frame = omega_frame;
    const auto packed = pack(x);
    std::array<double, kGflSize> f{};
    dev.residual(packed, bus, s, f);
    const auto pq = dev.injection(packed, bus, s);
    const auto rates = detail::rates_from_residual(dev, f);
    GflEval out;
    out.f = unpack_gfl(f);
    out.rates = unpack_gfl(rates);
    out.p = pq.p;
    out.q = pq.q;
    out.dw_hat = p.ki_pll * x.zeta + p.kp_pll * (bus.theta - x.theta_hat);
    return out;
}

PowerSplit gfl_power_split(const GflState& x, const GflState& x_prime, BusVoltage bus, const GflParams& p,
                           double omega_b)
{
    const GflDevice dev(0, 1, p);
    Signals s;
    s.omega_b = omega_b;
    const auto ch = dev.split(pack(x), pack(x_prime), bus, s);
    return {ch.p_s, ch.p_t, ch.p_s + ch.p_t};
}

// ---------------------------------------------------------------------------
// Grid-forming converter
// ---------------------------------------------------------------------------

GfmDevice::GfmDevice(int id, int bus, GfmParams p, double p_set) : Device(id, bus), params_(p), p_set_(p_set)
{
    const std::string who = "GFM " + std::to_string(id);
    if (!(p.D_alpha > 0.0)) {
        throw ConfigurationError(who + ": requires D_alpha > 0");
    }
    if (p.variant == GfmVariant::Vsm && !(p.M_alpha > 0.0)) {
        throw ConfigurationError(who + ": virtual synchronous machine variant requires M_alpha > 0");
    }
    if (!(p.x_c > 0.0)) {
        throw ConfigurationError(who + ": coupling reactance must be positive");
    }
    if (p.variant == GfmVariant::Droop) {
        set_layout({"alpha", "e"}, {p.D_alpha, 0.0});
    } else {
        set_layout({"alpha", "omega_v", "e"}, {1.0, p.M_alpha, 0.0});
    }
}

GfmState GfmDevice::unpack(std::span<const double> x) const
{
    if (params_.variant == GfmVariant::Droop) {
        return {x[0], 0.0, x[1]};
    }
    return {x[0], x[1], x[2]};
}

template <class S>
void GfmDevice::eval(std::span<const S> x, S v, S theta, std::span<const S>, const Signals&, std::span<S> f, S& p,
                     S& q) const
{
    const auto& c = params_;
    const S& alpha = x[0];
    const S& e = c.variant == GfmVariant::Droop ? x[1] : x[2];
    // bus voltage in the frame of the converter angle
    const auto vdq = gfl_frame_transform<S>(v, theta, alpha);
    const S i_d = -vdq.q / c.x_c;
    const S i_q = -(e - vdq.d) / c.x_c;
    p = vdq.d * i_d + vdq.q * i_q;
    q = vdq.q * i_d - vdq.d * i_q;
    if (c.variant == GfmVariant::Droop) {
        f[0] = c.p_ref - p - c.H_alpha * alpha;
        f[1] = v - c.v_set;
    } else {
        f[0] = x[1];
        f[1] = c.p_ref - p - c.D_alpha * x[1] - c.H_alpha * alpha;
        f[2] = v - c.v_set;
    }
}

void GfmDevice::residual(std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f) const
{
    detail::residual_impl(*this, x, bus, s, f);
}

PowerInjection GfmDevice::injection(std::span<const double> x, BusVoltage bus, const Signals& s) const
{
    return detail::injection_impl(*this, x, bus, s);
}

void GfmDevice::jacobian(std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac) const
{
    detail::jacobian_impl(*this, x, bus, s, jac);
}

SplitChannels GfmDevice::split(std::span<const double> x, std::span<const double> xp, BusVoltage bus,
                               const Signals& s) const
{
    const auto ps = gfm_power_split(unpack(x), unpack(xp), params_);
    SplitChannels out;
    out.p_s = ps.p_s;
    out.p_t = ps.p_t;
    out.p = injection(x, bus, s).p;
    return out;
}

void GfmDevice::initialize(BusVoltage bus, PowerInjection pq, const Signals&, std::span<double> x)
{
    const Complex vbus = std::polar(bus.v, bus.theta);
    const Complex current = std::conj(Complex(pq.p, pq.q) / vbus);
    const Complex e = vbus + Complex(0.0, params_.x_c) * current;
    const double alpha = std::arg(e);
    params_.p_ref = pq.p + params_.H_alpha * alpha;
    params_.v_set = bus.v;
    p_set_ = pq.p;
    x[0] = alpha;
    if (params_.variant == GfmVariant::Droop) {
        x[1] = std::abs(e);
    } else {
        x[1] = 0.0;
        x[2] = std::abs(e);
    }
}

double GfmDevice::coi_weight() const
{
    return params_.variant == GfmVariant::Vsm ? params_.M_alpha : params_.D_alpha;
}

std::optional<double> GfmDevice::frequency(std::span<const double> x, std::span<const double> xp, BusVoltage,
                                           const Signals& s) const
{
    const double dev = params_.variant == GfmVariant::Vsm ? x[1] : xp[0];
    return s.omega_n + dev / s.omega_b;
}

bool GfmDevice::set_param(std::string_view field, double value)
{
    if (field == "p_ref") {
        params_.p_ref = value;
    } else if (field == "H_alpha") {
        params_.H_alpha = value;
    } else if (field == "v_set") {
        params_.v_set = value;
    } else {
        return false;
    }
    return true;
}

GfmEval eval_gfm(const GfmState& x, BusVoltage bus, const GfmParams& p)
{
    const GfmDevice dev(0, 1, p, 0.0);
    std::vector<double> packed;
    if (p.variant == GfmVariant::Droop) {
        packed = {x.alpha, x.e};
    } else {
        packed = {x.alpha, x.omega_v, x.e};
    }
    std::vector<double> f(packed.size());
    const Signals s;
    dev.residual(packed, bus, s, f);
    const auto pq = dev.injection(packed, bus, s);
    const auto rates = detail::rates_from_residual(dev, f);
    GfmEval out;
    out.rates = dev.unpack(rates);
    out.p = pq.p;
    out.q = pq.q;
    out.v_dq = gfl_frame_transform<double>(bus.v, bus.theta, x.alpha);
    return out;
}

PowerSplit gfm_power_split(const GfmState& x, const GfmState& x_prime, const GfmParams& p)
{
    // the dc source is dispatched so that p_dc - p_losses equals p_ref
    PowerSplit s;
    if (p.variant == GfmVariant::Droop) {
        s.p_s = p.p_ref - p.H_alpha * x.alpha;
        s.p_t = -p.D_alpha * x_prime.alpha;
    } else {
        s.p_s = p.p_ref - p.H_alpha * x.alpha - p.D_alpha * x.omega_v;
        s.p_t = -p.M_alpha * x_prime.omega_v;
    }
    s.p_total = s.p_s + s.p_t;
    return s;
}

}  // namespace slackdyn
