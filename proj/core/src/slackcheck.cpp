#include "slackdyn/slackcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "slackdyn/dynsim.hpp"
#include "slackdyn/error.hpp"

namespace slackdyn {

namespace {

constexpr double kSnap = 1e-9;

std::optional<int> device_of(std::string_view channel)
{
    if (!channel.starts_with("dev")) {
        return std::nullopt;
    }
    const auto dot = channel.find('.');
    if (dot == std::string_view::npos || dot == 3) {
        return std::nullopt;
    }
    int id = 0;
    for (char c : channel.substr(3, dot - 3)) {
        if (c < '0' || c > '9') {
            return std::nullopt;
        }
        id = id * 10 + (c - '0');
    }
    return id;
}

std::string_view leaf(std::string_view channel)
{
    const auto dot = channel.find('.');
    return dot == std::string_view::npos ? channel : channel.substr(dot + 1);
}

std::size_t first_index_at(const Trajectory& traj, double t_start)
{
    const auto& t = traj.times();
    return static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t_start - kSnap) - t.begin());
}

/// Picks, per device, one value of a common unit class such that all picks
/// agree within tol. Returns the picks, or nothing when no class works.
std::optional<std::vector<DeviceCapability>> common_value(const std::vector<DeviceCapability>& caps,
                                                          const std::set<int>& devices, double tol)
{
    for (UnitClass u : {UnitClass::Frequency, UnitClass::Power, UnitClass::Angle, UnitClass::Other}) {
        std::map<int, std::vector<const DeviceCapability*>> by_dev;
        for (const auto& c : caps) {
            if (c.settled && c.unit == u) {
                by_dev[c.device].push_back(&c);
            }
        }
        if (by_dev.size() != devices.size()) {
            continue;
        }
        for (const auto& c : caps) {
            if (!c.settled || c.unit != u) {
                continue;
            }
            std::vector<DeviceCapability> pick;
            double lo = c.value;
            double hi = c.value;
            for (const auto& [dev, list] : by_dev) {
                const auto* best = *std::min_element(list.begin(), list.end(), [&](const auto* a, const auto* b) {
                    return std::abs(a->value - c.value) < std::abs(b->value - c.value);
                });
                pick.push_back(*best);
                lo = std::min(lo, best->value);
                hi = std::max(hi, best->value);
            }
            if (hi - lo < tol) {
                return pick;
            }
        }
    }
    return std::nullopt;
}

std::vector<CrossClassMatch> cross_matches(const std::vector<DeviceCapability>& caps, double tol)
{
    std::vector<CrossClassMatch> out;
    for (std::size_t i = 0; i < caps.size(); ++i) {
        for (std::size_t j = i + 1; j < caps.size(); ++j) {
            const auto& a = caps[i];
            const auto& b = caps[j];
            if (a.settled && b.settled && a.device != b.device && a.unit != b.unit &&
                std::abs(a.value - b.value) < tol) {
                out.push_back({a.variable, b.variable, a.value, b.value});
            }
        }
    }
    return out;
}

std::vector<CandidateVar> all_state_candidates(const Trajectory& traj, const std::set<int>& devices)
{
    std::vector<CandidateVar> out;
    for (const auto& ch : traj.channels()) {
        const auto dev = device_of(ch.name);
        if (!dev || !devices.contains(*dev) || ch.kind == ChannelKind::PowerSplit) {
            continue;
        }
        out.push_back({*dev, ch.name, unit_of(ch.name)});
    }
    return out;
}

std::set<int> device_set(const std::vector<CandidateVar>& c)
{
    std::set<int> s;
    for (const auto& v : c) {
        s.insert(v.device);
    }
    return s;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Mean over [t_end - span, t_end] of a piecewise-linear series.
double tail_average(const std::vector<double>& t, const std::vector<double>& x, double span)
{
    const double a = t.back() - span;
    double area = 0.0;
    for (std::size_t i = t.size() - 1; i > 0; --i) {
        const double t0 = t[i - 1];
        const double t1 = t[i];
        if (t1 <= a) {
            break;
        }
        if (t0 >= a) {
            area += 0.5 * (x[i - 1] + x[i]) * (t1 - t0);
        } else {
            const double xa = x[i - 1] + (x[i] - x[i - 1]) * (a - t0) / (t1 - t0);
            area += 0.5 * (xa + x[i]) * (t1 - a);
        }
    }
    return area / span;
}

}  // namespace

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

std::string to_string(const SlackDescriptor& d)
{
    std::string s = d.distribution == Distribution::Distributed ? "distributed" : "centralized";
    s += d.cardinality == Cardinality::MultiVariable ? ", multi-variable" : ", single-variable";
    s += d.temporality == Temporality::Dynamic ? ", dynamic" : ", static";
    s += d.scope == Scope::Local ? ", local" : ", network-wide";
    return s;
}

SystemConfig describe(const SlackSpec& spec)
{
    SystemConfig cfg;
    const bool dynamic = spec.mode == SlackMode::DynamicEquilibrium;
    if (spec.mode == SlackMode::Single || spec.participation.empty()) {
        cfg.devices.push_back({spec.reference_bus, 1, dynamic, true, false});
        return cfg;
    }
    for (const auto& [bus, k] : spec.participation) {
        if (k != 0.0) {
            cfg.devices.push_back({bus, 1, dynamic, true, false});
        }
    }
    return cfg;
}

SystemConfig describe(const DynamicCase& c)
{
    SystemConfig cfg;
    bool agc = false;
    for (const auto& d : c.devices) {
        agc = agc || d->provides_xi();
    }
    for (const auto& dp : c.devices) {
        const Device& d = *dp;
        SlackDeviceInfo info;
        info.id = d.id();
        info.state_dim = static_cast<std::size_t>(
            std::count_if(d.t_diag().begin(), d.t_diag().end(), [](double t) { return t != 0.0; }));
        info.dynamic = info.state_dim > 0;
        info.local = true;
        if (const auto* m = dynamic_cast<const MachineDevice*>(&d)) {
            info.carries_slack_power = true;
            info.local = !(agc && m->governor() && m->governor()->agc_share != 0.0);
        } else if (const auto* g = dynamic_cast<const GflDevice*>(&d)) {
            info.carries_slack_power = g->params().dc_droop;
        } else if (dynamic_cast<const GfmDevice*>(&d) != nullptr ||
                   dynamic_cast<const IdealSlackDevice*>(&d) != nullptr) {
            info.carries_slack_power = true;
        } else if (d.provides_xi()) {
            // the integral controller acts through the governors on a system-wide signal
            info.carries_slack_power = false;
            info.local = false;
        } else {
            continue;
        }
        cfg.devices.push_back(info);
    }
    return cfg;
}

SlackDescriptor classify(const SystemConfig& config)
{
    const auto carriers = std::count_if(config.devices.begin(), config.devices.end(),
                                        [](const auto& d) { return d.carries_slack_power; });
    if (carriers == 0) {
        throw NoSlackDevice("no device carries slack power");
    }
    SlackDescriptor out;
    out.distribution = carriers > 1 ? Distribution::Distributed : Distribution::Centralized;
    out.cardinality = std::any_of(config.devices.begin(), config.devices.end(),
                                  [](const auto& d) { return d.carries_slack_power && d.state_dim > 1; })
                          ? Cardinality::MultiVariable
                          : Cardinality::SingleVariable;
    out.temporality = std::any_of(config.devices.begin(), config.devices.end(),
                                  [](const auto& d) { return d.dynamic; })
                          ? Temporality::Dynamic
                          : Temporality::Static;
    out.scope = std::all_of(config.devices.begin(), config.devices.end(), [](const auto& d) { return d.local; })
                    ? Scope::Local
                    : Scope::NetworkWide;
    return out;
}

// ---------------------------------------------------------------------------
// Capability checks
// ---------------------------------------------------------------------------

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::Strong:
        return "strong";
    case Verdict::Weak:
        return "weak";
    case Verdict::None:
        break;
    }
    return "none";
}

std::string to_string(UnitClass u)
{
    switch (u) {
    case UnitClass::Frequency:
        return "frequency";
    case UnitClass::Power:
        return "power";
    case UnitClass::Angle:
        return "angle";
    case UnitClass::Other:
        break;
    }
    return "other";
}

UnitClass unit_of(std::string_view channel)
{
    const auto name = leaf(channel);
    if (name == "omega" || name == "omega_v" || name == "omega_coi") {
        return UnitClass::Frequency;
    }
    if (name == "sigma" || name == "tau_m" || name == "p" || name == "q" || name == "ps" || name == "pt" ||
        name == "i_dc") {
        return UnitClass::Power;
    }
    if (name == "delta" || name == "alpha" || name == "theta" || name == "theta_hat") {
        return UnitClass::Angle;
    }
    return UnitClass::Other;
}

std::vector<CandidateVar> default_candidates(const Trajectory& traj)
{
    std::vector<CandidateVar> out;
    for (const auto& ch : traj.channels()) {
        const auto dev = device_of(ch.name);
        if (!dev) {
            continue;
        }
        const auto name = leaf(ch.name);
        if (name == "omega") {
            out.push_back({*dev, ch.name, UnitClass::Frequency});
        } else if (name == "sigma") {
            out.push_back({*dev, ch.name, UnitClass::Power});
        }
    }
    return out;
}

CapabilityReport check_strong(const Trajectory& traj, const std::vector<CandidateVar>& candidates, double tol,
                              double window)
{
    if (traj.samples() < 2 || traj.times().back() - traj.times().front() < window - kSnap) {
        throw TrajectoryTooShort("trajectory is shorter than the " + std::to_string(window) + " s check window");
    }
    if (candidates.empty()) {
        throw NoSlackDevice("no candidate slack variables in the trajectory");
    }
    CapabilityReport rep;
    rep.tol = tol;
    rep.window_end = traj.times().back();
    rep.window_start = rep.window_end - window;
    const std::size_t i0 = first_index_at(traj, rep.window_start);

    auto evaluate = [&](const std::vector<CandidateVar>& vars) {
        std::vector<DeviceCapability> caps;
        for (const auto& v : vars) {
            const std::size_t c = traj.index(v.channel);
            DeviceCapability cap;
            cap.device = v.device;
            cap.variable = v.channel;
            cap.unit = v.unit;
            cap.value = traj.at(traj.samples() - 1, c);
            for (std::size_t i = i0; i < traj.samples(); ++i) {
                cap.deviation = std::max(cap.deviation, std::abs(traj.at(i, c) - cap.value));
            }
            cap.settled = std::isfinite(cap.deviation) && cap.deviation < tol;
            caps.push_back(cap);
        }
        return caps;
    };

    const std::set<int> devices = device_set(candidates);
    auto caps = evaluate(candidates);
    auto pick = common_value(caps, devices, tol);
    if (!pick) {
        rep.used_fallback = true;
        caps = evaluate(all_state_candidates(traj, devices));
        pick = common_value(caps, devices, tol);
    }
    if (pick) {
        rep.verdict = Verdict::Strong;
        rep.per_device = *pick;
        double sum = 0.0;
        for (const auto& c : *pick) {
            sum += c.value;
        }
        rep.sigma_hat_estimate = sum / static_cast<double>(pick->size());
        return rep;
    }
    rep.cross_class = cross_matches(caps, tol);
    // report the best-behaved variable of each device
    for (int dev : devices) {
        const DeviceCapability* best = nullptr;
        for (const auto& c : caps) {
            if (c.device == dev && (best == nullptr || c.deviation < best->deviation)) {
                best = &c;
            }
        }
        if (best != nullptr) {
            rep.per_device.push_back(*best);
        }
    }
    return rep;
}

std::optional<double> estimate_period(const std::vector<double>& values, double dt)
{
    const std::size_t n = values.size();
    if (n < 8 || !(dt > 0.0)) {
        return std::nullopt;
    }
    // remove the least-squares line
    const double nd = static_cast<double>(n);
    const double tm = 0.5 * (nd - 1.0);
    const double xm = std::accumulate(values.begin(), values.end(), 0.0) / nd;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) - tm;
        sxy += ti * (values[i] - xm);
        sxx += ti * ti;
    }
    const double slope = sxy / sxx;
    std::vector<double> r(n);
    double energy = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = values[i] - xm - slope * (static_cast<double>(i) - tm);
        energy += r[i] * r[i];
        scale += values[i] * values[i];
    }
    if (!(energy > 1e-24 * (scale + 1e-300))) {
        return std::nullopt;
    }
    const std::size_t max_lag = n / 2;
    std::vector<double> ac(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) {
            s += r[i] * r[i + k];
        }
        ac[k] = s / energy;
    }
    std::size_t k = 1;
    while (k <= max_lag && ac[k] > 0.0) {
        ++k;
    }
    if (k > max_lag) {
        return std::nullopt;
    }
    for (; k + 1 <= max_lag; ++k) {
        if (ac[k] > 0.0 && ac[k] >= ac[k - 1] && ac[k] >= ac[k + 1]) {
            const double a = ac[k - 1];
            const double b = ac[k];
            const double c = ac[k + 1];
            const double den = a - 2.0 * b + c;
            const double shift = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
            return (static_cast<double>(k) + shift) * dt;
        }
    }
    return std::nullopt;
}

CapabilityReport check_weak(const Trajectory& traj, const std::vector<CandidateVar>& candidates, double tol,
                            double window)
{
    if (traj.samples() < 8) {
        throw TrajectoryTooShort("trajectory has too few samples for period detection");
    }
    if (candidates.empty()) {
        throw NoSlackDevice("no candidate slack variables in the trajectory");
    }
    const auto& times = traj.times();
    const double span = times.back() - times.front();
    if (window > span + kSnap) {
        throw TrajectoryTooShort("trajectory is shorter than the requested window");
    }
    CapabilityReport rep;
    rep.tol = tol;
    rep.window_end = times.back();
    rep.window_start = window > 0.0 ? rep.window_end - window : times.front() + 0.5 * span;
    const std::size_t i0 = first_index_at(traj, rep.window_start);
    const std::vector<double> t(times.begin() + static_cast<std::ptrdiff_t>(i0), times.end());
    std::vector<double> steps;
    for (std::size_t i = 1; i < t.size(); ++i) {
        steps.push_back(t[i] - t[i - 1]);
    }
    const double dt = median(steps);
    const double length = t.back() - t.front();

    std::vector<std::vector<double>> series;
    std::vector<double> periods;
    for (const auto& v : candidates) {
        const auto col = traj.column(v.channel);
        series.emplace_back(col.begin() + static_cast<std::ptrdiff_t>(i0), col.end());
        const auto& x = series.back();
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        if (*hi - *lo < tol) {
            continue;
        }
        const auto p = estimate_period(x, dt);
        if (!p || length < 3.0 * *p) {
            throw NoPeriodDetected("channel " + v.channel + " shows no oscillation with three full periods");
        }
        periods.push_back(*p);
    }

    double avg_span = length;
    if (!periods.empty()) {
        const double p = median(periods);
        rep.period = p;
        avg_span = std::floor(length / p + 1e-9) * p;
    }
    std::vector<DeviceCapability> caps;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        DeviceCapability c;
        c.device = candidates[k].device;
        c.variable = candidates[k].channel;
        c.unit = candidates[k].unit;
        c.value = tail_average(t, series[k], avg_span);
        c.settled = std::isfinite(c.value);
        caps.push_back(c);
    }
    rep.window_start = rep.window_end - avg_span;

    const auto pick = common_value(caps, device_set(candidates), tol);
    if (pick) {
        rep.verdict = Verdict::Weak;
        rep.per_device = *pick;
        double sum = 0.0;
        for (const auto& c : *pick) {
            sum += c.value;
        }
        rep.sigma_hat_estimate = sum / static_cast<double>(pick->size());
        for (auto& c : rep.per_device) {
            c.deviation = std::abs(c.value - *rep.sigma_hat_estimate);
        }
    } else {
        rep.per_device = caps;
        rep.cross_class = cross_matches(caps, tol);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Power split audit
// ---------------------------------------------------------------------------

bool PowerSplitAudit::identity_ok() const
{
    return std::all_of(devices.begin(), devices.end(),
                       [&](const DeviceAudit& d) { return d.identity_error <= tol_identity; });
}

bool PowerSplitAudit::steady_ok() const
{
    return std::all_of(devices.begin(), devices.end(),
                       [&](const DeviceAudit& d) { return !d.steady_pt || *d.steady_pt <= tol_steady; });
}

void PowerSplitAudit::ensure() const
{
    for (const auto& d : devices) {
        if (d.identity_error > tol_identity) {
            throw IdentityViolated("device " + std::to_string(d.device) + ": p differs from p_s + p_t by " +
                                       std::to_string(d.identity_error) + " at t = " +
                                       std::to_string(d.identity_worst_t) + " s",
                                   d.device, d.identity_worst_t);
        }
    }
    for (const auto& d : devices) {
        if (d.steady_pt && *d.steady_pt > tol_steady) {
            throw ResidualTransientPower("device " + std::to_string(d.device) + ": |p_t| = " +
                                             std::to_string(*d.steady_pt) + " remains at steady state",
                                         d.device);
        }
    }
}

PowerSplitAudit audit_power_split(const Trajectory& traj, double tol_identity, double tol_steady)
{
    PowerSplitAudit audit;
    audit.tol_identity = tol_identity;
    audit.tol_steady = tol_steady;
    if (traj.empty()) {
        return audit;
    }
    const auto& t = traj.times();
    const double span = t.back() - t.front();
    // state rates well below tol_steady: p_t scales with inertia times a rate
    audit.steady_from = detect_steady_state(traj, 1e-2 * tol_steady, std::min(2.0, 0.25 * span));
    const std::size_t i_ss = audit.steady_from ? first_index_at(traj, *audit.steady_from) : t.size();

    for (const auto& ch : traj.channels()) {
        const auto dev = device_of(ch.name);
        if (!dev || leaf(ch.name) != "ps") {
            continue;
        }
        const std::string pre = "dev" + std::to_string(*dev) + ".";
        const std::size_t c_ps = traj.index(pre + "ps");
        const std::size_t c_pt = traj.index(pre + "pt");
        const std::size_t c_p = traj.index(pre + "p");
        const auto c_pd = traj.find(pre + "pd");
        const auto c_ap = traj.find(pre + "ps_approx");

        DeviceAudit a;
        a.device = *dev;
        double max_ps = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double pd = c_pd ? traj.at(i, *c_pd) : 0.0;
            const double err = std::abs(traj.at(i, c_p) - (traj.at(i, c_ps) + traj.at(i, c_pt) - pd));
            if (!(err <= a.identity_error)) {
                a.identity_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
                a.identity_worst_t = t[i];
            }
            max_ps = std::max(max_ps, std::abs(traj.at(i, c_ps)));
            if (c_ap) {
                a.approx_gap = std::max(a.approx_gap.value_or(0.0), std::abs(traj.at(i, c_ps) - traj.at(i, *c_ap)));
            }
        }
        if (c_pd) {
            a.passive_ps_zero = max_ps == 0.0;
        }
        if (i_ss < t.size()) {
            double worst = 0.0;
            for (std::size_t i = i_ss; i < t.size(); ++i) {
                worst = std::max(worst, std::abs(traj.at(i, c_pt)));
            }
            a.steady_pt = worst;
        }
        audit.devices.push_back(a);
    }
    return audit;
}

}  // namespace slackdyn
