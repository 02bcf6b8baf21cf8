#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slackdyn/devices.hpp"
#include "slackdyn/powerflow.hpp"
#include "slackdyn/trajectory.hpp"

namespace slackdyn {

struct DynamicCase;

enum class Distribution { Centralized, Distributed };
enum class Cardinality { SingleVariable, MultiVariable };
enum class Temporality { Static, Dynamic };
enum class Scope { Local, NetworkWide };

struct SlackDescriptor {
    Distribution distribution = Distribution::Centralized;
    Cardinality cardinality = Cardinality::SingleVariable;
    Temporality temporality = Temporality::Static;
    Scope scope = Scope::NetworkWide;

    bool operator==(const SlackDescriptor&) const = default;
};

std::string to_string(const SlackDescriptor& d);

/// What the classifier needs to know about one device.
struct SlackDeviceInfo {
    int id = 0;
    std::size_t state_dim = 1;        ///< m_h
    bool dynamic = false;             ///< any nonzero row of T_h
    bool carries_slack_power = true;
    bool local = true;                ///< acts on its own bus rather than a shared reference or signal
};

struct SystemConfig {
    std::vector<SlackDeviceInfo> devices;
};

/// Slack configuration of a static power-flow formulation.
SystemConfig describe(const SlackSpec& spec);
/// Slack configuration of a dynamic case, read off its devices.
SystemConfig describe(const DynamicCase& c);

/// Throws NoSlackDevice when no device carries slack power.
SlackDescriptor classify(const SystemConfig& config);

enum class Verdict { Strong, Weak, None };
std::string to_string(Verdict v);

struct CandidateVar {
    int device = 0;
    std::string channel;  ///< full trajectory column name
    UnitClass unit = UnitClass::Other;
};

/// dev<id>.omega as frequency, dev<id>.sigma as power.
std::vector<CandidateVar> default_candidates(const Trajectory& traj);
std::string to_string(UnitClass u);
/// Unit class guessed from a channel name.
UnitClass unit_of(std::string_view channel);

struct DeviceCapability {
    int device = 0;
    std::string variable;
    UnitClass unit = UnitClass::Other;
    double value = 0.0;       ///< terminal value (strong) or period average (weak)
    double deviation = 0.0;   ///< max distance from value over the window (strong) or from the common value (weak)
    bool settled = false;
};

struct CrossClassMatch {
    std::string a;
    std::string b;
    double value_a = 0.0;
    double value_b = 0.0;
};

struct CapabilityReport {
    Verdict verdict = Verdict::None;
    std::optional<double> sigma_hat_estimate;
    std::vector<DeviceCapability> per_device;
    double window_start = 0.0;
    double window_end = 0.0;
    double tol = 0.0;
    std::optional<double> period;        ///< weak check only
    bool used_fallback = false;          ///< defaults failed, all states were searched
    std::vector<CrossClassMatch> cross_class;
};

/// Terminal agreement over the last `window` seconds. Throws TrajectoryTooShort.
CapabilityReport check_strong(const Trajectory& traj, const std::vector<CandidateVar>& candidates,
                              double tol = 1e-4, double window = 2.0);

/// Period-averaged agreement. The analysis window is the last `window`
/// seconds, or the second half of the trajectory when window <= 0.
/// Throws NoPeriodDetected when a non-constant candidate shows fewer than three periods.
CapabilityReport check_weak(const Trajectory& traj, const std::vector<CandidateVar>& candidates, double tol = 1e-4,
                            double window = 0.0);

/// Dominant period of a uniformly sampled series from the autocorrelation peak.
std::optional<double> estimate_period(const std::vector<double>& values, double dt);

struct DeviceAudit {
    int device = 0;
    double identity_error = 0.0;
    double identity_worst_t = 0.0;
    std::optional<double> steady_pt;      ///< max |p_t| after the steady-state time
    std::optional<double> approx_gap;     ///< machines: max |p_s - p_s_approx|
    bool passive_ps_zero = false;         ///< devices with a dissipation channel: p_s identically zero
};

struct PowerSplitAudit {
    std::vector<DeviceAudit> devices;
    std::optional<double> steady_from;
    double tol_identity = 0.0;
    double tol_steady = 0.0;

    bool identity_ok() const;
    bool steady_ok() const;
    /// Throws IdentityViolated or ResidualTransientPower.
    void ensure() const;
};

/// The steady state starts once every differential state moves slower than
/// tol_steady / 100 per second.
PowerSplitAudit audit_power_split(const Trajectory& traj, double tol_identity = 1e-9, double tol_steady = 1e-4);

}  // namespace slackdyn
