#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slackdyn/devices.hpp"
#include "slackdyn/error.hpp"
#include "slackdyn/netcore.hpp"
#include "slackdyn/powerflow.hpp"
#include "slackdyn/trajectory.hpp"

namespace slackdyn {

/// Constant-power load, pu consumed.
struct StaticLoad {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
};

/// Everything the time-domain engine needs: network, static loads and devices.
/// Devices are owned and deep-copied with the case.
struct DynamicCase {
    std::string name;
    Network network;
    std::vector<StaticLoad> loads;
    std::vector<std::unique_ptr<Device>> devices;
    /// Slack choice for the initial power flow; chosen from the devices when empty.
    std::optional<SlackSpec> initial_slack;
    double omega_n = 1.0;

    DynamicCase() = default;
    DynamicCase(const DynamicCase& other);
    DynamicCase& operator=(const DynamicCase& other);
    DynamicCase(DynamicCase&&) noexcept = default;
    DynamicCase& operator=(DynamicCase&&) noexcept = default;

    const Device* find_device(int id) const;
};

/// Static problem behind a dynamic case: RLC loads become shunts, sources
/// become PV or PQ injections at their dispatch.
struct PowerFlowProblem {
    Network network;
    std::vector<BusInjection> injections;
    SlackSpec slack;
};
PowerFlowProblem static_problem(const DynamicCase& c);

enum class EventKind { ScaleLoad, SetParam, DisconnectDevice };

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::ScaleLoad;
    int bus = 0;          ///< ScaleLoad
    double factor = 1.0;  ///< ScaleLoad
    int device = 0;       ///< SetParam, DisconnectDevice
    std::string field;    ///< SetParam
    double value = 0.0;   ///< SetParam

    static Event scale_load(double t, int bus, double factor);
    static Event set_param(double t, int device, std::string field, double value);
    static Event disconnect(double t, int device);
};

struct Scenario {
    std::string label;
    std::vector<Event> events;
    double t_end = 20.0;
    double dt = 0.01;
};

/// How the phasor frame rotates. Nominal: synchronous at omega_n. Coi: with
/// the centre-of-inertia speed of the connected machines.
enum class FrameMode { Nominal, Coi };

struct SimOptions {
    double newton_tol = 1e-8;
    int max_iter = 20;
    double init_tol = 1e-8;
    /// Replace the first trapezoidal step after an event by two backward
    /// Euler half steps, which damps the numerical ringing of stiff modes.
    bool damp_after_events = true;
};

/// x: all device states back to back (device order, each in its own layout).
/// y: bus voltage magnitudes then bus angles, file order.
/// x_prime: derivatives of x at t; zero on algebraic device rows.
struct SystemState {
    double t = 0.0;
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd x_prime;
};

struct BusMismatch {
    int bus = 0;
    double dp = 0.0;
    double dq = 0.0;
};

class StepNewtonDiverged : public Error {
public:
    StepNewtonDiverged(const std::string& msg, double t, int iterations, std::vector<BusMismatch> ranking)
        : Error(msg), t_(t), iterations_(iterations), ranking_(std::move(ranking))
    {
    }
    double t() const noexcept { return t_; }
    int iterations() const noexcept { return iterations_; }
    /// Buses sorted by decreasing |dp| + |dq| at the last Newton iterate.
    const std::vector<BusMismatch>& ranking() const noexcept { return ranking_; }

private:
    double t_;
    int iterations_;
    std::vector<BusMismatch> ranking_;
};

struct StepFailure {
    double t = 0.0;
    int iterations = 0;
    std::string message;
    std::vector<BusMismatch> ranking;
};

struct RunResult {
    Trajectory trajectory;
    std::optional<StepFailure> failure;
    PowerFlowSolution initial_powerflow;
    bool completed() const noexcept { return !failure.has_value(); }
};

class Simulator {
public:
    explicit Simulator(DynamicCase c, SimOptions opts = {});

    /// Power flow, device back-initialization and the equilibrium check.
    /// Throws PowerFlowFailed or DeviceInitInfeasible.
    SystemState initialize();

    /// Trapezoidal step residual at candidate (x, y) starting from prev.
    Eigen::VectorXd assemble_residual(const SystemState& prev, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                      double dt) const;
    Eigen::MatrixXd assemble_jacobian(const SystemState& prev, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                      double dt) const;

    /// One implicit trapezoidal step. Throws StepNewtonDiverged.
    SystemState step(const SystemState& s, double dt) const;
    /// Two backward Euler half steps covering dt.
    SystemState step_damped(const SystemState& s, double dt) const;

    /// Applies the event and re-solves the algebraic unknowns with the differential states frozen.
    void apply_event(const Event& e, SystemState& s);

    RunResult run(const Scenario& scenario);

    Trajectory make_trajectory() const;
    void record(Trajectory& traj, const SystemState& s) const;

    const DynamicCase& model() const noexcept { return case_; }
    FrameMode frame() const noexcept { return frame_; }
    const PowerFlowSolution& initial_powerflow() const noexcept { return pf_; }
    std::size_t state_size() const noexcept { return nx_; }
    std::size_t offset(std::size_t device) const { return offsets_[device]; }
    bool disconnected(std::size_t device) const { return off_[device]; }

    /// Signals seen by the devices at (x, y).
    Signals signals(const Eigen::VectorXd& x) const;
    /// Reported system frequency: machine COI, else GFM, else largest GFL.
    double reported_frequency(const SystemState& s) const;

private:
    struct Newton {
        Eigen::VectorXd z;
        int iterations = 0;
        bool converged = false;
        double mismatch = 0.0;
    };
    /// AlgebraicOnly freezes the differential states and solves the rest.
    enum class StepRule { Trapezoidal, BackwardEuler, AlgebraicOnly };
    SystemState advance(const SystemState& s, double dt, StepRule rule) const;
    Newton solve(const SystemState& prev, Eigen::VectorXd z, double dt, StepRule rule) const;
    Eigen::VectorXd residual_z(const SystemState& prev, const Eigen::VectorXd& z, double dt, StepRule rule) const;
    Eigen::MatrixXd jacobian_z(const SystemState& prev, const Eigen::VectorXd& z, double dt, StepRule rule) const;
    Eigen::VectorXd device_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
    Eigen::VectorXd rates(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
    /// Active then reactive balance per bus: device injections minus loads minus network flows.
    Eigen::VectorXd network_rows(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
    std::vector<std::pair<std::size_t, double>> coi_terms() const;
    std::vector<BusMismatch> mismatch_ranking(const Eigen::VectorXd& z) const;
    BusVoltage bus_of(std::size_t device, const Eigen::VectorXd& y) const;

    DynamicCase case_;
    SimOptions opts_;
    ComplexMatrix ybus_;
    PowerFlowSolution pf_;
    FrameMode frame_ = FrameMode::Nominal;
    std::size_t n_ = 0;
    std::size_t nx_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> bus_index_;  ///< per device; unused for devices without a bus
    std::vector<bool> off_;
    std::vector<double> p_load_;
    std::vector<double> q_load_;
    std::vector<double> tdiag_;
    std::vector<std::size_t> machines_;
    std::optional<std::size_t> xi_index_;
};

RunResult run(const DynamicCase& c, const Scenario& scenario, SimOptions opts = {});

/// Earliest time after which every differential state moves slower than tol
/// per second (angle states: their rate changes slower than tol per second),
/// provided at least `window` seconds follow it.
std::optional<double> detect_steady_state(const Trajectory& traj, double tol, double window);

}  // namespace slackdyn
