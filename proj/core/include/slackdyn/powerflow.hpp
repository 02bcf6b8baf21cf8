#pragma once

#include <functional>
#include <map>
#include <vector>

#include "slackdyn/netcore.hpp"

namespace slackdyn {

/// Scheduled quantities at one bus. Generation and load are kept apart so the
/// solution can report per-generator slack pickup.
struct BusInjection {
    double p_gen = 0.0;   ///< scheduled generation p°
    double q_gen = 0.0;   ///< used only at PQ buses
    double p_load = 0.0;
    double q_load = 0.0;
    bool pv = false;      ///< voltage magnitude held at v_set, reactive output free
    double v_set = 1.0;
};

enum class SlackMode { Single, Distributed, DynamicEquilibrium };

struct DroopSlackParams {
    double K = 1.0;
    double H = 0.0;
    double T = 1.0;
};

struct SlackSpec {
    SlackMode mode = SlackMode::Single;
    int reference_bus = 0;
    double theta_ref = 0.0;
    std::map<int, double> participation;  ///< bus id -> k, Distributed mode
    DroopSlackParams droop;               ///< DynamicEquilibrium mode
    bool allow_negative_participation = false;

    static SlackSpec single(int bus, double theta_ref = 0.0);
    static SlackSpec distributed(int reference_bus, std::map<int, double> k, double theta_ref = 0.0);
    static SlackSpec dynamic_equilibrium(int bus, DroopSlackParams droop, double theta_ref = 0.0);
};

struct PowerFlowSolution {
    std::vector<double> v;
    std::vector<double> theta;
    double sigma_hat = 0.0;
    std::vector<double> p_gen;  ///< active generation per bus
    std::vector<double> q_gen;  ///< reactive generation per bus
    double losses = 0.0;
    int iterations = 0;
    double max_mismatch = 0.0;
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 20;
    /// Called with (iteration, max mismatch) before each convergence test.
    std::function<void(int, double)> on_iteration;
};

/// Newton power flow. One angle equation (reference angle or droop
/// equilibrium) plus one slack unknown sigma_hat distributed through the
/// participation factors; all n active-power rows are kept.
PowerFlowSolution solve_powerflow(const Network& net, const std::vector<BusInjection>& injections,
                                  const SlackSpec& spec, PowerFlowOptions opts = {});

struct AngleOffsetReport {
    PowerFlowSolution droop;
    PowerFlowSolution single;
    double max_angle_difference_error = 0.0;
    double max_branch_flow_error = 0.0;
    double reference_angle_offset = 0.0;      ///< theta_i(droop) - theta_ref
    double predicted_offset = 0.0;            ///< -(H/K) sigma_hat
    bool consistent = false;                  ///< differences and flows agree to tol
};

/// Solves the same case under a droop slack (H != 0 allowed) and a single
/// slack and compares everything that does not depend on the angle reference.
AngleOffsetReport verify_angle_offset_invariance(const Network& net, const std::vector<BusInjection>& injections,
                                                 const SlackSpec& spec_droop, const SlackSpec& spec_single,
                                                 double tol = 1e-8);

}  // namespace slackdyn
