#include "slackdyn/powerflow.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "slackdyn/error.hpp"

namespace slackdyn {

SlackSpec SlackSpec::single(int bus, double theta_ref)
{
    SlackSpec s;
    s.mode = SlackMode::Single;
    s.reference_bus = bus;
    s.theta_ref = theta_ref;
    return s;
}

SlackSpec SlackSpec::distributed(int reference_bus, std::map<int, double> k, double theta_ref)
{
    SlackSpec s;
    s.mode = SlackMode::Distributed;
    s.reference_bus = reference_bus;
    s.participation = std::move(k);
    s.theta_ref = theta_ref;
    return s;
}

SlackSpec SlackSpec::dynamic_equilibrium(int bus, DroopSlackParams droop, double theta_ref)
{
    SlackSpec s;
    s.mode = SlackMode::DynamicEquilibrium;
    s.reference_bus = bus;
    s.droop = droop;
    s.theta_ref = theta_ref;
    return s;
}

namespace {

Eigen::VectorXd participation_vector(const Network& net, const SlackSpec& spec)
{
    const auto n = static_cast<Eigen::Index>(net.size());
    Eigen::VectorXd k = Eigen::VectorXd::Zero(n);
    if (spec.mode != SlackMode::Distributed) {
        if (!net.has_bus(spec.reference_bus)) {
            throw NoSlackParticipant("slack bus " + std::to_string(spec.reference_bus) + " does not exist");
        }
        k(static_cast<Eigen::Index>(net.index_of(spec.reference_bus))) = 1.0;
        return k;
    }
    if (spec.participation.empty()) {
        throw NoSlackParticipant("distributed slack has no participating generator");
    }
    double sum = 0.0;
    bool any = false;
    for (const auto& [bus, factor] : spec.participation) {
        if (!net.has_bus(bus)) {
            throw NoSlackParticipant("participation refers to unknown bus " + std::to_string(bus));
        }
        if (factor < 0.0 && !spec.allow_negative_participation) {
            throw ConfigurationError("negative participation factor at bus " + std::to_string(bus));
        }
        any = any || factor != 0.0;
        k(static_cast<Eigen::Index>(net.index_of(bus))) += factor;
        sum += factor;
    }
    if (!any) {
        throw NoSlackParticipant("all participation factors are zero");
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigurationError("participation factors must sum to 1 (got " + std::to_string(sum) + ")");
    }
    if (!net.has_bus(spec.reference_bus)) {
        throw ConfigurationError("angle reference bus " + std::to_string(spec.reference_bus) + " does not exist");
    }
    return k;
}

}  // namespace

PowerFlowSolution solve_powerflow(const Network& net, const std::vector<BusInjection>& injections,
                                  const SlackSpec& spec, PowerFlowOptions opts)
{
    const std::size_t n = net.size();
    if (injections.size() != n) {
        throw IndexOutOfRange("injection vector does not match the bus count");
    }
    if (!(opts.tol > 0.0) || opts.max_iter <= 0) {
        throw ConfigurationError("power flow tolerance and iteration limit must be positive");
    }
    if (spec.mode == SlackMode::DynamicEquilibrium && !(spec.droop.K > 0.0)) {
        throw ConfigurationError("droop slack gain K must be positive");
    }
    const Eigen::VectorXd k = participation_vector(net, spec);
    const std::size_t ref = net.index_of(spec.reference_bus);
    const ComplexMatrix y = build_admittance(net);

    std::vector<std::size_t> pq;
    for (std::size_t h = 0; h < n; ++h) {
        if (!injections[h].pv) {
            pq.push_back(h);
        }
    }
    const auto npq = pq.size();
    const auto dim = static_cast<Eigen::Index>(n + npq + 1);
    const auto sigma_col = dim - 1;
    const auto angle_row = dim - 1;

    std::vector<double> v(n), theta(n, spec.theta_ref);
    for (std::size_t h = 0; h < n; ++h) {
        v[h] = injections[h].pv ? injections[h].v_set : 1.0;
    }
    double sigma = 0.0;

    auto mismatch = [&](Eigen::VectorXd& f) {
        const auto s = all_bus_injections(y, v, theta);
        for (std::size_t h = 0; h < n; ++h) {
            const auto& inj = injections[h];
            f(static_cast<Eigen::Index>(h)) = s[h].p - (inj.p_gen + k(static_cast<Eigen::Index>(h)) * sigma - inj.p_load);
        }
        for (std::size_t r = 0; r < npq; ++r) {
            const auto& inj = injections[pq[r]];
            f(static_cast<Eigen::Index>(n + r)) = s[pq[r]].q - (inj.q_gen - inj.q_load);
        }
        if (spec.mode == SlackMode::DynamicEquilibrium) {
            f(angle_row) = spec.droop.K * (spec.theta_ref - theta[ref]) - spec.droop.H * sigma;
        } else {
            f(angle_row) = theta[ref] - spec.theta_ref;
        }
    };

    Eigen::VectorXd f(dim);
    Eigen::MatrixXd jac(dim, dim);
    PowerFlowSolution sol;
    double norm = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (;; ++iter) {
        mismatch(f);
        norm = f.lpNorm<Eigen::Infinity>();
        if (opts.on_iteration) {
            opts.on_iteration(iter, norm);
        }
        if (!std::isfinite(norm)) {
            throw NonConvergence("power flow diverged (non-finite mismatch)", iter, norm);
        }
        if (norm < opts.tol) {
            break;
        }
        if (iter >= opts.max_iter) {
            throw NonConvergence("power flow did not converge in " + std::to_string(opts.max_iter) +
                                     " iterations (mismatch " + std::to_string(norm) + ")",
                                 iter, norm);
        }
        const auto dj = injection_jacobian(y, v, theta);
        jac.setZero();
        const auto ni = static_cast<Eigen::Index>(n);
        jac.topLeftCorner(ni, ni) = dj.dp_dtheta;
        for (std::size_t c = 0; c < npq; ++c) {
            const auto col = static_cast<Eigen::Index>(n + c);
            const auto bus = static_cast<Eigen::Index>(pq[c]);
            jac.block(0, col, ni, 1) = dj.dp_dv.col(bus);
            for (std::size_t r = 0; r < npq; ++r) {
                jac(static_cast<Eigen::Index>(n + r), col) = dj.dq_dv(static_cast<Eigen::Index>(pq[r]), bus);
            }
        }
        for (std::size_t r = 0; r < npq; ++r) {
            jac.block(static_cast<Eigen::Index>(n + r), 0, 1, ni) = dj.dq_dtheta.row(static_cast<Eigen::Index>(pq[r]));
        }
        jac.block(0, sigma_col, ni, 1) = -k;
        if (spec.mode == SlackMode::DynamicEquilibrium) {
            jac(angle_row, static_cast<Eigen::Index>(ref)) = -spec.droop.K;
            jac(angle_row, sigma_col) = -spec.droop.H;
        } else {
            jac(angle_row, static_cast<Eigen::Index>(ref)) = 1.0;
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        if (!(lu.rcond() > 1e-14)) {
            throw SingularJacobian("power flow Jacobian is singular at iteration " + std::to_string(iter));
        }
        const Eigen::VectorXd dx = lu.solve(-f);
        for (std::size_t h = 0; h < n; ++h) {
            theta[h] += dx(static_cast<Eigen::Index>(h));
        }
        for (std::size_t c = 0; c < npq; ++c) {
            v[pq[c]] += dx(static_cast<Eigen::Index>(n + c));
        }
        sigma += dx(sigma_col);
        if (spec.mode != SlackMode::DynamicEquilibrium) {
            theta[ref] = spec.theta_ref;
        }
    }

    const auto s = all_bus_injections(y, v, theta);
    sol.v = v;
    sol.theta = theta;
    sol.sigma_hat = sigma;
    sol.iterations = iter;
    sol.max_mismatch = norm;
    sol.p_gen.resize(n);
    sol.q_gen.resize(n);
    for (std::size_t h = 0; h < n; ++h) {
        sol.p_gen[h] = injections[h].p_gen + k(static_cast<Eigen::Index>(h)) * sigma;
        sol.q_gen[h] = injections[h].pv ? s[h].q + injections[h].q_load : injections[h].q_gen;
        sol.losses += s[h].p;
    }
    return sol;
}

AngleOffsetReport verify_angle_offset_invariance(const Network& net, const std::vector<BusInjection>& injections,
                                                 const SlackSpec& spec_droop, const SlackSpec& spec_single,
                                                 double tol)
{
    AngleOffsetReport rep;
    rep.droop = solve_powerflow(net, injections, spec_droop);
    rep.single = solve_powerflow(net, injections, spec_single);

    const std::size_t n = net.size();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d1 = rep.droop.theta[a] - rep.droop.theta[b];
            const double d2 = rep.single.theta[a] - rep.single.theta[b];
            rep.max_angle_difference_error = std::max(rep.max_angle_difference_error, std::abs(d1 - d2));
        }
    }
    for (const auto& br : net.branches()) {
        const auto f1 = branch_flow(net, br, rep.droop.v, rep.droop.theta);
        const auto f2 = branch_flow(net, br, rep.single.v, rep.single.theta);
        rep.max_branch_flow_error = std::max({rep.max_branch_flow_error, std::abs(f1.first - f2.first),
                                              std::abs(f1.second - f2.second)});
    }
    const std::size_t ref = net.index_of(spec_droop.reference_bus);
    rep.reference_angle_offset = rep.droop.theta[ref] - spec_droop.theta_ref;
    if (spec_droop.mode == SlackMode::DynamicEquilibrium) {
        rep.predicted_offset = -(spec_droop.droop.H / spec_droop.droop.K) * rep.droop.sigma_hat;
    }
    rep.consistent = rep.max_angle_difference_error < tol && rep.max_branch_flow_error < tol;
    return rep;
}

}  // namespace slackdyn
