#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles/two_bus_newton.hpp"
#include "slackdyn/error.hpp"
#include "slackdyn/powerflow.hpp"

using namespace slackdyn;

namespace {

Network line(double r, double x, double b_sh = 0.0)
{
    return Network({Bus{1}, Bus{2}}, {Branch{1, 2, r, x, b_sh}});
}

std::vector<BusInjection> two_bus_injections(double pl, double ql)
{
    BusInjection g;
    g.pv = true;
    g.v_set = 1.0;
    BusInjection l;
    l.p_load = pl;
    l.q_load = ql;
    return {g, l};
}

// standard WSCC 9-bus data
Network wscc9()
{
    std::vector<Bus> buses;
    for (int i = 1; i <= 9; ++i) buses.push_back(Bus{i});
    return Network(buses, {Branch{1, 4, 0.0, 0.0576}, Branch{4, 5, 0.01, 0.085, 0.176}, Branch{5, 7, 0.032, 0.161, 0.306},
                           Branch{4, 6, 0.017, 0.092, 0.158}, Branch{6, 9, 0.039, 0.17, 0.358},
                           Branch{7, 8, 0.0085, 0.072, 0.149}, Branch{8, 9, 0.0119, 0.1008, 0.209},
                           Branch{2, 7, 0.0, 0.0625}, Branch{3, 9, 0.0, 0.0586}});
}

std::vector<BusInjection> wscc9_injections()
{
    std::vector<BusInjection> inj(9);
    inj[0].pv = true;
    inj[0].v_set = 1.04;
    inj[0].p_gen = 0.716;
    inj[1].pv = true;
    inj[1].v_set = 1.025;
    inj[1].p_gen = 1.63;
    inj[2].pv = true;
    inj[2].v_set = 1.025;
    inj[2].p_gen = 0.85;
    inj[4].p_load = 1.25;
    inj[4].q_load = 0.5;
    inj[5].p_load = 0.9;
    inj[5].q_load = 0.3;
    inj[7].p_load = 1.0;
    inj[7].q_load = 0.35;
    return inj;
}

}  // namespace

TEST_CASE("two-bus single slack matches the brute-force oracle")
{
    const auto sol = solve_powerflow(line(0.01, 0.1), two_bus_injections(1.0, 0.2), SlackSpec::single(1));
    const auto ref = oracle::solve_two_bus({});
    CHECK(sol.v[1] == doctest::Approx(ref.v2).epsilon(1e-8));
    CHECK(sol.theta[1] == doctest::Approx(ref.theta2).epsilon(1e-8));
    CHECK(sol.theta[0] == 0.0);
    CHECK(sol.sigma_hat == doctest::Approx(ref.p1).epsilon(1e-8));
    CHECK(sol.losses == doctest::Approx(ref.losses).epsilon(1e-8));
    // the slack covers load plus losses
    CHECK(sol.sigma_hat - 1.0 == doctest::Approx(sol.losses).epsilon(1e-9));
    CHECK(sol.iterations < 10);
}

TEST_CASE("two-bus distributed slack splits the imbalance")
{
    auto inj = two_bus_injections(1.0, 0.2);
    const auto sol = solve_powerflow(line(0.01, 0.1), inj, SlackSpec::distributed(1, {{1, 0.5}, {2, 0.5}}));
    oracle::TwoBusCase c;
    c.k1 = 0.5;
    c.k2 = 0.5;
    const auto ref = oracle::solve_two_bus(c);
    CHECK(sol.sigma_hat == doctest::Approx(ref.sigma).epsilon(1e-8));
    CHECK(sol.theta[1] == doctest::Approx(ref.theta2).epsilon(1e-8));
    CHECK(sol.v[1] == doctest::Approx(ref.v2).epsilon(1e-8));
    CHECK(sol.p_gen[0] == doctest::Approx(0.5 * sol.sigma_hat).epsilon(1e-12));
    CHECK(sol.p_gen[1] == doctest::Approx(0.5 * sol.sigma_hat).epsilon(1e-12));
    // each generator picks up half of the total imbalance
    CHECK(sol.p_gen[0] + sol.p_gen[1] - 1.0 == doctest::Approx(sol.losses).epsilon(1e-9));

    const auto single = solve_powerflow(line(0.01, 0.1), inj, SlackSpec::single(1));
    CHECK(std::abs(single.theta[1] - sol.theta[1]) > 1e-3);
}

TEST_CASE("single slack equals distributed with one participant")
{
    const auto net = wscc9();
    const auto inj = wscc9_injections();
    const auto a = solve_powerflow(net, inj, SlackSpec::single(1));
    const auto b = solve_powerflow(net, inj, SlackSpec::distributed(1, {{1, 1.0}}));
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(std::abs(a.v[i] - b.v[i]) < 1e-10);
        CHECK(std::abs(a.theta[i] - b.theta[i]) < 1e-10);
    }
    CHECK(std::abs(a.sigma_hat - b.sigma_hat) < 1e-10);
}

TEST_CASE("WSCC 9-bus converges quickly and balances")
{
    const auto sol = solve_powerflow(wscc9(), wscc9_injections(), SlackSpec::single(1));
    CHECK(sol.iterations < 20);
    CHECK(sol.max_mismatch < 1e-8);
    double gen = 0.0;
    for (double p : sol.p_gen) gen += p;
    CHECK(gen - 3.15 == doctest::Approx(sol.losses).epsilon(1e-8));
    CHECK(sol.losses == doctest::Approx(0.0464102).epsilon(1e-5));
    CHECK(sol.theta[1] == doctest::Approx(0.16197).epsilon(1e-4));
}

TEST_CASE("distributed sigma does not depend on theta_ref")
{
    const auto net = wscc9();
    const auto inj = wscc9_injections();
    const std::map<int, double> k{{1, 0.2}, {2, 0.5}, {3, 0.3}};
    const auto a = solve_powerflow(net, inj, SlackSpec::distributed(1, k, 0.0));
    const auto b = solve_powerflow(net, inj, SlackSpec::distributed(1, k, 0.3));
    CHECK(a.sigma_hat == doctest::Approx(b.sigma_hat).epsilon(1e-10));
    for (std::size_t i = 0; i < 9; ++i) CHECK(b.theta[i] - a.theta[i] == doctest::Approx(0.3).epsilon(1e-9));
    double gen = 0.0;
    for (double p : a.p_gen) gen += p;
    CHECK(gen - 3.15 == doctest::Approx(a.losses).epsilon(1e-8));
    CHECK(a.p_gen[1] == doctest::Approx(1.63 + 0.5 * a.sigma_hat).epsilon(1e-12));
}

TEST_CASE("droop equilibrium shifts the reference angle only")
{
    const auto net = line(0.01, 0.1);
    const auto inj = two_bus_injections(1.0, 0.2);
    const auto rep = verify_angle_offset_invariance(net, inj, SlackSpec::dynamic_equilibrium(1, {1.0, 0.1, 1.0}),
                                                    SlackSpec::single(1));
    CHECK(rep.consistent);
    CHECK(rep.max_angle_difference_error < 1e-8);
    CHECK(rep.max_branch_flow_error < 1e-8);
    // K (theta_ref - theta_1) = H sigma
    const double sigma = rep.droop.sigma_hat;
    CHECK(rep.droop.theta[0] == doctest::Approx(-0.1 * sigma).epsilon(1e-9));
    CHECK(std::abs(rep.droop.theta[0]) > 1e-2);
    CHECK(sigma == doctest::Approx(oracle::solve_two_bus({}).p1).epsilon(1e-8));

    const auto h0 = solve_powerflow(net, inj, SlackSpec::dynamic_equilibrium(1, {1.0, 0.0, 1.0}, 0.2));
    CHECK(h0.theta[0] == 0.2);
}

TEST_CASE("zero load gives the flat solution")
{
    const Network net({Bus{1}, Bus{2}, Bus{3}}, {Branch{1, 2, 0.01, 0.1}, Branch{2, 3, 0.02, 0.2}});
    std::vector<BusInjection> inj(3);
    inj[0].pv = true;
    for (const auto& spec : {SlackSpec::single(1, 0.1), SlackSpec::distributed(1, {{1, 0.5}, {3, 0.5}}, 0.1),
                             SlackSpec::dynamic_equilibrium(1, {2.0, 0.5, 1.0}, 0.1)}) {
        const auto sol = solve_powerflow(net, inj, spec);
        CHECK(std::abs(sol.sigma_hat) < 1e-10);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(sol.v[i] == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(sol.theta[i] == doctest::Approx(0.1).epsilon(1e-10));
        }
    }
}

TEST_CASE("power flow errors")
{
    const auto net = line(0.01, 0.1);
    CHECK_THROWS_AS(solve_powerflow(net, two_bus_injections(1.0, 0.2), SlackSpec::single(9)), NoSlackParticipant);
    CHECK_THROWS_AS(solve_powerflow(net, two_bus_injections(1.0, 0.2), SlackSpec::distributed(1, {})),
                    NoSlackParticipant);
    CHECK_THROWS_AS(solve_powerflow(net, two_bus_injections(1.0, 0.2), SlackSpec::distributed(1, {{1, 0.0}})),
                    NoSlackParticipant);
    CHECK_THROWS_AS(
        solve_powerflow(net, two_bus_injections(1.0, 0.2), SlackSpec::distributed(1, {{1, 1.5}, {2, -0.5}})),
        ConfigurationError);
    // far beyond the transfer limit of the line
    CHECK_THROWS_AS(solve_powerflow(net, two_bus_injections(30.0, 5.0), SlackSpec::single(1)), NonConvergence);
    PowerFlowOptions few;
    few.max_iter = 1;
    CHECK_THROWS_AS(solve_powerflow(net, two_bus_injections(1.0, 0.2), SlackSpec::single(1), few), NonConvergence);
}

TEST_CASE("iteration callback sees every iteration")
{
    std::vector<double> norms;
    PowerFlowOptions opts;
    opts.on_iteration = [&](int, double n) { norms.push_back(n); };
    const auto sol = solve_powerflow(wscc9(), wscc9_injections(), SlackSpec::single(1), opts);
    REQUIRE(!norms.empty());
    CHECK(norms.back() < 1e-8);
    CHECK(norms.front() > norms.back());
    CHECK(static_cast<int>(norms.size()) >= sol.iterations);
}
