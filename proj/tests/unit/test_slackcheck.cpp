#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "slackdyn/case_file.hpp"
#include "slackdyn/dynsim.hpp"
#include "slackdyn/error.hpp"
#include "slackdyn/slackcheck.hpp"

using namespace slackdyn;

namespace {

const std::string kData = SLACKDYN_TEST_DATA;
const std::string kCases = SLACKDYN_CASES;

// two speed channels: w_k(t) for k = 1, 2
template <class F1, class F2>
Trajectory speeds(F1 w1, F2 w2, double t_end = 20.0, double dt = 0.01, double t0 = 0.0)
{
    Trajectory tr({{"dev1.omega", ChannelKind::DifferentialState, 1}, {"dev2.omega", ChannelKind::DifferentialState, 2}});
    const int n = static_cast<int>(std::lround(t_end / dt));
    for (int k = 0; k <= n; ++k) {
        const double t = t0 + k * dt;
        const double row[2] = {w1(t), w2(t)};
        tr.append(t, row);
    }
    return tr;
}

}  // namespace

TEST_CASE("classification of static formulations")
{
    const auto single = classify(describe(SlackSpec::single(1)));
    CHECK(single == SlackDescriptor{Distribution::Centralized, Cardinality::SingleVariable, Temporality::Static,
                                    Scope::NetworkWide});
    const auto dist = classify(describe(SlackSpec::distributed(1, {{1, 0.5}, {2, 0.5}})));
    CHECK(dist.distribution == Distribution::Distributed);
    CHECK(dist.temporality == Temporality::Static);
    // a distributed slack with all factors but one set to zero is centralized again
    const auto one = classify(describe(SlackSpec::distributed(1, {{1, 1.0}, {2, 0.0}})));
    CHECK(one.distribution == Distribution::Centralized);
    const auto droop = classify(describe(SlackSpec::dynamic_equilibrium(1, {1.0, 0.1, 0.5})));
    CHECK(droop.temporality == Temporality::Dynamic);
    CHECK(droop.scope == Scope::NetworkWide);
}

TEST_CASE("classification of dynamic cases")
{
    const auto machines = classify(describe(parse_case(kCases + "/wscc9_machines.json").model));
    CHECK(machines ==
          SlackDescriptor{Distribution::Distributed, Cardinality::MultiVariable, Temporality::Dynamic, Scope::Local});
    const auto agc = classify(describe(parse_case(kCases + "/wscc9_machines_agc.json").model));
    CHECK(agc == SlackDescriptor{Distribution::Distributed, Cardinality::MultiVariable, Temporality::Dynamic,
                                 Scope::NetworkWide});
    CHECK_THROWS_AS(classify(SystemConfig{}), NoSlackDevice);
    SystemConfig passive;
    passive.devices.push_back({1, 4, true, false, true});
    CHECK_THROWS_AS(classify(passive), NoSlackDevice);
}

TEST_CASE("strong check on constant speeds")
{
    const auto tr = speeds([](double) { return 1.0002; }, [](double) { return 1.0002; });
    const auto rep = check_strong(tr, default_candidates(tr));
    CHECK(rep.verdict == Verdict::Strong);
    REQUIRE(rep.sigma_hat_estimate.has_value());
    CHECK(*rep.sigma_hat_estimate == doctest::Approx(1.0002).epsilon(1e-12));
    CHECK(rep.window_end == doctest::Approx(20.0));
    CHECK(rep.window_start == doctest::Approx(18.0));

    const auto weak = check_weak(tr, default_candidates(tr));
    CHECK(weak.verdict != Verdict::None);
}

TEST_CASE("strong check rejects disagreement and unsettled values")
{
    const auto apart = speeds([](double) { return 1.0; }, [](double) { return 1.001; });
    CHECK(check_strong(apart, default_candidates(apart)).verdict == Verdict::None);
    const auto ramp = speeds([](double t) { return 1.0 + 1e-3 * t; }, [](double t) { return 1.0 + 1e-3 * t; });
    CHECK(check_strong(ramp, default_candidates(ramp)).verdict != Verdict::Strong);
}

TEST_CASE("strong check is invariant under a time shift")
{
    auto w1 = [](double t) { return 1.0 + 0.01 * std::exp(-t) * std::cos(5 * t); };
    auto w2 = [](double t) { return 1.0 - 0.02 * std::exp(-t); };
    const auto tr = speeds(w1, w2);
    const auto a = check_strong(tr, default_candidates(tr));
    const auto b = check_strong(tr.shifted(123.0), default_candidates(tr));
    CHECK(a.verdict == b.verdict);
    REQUIRE(a.sigma_hat_estimate.has_value());
    CHECK(*a.sigma_hat_estimate == *b.sigma_hat_estimate);
    CHECK(b.window_start == doctest::Approx(a.window_start + 123.0));
}

TEST_CASE("weak check recovers the mean of an oscillation")
{
    const double mean = 1.0003, tol = 1e-4, period = 1.7;
    auto w1 = [&](double t) { return mean + 0.002 * std::sin(2 * std::numbers::pi * t / period); };
    auto w2 = [&](double t) { return mean - 0.004 * std::sin(2 * std::numbers::pi * t / period); };
    const auto tr = speeds(w1, w2, 40.0, 0.005);
    const auto strong = check_strong(tr, default_candidates(tr), tol);
    CHECK(strong.verdict == Verdict::None);
    const auto weak = check_weak(tr, default_candidates(tr), tol);
    CHECK(weak.verdict == Verdict::Weak);
    REQUIRE(weak.period.has_value());
    CHECK(*weak.period == doctest::Approx(period).epsilon(1e-2));
    REQUIRE(weak.sigma_hat_estimate.has_value());
    CHECK(std::abs(*weak.sigma_hat_estimate - mean) < tol / 10);
    for (const auto& d : weak.per_device) CHECK(std::abs(d.value - mean) < tol / 10);
}

TEST_CASE("weak check needs an oscillation")
{
    const auto ramp = speeds([](double t) { return 1.0 + 1e-3 * t; }, [](double t) { return 1.0 + 2e-3 * t; });
    CHECK_THROWS_AS(check_weak(ramp, default_candidates(ramp)), NoPeriodDetected);
}

TEST_CASE("period estimation")
{
    std::vector<double> v;
    for (int k = 0; k < 4000; ++k) v.push_back(std::sin(2 * std::numbers::pi * k * 0.01 / 2.3) + 0.3);
    const auto p = estimate_period(v, 0.01);
    REQUIRE(p.has_value());
    CHECK(*p == doctest::Approx(2.3).epsilon(2e-3));
    std::vector<double> line;
    for (int k = 0; k < 1000; ++k) line.push_back(0.001 * k);
    CHECK(!estimate_period(line, 0.01).has_value());
}

TEST_CASE("too short for the window")
{
    const auto tr = speeds([](double) { return 1.0; }, [](double) { return 1.0; }, 1.0);
    CHECK_THROWS_AS(check_strong(tr, default_candidates(tr), 1e-4, 2.0), TrajectoryTooShort);
}

TEST_CASE("cross-class agreement never makes a verdict")
{
    Trajectory tr({{"dev1.omega", ChannelKind::DifferentialState, 1}, {"dev2.sigma", ChannelKind::DifferentialState, 2}});
    for (int k = 0; k <= 500; ++k) {
        const double row[2] = {1.0, 1.0};
        tr.append(0.01 * k, row);
    }
    const auto rep = check_strong(tr, default_candidates(tr));
    CHECK(rep.verdict == Verdict::None);
    CHECK(!rep.cross_class.empty());
}

namespace {

Trajectory split_trajectory(double pt_tail, double identity_error)
{
    Trajectory tr({{"dev1.delta", ChannelKind::AngleState, 1},
                   {"dev1.omega", ChannelKind::DifferentialState, 1},
                   {"dev1.ps", ChannelKind::PowerSplit, 1},
                   {"dev1.pt", ChannelKind::PowerSplit, 1},
                   {"dev1.p", ChannelKind::PowerSplit, 1}});
    for (int k = 0; k <= 1000; ++k) {
        const double t = 0.01 * k;
        const double pt = t < 1.0 ? 0.1 * std::exp(-5 * t) : pt_tail;
        const double ps = 0.8;
        const double err = k == 500 ? identity_error : 0.0;
        const double row[5] = {0.1 * t, 1.0 + pt, ps, pt, ps + pt + err};
        tr.append(t, row);
    }
    return tr;
}

}  // namespace

TEST_CASE("power split audit on synthetic channels")
{
    const auto good = audit_power_split(split_trajectory(0.0, 0.0));
    CHECK(good.identity_ok());
    CHECK(good.steady_ok());
    CHECK_NOTHROW(good.ensure());

    const auto broken = audit_power_split(split_trajectory(0.0, 1e-6));
    CHECK(!broken.identity_ok());
    CHECK_THROWS_AS(broken.ensure(), IdentityViolated);
    try {
        broken.ensure();
    } catch (const IdentityViolated& e) {
        CHECK(e.device() == 1);
        CHECK(e.time() == doctest::Approx(5.0));
    }

    const auto lingering = audit_power_split(split_trajectory(1e-3, 0.0));
    CHECK(!lingering.steady_ok());
    CHECK_THROWS_AS(lingering.ensure(), ResidualTransientPower);
}

TEST_CASE("audit of simulated runs")
{
    const auto def = parse_case(kData + "/ideal_slack_3bus.json");
    const auto res = run(def.model, def.scenario("step"));
    REQUIRE(res.completed());
    const auto audit = audit_power_split(res.trajectory, 1e-9, 1e-4);
    CHECK(audit.identity_ok());
    bool saw_passive = false;
    for (const auto& d : audit.devices) {
        if (res.trajectory.find("dev" + std::to_string(d.device) + ".pd")) {
            CHECK(d.passive_ps_zero);
            saw_passive = true;
        }
    }
    CHECK(saw_passive);

    const auto calm = parse_case(kCases + "/wscc9_machines.json");
    const auto still = run(calm.model, calm.scenario("steady"));
    REQUIRE(still.completed());
    for (const auto& name : {"dev1.pt", "dev2.pt", "dev3.pt"}) {
        double worst = 0.0;
        for (double v : still.trajectory.column(name)) worst = std::max(worst, std::abs(v));
        CHECK(worst < 1e-9);
    }
}
