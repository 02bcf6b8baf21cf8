#include <cmath>
#include <vector>

#include "doctest.h"
#include "slackdyn/error.hpp"
#include "slackdyn/netcore.hpp"

using namespace slackdyn;

namespace {

Network two_bus(double r, double x, double b_sh = 0.0)
{
    return Network({Bus{1}, Bus{2}}, {Branch{1, 2, r, x, b_sh}});
}

Network ring4()
{
    return Network({Bus{1}, Bus{2}, Bus{3}, Bus{4, 1.0, 0.0, 1.0, 0.0, 0.05}},
                   {Branch{1, 2, 0.01, 0.1, 0.02}, Branch{2, 3, 0.02, 0.15}, Branch{3, 4, 0.0, 0.08},
                    Branch{4, 1, 0.015, 0.12, 0.01, 0.98}});
}

}  // namespace

TEST_CASE("admittance of a pure reactance")
{
    const auto y = build_admittance(two_bus(0.0, 0.1)).dense();
    CHECK(std::abs(y(0, 0) - Complex(0, -10)) < 1e-12);
    CHECK(std::abs(y(0, 1) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 0) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 1) - Complex(0, -10)) < 1e-12);
}

TEST_CASE("single bus gives a zero 1x1 matrix")
{
    const auto y = build_admittance(Network({Bus{7}}, {}));
    REQUIRE(y.dimension() == 1);
    CHECK(y(0, 0) == Complex(0, 0));
}

TEST_CASE("off-diagonal of a lossy branch")
{
    const auto y = build_admittance(two_bus(0.01, 0.1));
    CHECK(y(0, 1).real() == doctest::Approx(-0.990099).epsilon(1e-5));
    CHECK(y(0, 1).imag() == doctest::Approx(9.900990).epsilon(1e-6));
}

TEST_CASE("symmetric for unit taps, row sums equal shunts")
{
    const Network net({Bus{1, 1, 0, 1, 0.02, 0.1}, Bus{2}, Bus{3}},
                      {Branch{1, 2, 0.01, 0.1, 0.04}, Branch{2, 3, 0.03, 0.2, 0.0}});
    const auto y = build_admittance(net).dense();
    CHECK((y - y.transpose()).norm() < 1e-12);
    const Complex row0 = y.row(0).sum(), row1 = y.row(1).sum(), row2 = y.row(2).sum();
    CHECK(std::abs(row0 - Complex(0.02, 0.1 + 0.02)) < 1e-12);
    CHECK(std::abs(row1 - Complex(0, 0.02)) < 1e-12);
    CHECK(std::abs(row2) < 1e-12);
}

TEST_CASE("permutation equivariance")
{
    const Network a({Bus{1}, Bus{2}, Bus{3}}, {Branch{1, 2, 0.01, 0.1}, Branch{2, 3, 0.02, 0.3, 0.05}});
    const Network b({Bus{3}, Bus{1}, Bus{2}}, {Branch{1, 2, 0.01, 0.1}, Branch{2, 3, 0.02, 0.3, 0.05}});
    const auto ya = build_admittance(a).dense(), yb = build_admittance(b).dense();
    const std::size_t perm[3] = {1, 2, 0};  // position in b of a's bus
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(ya(i, j) - yb(perm[i], perm[j])) < 1e-14);
}

TEST_CASE("admittance errors")
{
    CHECK_THROWS_AS(build_admittance(two_bus(0.0, 0.0)), ZeroImpedanceBranch);
    CHECK_THROWS_AS(build_admittance(Network({Bus{1}, Bus{2}, Bus{3}}, {Branch{1, 2, 0, 0.1}})),
                    DisconnectedGraph);
    CHECK_THROWS_AS(Network({Bus{1}, Bus{1}}, {}), InvalidNetwork);
    CHECK_THROWS_AS(Network({Bus{1}, Bus{2}}, {Branch{1, 1, 0, 0.1}}), InvalidNetwork);
    CHECK_THROWS_AS(Network({Bus{1}, Bus{2}}, {Branch{1, 3, 0, 0.1}}), InvalidNetwork);
}

TEST_CASE("injection examples")
{
    const auto net = two_bus(0.0, 0.1);
    const std::vector<double> v{1.0, 1.0};
    std::vector<double> th{0.1, 0.0};
    CHECK(bus_power_injection(net, v, th, 1).p == doctest::Approx(10 * std::sin(0.1)).epsilon(1e-12));
    CHECK(bus_power_injection(net, v, th, 1).p == doctest::Approx(0.99833).epsilon(1e-5));
    th = {0.0, 0.1};
    CHECK(bus_power_injection(net, v, th, 1).p == doctest::Approx(-0.99833).epsilon(1e-5));
    CHECK_THROWS_AS(bus_power_injection(net, v, th, 5), IndexOutOfRange);
    const std::vector<double> short_v{1.0};
    CHECK_THROWS_AS(bus_power_injection(net, short_v, th, 1), IndexOutOfRange);
}

TEST_CASE("flat profile carries no power")
{
    const Network net({Bus{1}, Bus{2}, Bus{3}}, {Branch{1, 2, 0.01, 0.1}, Branch{2, 3, 0.02, 0.3}});
    const std::vector<double> v(3, 1.0), th(3, 0.0);
    for (int id : {1, 2, 3}) {
        const auto s = bus_power_injection(net, v, th, id);
        CHECK(std::abs(s.p) < 1e-14);
        CHECK(std::abs(s.q) < 1e-14);
    }
}

TEST_CASE("lossless network sums to zero and angle shifts change nothing")
{
    const Network net({Bus{1}, Bus{2}, Bus{3}}, {Branch{1, 2, 0, 0.1}, Branch{2, 3, 0, 0.3}, Branch{1, 3, 0, 0.2}});
    const auto y = build_admittance(net);
    const std::vector<double> v{1.02, 0.97, 1.01};
    std::vector<double> th{0.1, -0.05, 0.2};
    const auto s = all_bus_injections(y, v, th);
    CHECK(std::abs(s[0].p + s[1].p + s[2].p) < 1e-10);

    const auto y4 = build_admittance(ring4());
    const std::vector<double> v4{1.0, 0.98, 1.03, 0.99};
    std::vector<double> th4{0.0, -0.1, 0.05, 0.12};
    const auto before = all_bus_injections(y4, v4, th4);
    for (auto& t : th4) t += 0.7;
    const auto after = all_bus_injections(y4, v4, th4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(before[i].p - after[i].p) < 1e-12);
        CHECK(std::abs(before[i].q - after[i].q) < 1e-12);
    }
}

TEST_CASE("injection jacobian matches finite differences")
{
    const auto y = build_admittance(ring4());
    std::vector<double> v{1.0, 0.98, 1.03, 0.99}, th{0.0, -0.1, 0.05, 0.12};
    const auto jac = injection_jacobian(y, v, th);
    const double h = 1e-6;
    for (std::size_t k = 0; k < 4; ++k) {
        auto tp = th, tm = th, vp = v, vm = v;
        tp[k] += h;
        tm[k] -= h;
        vp[k] += h;
        vm[k] -= h;
        const auto sp = all_bus_injections(y, v, tp), sm = all_bus_injections(y, v, tm);
        const auto up = all_bus_injections(y, vp, th), um = all_bus_injections(y, vm, th);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(jac.dp_dtheta(i, k) == doctest::Approx((sp[i].p - sm[i].p) / (2 * h)).epsilon(1e-6));
            CHECK(jac.dq_dtheta(i, k) == doctest::Approx((sp[i].q - sm[i].q) / (2 * h)).epsilon(1e-6));
            CHECK(jac.dp_dv(i, k) == doctest::Approx((up[i].p - um[i].p) / (2 * h)).epsilon(1e-6));
            CHECK(jac.dq_dv(i, k) == doctest::Approx((up[i].q - um[i].q) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("branch flows add up to the bus injection")
{
    const auto net = ring4();
    const std::vector<double> v{1.0, 0.98, 1.03, 0.99}, th{0.0, -0.1, 0.05, 0.12};
    Complex at1{};
    for (const auto& br : net.branches()) {
        const auto [sf, st] = branch_flow(net, br, v, th);
        if (br.from_bus == 1) at1 += sf;
        if (br.to_bus == 1) at1 += st;
    }
    const auto s = bus_power_injection(net, v, th, 1);
    CHECK(at1.real() == doctest::Approx(s.p).epsilon(1e-12));
    CHECK(at1.imag() == doctest::Approx(s.q).epsilon(1e-12));
}
