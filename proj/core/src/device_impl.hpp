#pragma once

// Shared plumbing for the concrete devices: every device implements one
// scalar-generic eval<S>() and gets its residual, injection and forward-mode
// Jacobian from here.

#include <array>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "slackdyn/devices.hpp"

namespace slackdyn::detail {

inline constexpr int kMaxAdVars = 16;
using AdDeriv = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAdVars, 1>;
using Ad = Eigen::AutoDiffScalar<AdDeriv>;

inline std::array<double, kSignalCount> signal_values(const Signals& s)
{
    return {s.omega_frame, s.omega_coi, s.xi};
}

template <class D>
void residual_impl(const D& dev, std::span<const double> x, BusVoltage bus, const Signals& s, std::span<double> f)
{
    const auto sig = signal_values(s);
    double p = 0.0;
    double q = 0.0;
    dev.template eval<double>(x, bus.v, bus.theta, sig, s, f, p, q);
}

template <class D>
PowerInjection injection_impl(const D& dev, std::span<const double> x, BusVoltage bus, const Signals& s)
{
    const auto sig = signal_values(s);
    std::vector<double> f(dev.size());
    double p = 0.0;
    double q = 0.0;
    dev.template eval<double>(x, bus.v, bus.theta, sig, s, f, p, q);
    return {p, q};
}

inline double grad(const Ad& a, Eigen::Index k)
{
    return k < a.derivatives().size() ? a.derivatives()(k) : 0.0;
}

template <class D>
void jacobian_impl(const D& dev, std::span<const double> x, BusVoltage bus, const Signals& s, DeviceJacobian& jac)
{
    const auto m = static_cast<Eigen::Index>(dev.size());
    const Eigen::Index nvar = m + 2 + kSignalCount;
    std::vector<Ad> xa(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < m; ++k) {
        xa[static_cast<std::size_t>(k)] = Ad(x[static_cast<std::size_t>(k)], nvar, k);
    }
    const Ad v(bus.v, nvar, m);
    const Ad theta(bus.theta, nvar, m + 1);
    const auto sv = signal_values(s);
    std::array<Ad, kSignalCount> sig;
    for (int k = 0; k < kSignalCount; ++k) {
        sig[static_cast<std::size_t>(k)] = Ad(sv[static_cast<std::size_t>(k)], nvar, m + 2 + k);
    }
    std::vector<Ad> f(static_cast<std::size_t>(m));
    Ad p(0.0);
    Ad q(0.0);
    dev.template eval<Ad>(std::span<const Ad>(xa), v, theta, std::span<const Ad>(sig), s, std::span<Ad>(f), p, q);

    jac.f_state.resize(m, m);
    jac.f_bus.resize(m, 2);
    jac.f_signal.resize(m, kSignalCount);
    jac.pq_state.resize(2, m);
    jac.pq_bus.resize(2, 2);
    jac.pq_signal.resize(2, kSignalCount);
    auto fill = [&](const Ad& a, Eigen::Index row, Eigen::MatrixXd& st, Eigen::MatrixXd& bs, Eigen::MatrixXd& sg) {
        for (Eigen::Index k = 0; k < m; ++k) {
            st(row, k) = grad(a, k);
        }
        bs(row, 0) = grad(a, m);
        bs(row, 1) = grad(a, m + 1);
        for (Eigen::Index k = 0; k < kSignalCount; ++k) {
            sg(row, k) = grad(a, m + 2 + k);
        }
    };
    for (Eigen::Index r = 0; r < m; ++r) {
        fill(f[static_cast<std::size_t>(r)], r, jac.f_state, jac.f_bus, jac.f_signal);
    }
    fill(p, 0, jac.pq_state, jac.pq_bus, jac.pq_signal);
    fill(q, 1, jac.pq_state, jac.pq_bus, jac.pq_signal);
}

/// sigma' from f and the T diagonal (zero on algebraic rows).
inline std::vector<double> rates_from_residual(const Device& dev, std::span<const double> f)
{
    std::vector<double> r(dev.size(), 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = dev.t_diag()[k];
        r[k] = t != 0.0 ? f[k] / t : 0.0;
    }
    return r;
}

}  // namespace slackdyn::detail
