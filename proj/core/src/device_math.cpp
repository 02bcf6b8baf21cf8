#include <vector>

#include "slackdyn/devices.hpp"

namespace slackdyn {

std::optional<double> Device::frequency(std::span<const double>, std::span<const double>, BusVoltage,
                                        const Signals&) const
{
    return std::nullopt;
}

DeviceJacobian finite_difference_jacobian(const Device& dev, std::span<const double> sigma, BusVoltage bus,
                                          const Signals& s, double step)
{
    const auto m = static_cast<Eigen::Index>(dev.size());
    DeviceJacobian jac;
    jac.f_state.setZero(m, m);
    jac.f_bus.setZero(m, 2);
    jac.f_signal.setZero(m, kSignalCount);
    jac.pq_state.setZero(2, m);
    jac.pq_bus.setZero(2, 2);
    jac.pq_signal.setZero(2, kSignalCount);

    std::vector<double> x(sigma.begin(), sigma.end());
    std::vector<double> fp(dev.size());
    std::vector<double> fm(dev.size());

    // perturb one input, write the central difference into column col of the two blocks
    auto column = [&](auto&& perturb, Eigen::MatrixXd& fblk, Eigen::MatrixXd& pqblk, Eigen::Index col) {
        BusVoltage b = bus;
        Signals sg = s;
        perturb(+step, b, sg);
        dev.residual(x, b, sg, fp);
        const auto pq_p = dev.injection(x, b, sg);
        perturb(-2.0 * step, b, sg);
        dev.residual(x, b, sg, fm);
        const auto pq_m = dev.injection(x, b, sg);
        perturb(+step, b, sg);
        for (Eigen::Index r = 0; r < m; ++r) {
            fblk(r, col) = (fp[static_cast<std::size_t>(r)] - fm[static_cast<std::size_t>(r)]) / (2.0 * step);
        }
        pqblk(0, col) = (pq_p.p - pq_m.p) / (2.0 * step);
        pqblk(1, col) = (pq_p.q - pq_m.q) / (2.0 * step);
    };

    for (Eigen::Index k = 0; k < m; ++k) {
        column([&](double h, BusVoltage&, Signals&) { x[static_cast<std::size_t>(k)] += h; }, jac.f_state,
               jac.pq_state, k);
    }
    column([](double h, BusVoltage& b, Signals&) { b.v += h; }, jac.f_bus, jac.pq_bus, 0);
    column([](double h, BusVoltage& b, Signals&) { b.theta += h; }, jac.f_bus, jac.pq_bus, 1);
    column([](double h, BusVoltage&, Signals& g) { g.omega_frame += h; }, jac.f_signal, jac.pq_signal, 0);
    column([](double h, BusVoltage&, Signals& g) { g.omega_coi += h; }, jac.f_signal, jac.pq_signal, 1);
    column([](double h, BusVoltage&, Signals& g) { g.xi += h; }, jac.f_signal, jac.pq_signal, 2);
    return jac;
}

}  // namespace slackdyn
