#include "slackdyn/netcore.hpp"

#include <cmath>
#include <string>

#include "slackdyn/error.hpp"

namespace slackdyn {

Network::Network(std::vector<Bus> buses, std::vector<Branch> branches, double s_base, double f_nominal)
    : buses_(std::move(buses)), branches_(std::move(branches)), s_base_(s_base), f_nominal_(f_nominal)
{
    if (!(s_base_ > 0.0) || !(f_nominal_ > 0.0)) {
        throw InvalidNetwork("s_base and f_nominal must be positive");
    }
    for (std::size_t k = 0; k < buses_.size(); ++k) {
        if (!index_.emplace(buses_[k].id, k).second) {
            throw InvalidNetwork("duplicate bus id " + std::to_string(buses_[k].id));
        }
    }
    for (const auto& br : branches_) {
        if (!has_bus(br.from_bus) || !has_bus(br.to_bus)) {
            throw InvalidNetwork("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                                 " references an unknown bus");
        }
        if (br.from_bus == br.to_bus) {
            throw InvalidNetwork("branch connects bus " + std::to_string(br.from_bus) + " to itself");
        }
        if (!(br.tap > 0.0)) {
            throw InvalidNetwork("branch tap must be positive");
        }
    }
}

std::size_t Network::index_of(int bus_id) const
{
    auto it = index_.find(bus_id);
    if (it == index_.end()) {
        throw IndexOutOfRange("unknown bus id " + std::to_string(bus_id));
    }
    return it->second;
}

bool Network::is_connected() const
{
    const std::size_t n = buses_.size();
    if (n <= 1) {
        return true;
    }
    // union-find over branch endpoints
    std::vector<std::size_t> parent(n);
    for (std::size_t k = 0; k < n; ++k) {
        parent[k] = k;
    }
    auto find = [&](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    std::size_t components = n;
    for (const auto& br : branches_) {
        auto a = find(index_of(br.from_bus));
        auto b = find(index_of(br.to_bus));
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

ComplexMatrix build_admittance(const Network& net)
{
    const auto n = static_cast<Eigen::Index>(net.size());
    if (!net.is_connected()) {
        throw DisconnectedGraph("network graph is not connected");
    }
    std::vector<Eigen::Triplet<Complex>> stamps;
    stamps.reserve(net.branches().size() * 4 + net.size());

    for (std::size_t k = 0; k < net.size(); ++k) {
        const auto& bus = net.buses()[k];
        if (bus.gs != 0.0 || bus.bs != 0.0) {
            auto i = static_cast<Eigen::Index>(k);
            stamps.emplace_back(i, i, Complex(bus.gs, bus.bs));
        }
    }
    for (const auto& br : net.branches()) {
        const Complex z(br.r, br.x);
        if (std::abs(z) == 0.0) {
            throw ZeroImpedanceBranch("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                                      " has zero series impedance");
        }
        const Complex y = 1.0 / z;
        const Complex ysh(0.0, 0.5 * br.b_sh);
        const auto f = static_cast<Eigen::Index>(net.index_of(br.from_bus));
        const auto t = static_cast<Eigen::Index>(net.index_of(br.to_bus));
        stamps.emplace_back(f, f, (y + ysh) / (br.tap * br.tap));
        stamps.emplace_back(t, t, y + ysh);
        stamps.emplace_back(f, t, -y / br.tap);
        stamps.emplace_back(t, f, -y / br.tap);
    }
    ComplexMatrix::Storage m(n, n);
    m.setFromTriplets(stamps.begin(), stamps.end());
    m.makeCompressed();
    return ComplexMatrix(std::move(m));
}

namespace {

void check_sizes(std::size_t n, std::span<const double> v, std::span<const double> theta)
{
    if (v.size() != n || theta.size() != n) {
        throw IndexOutOfRange("voltage vectors do not match the bus count");
    }
}

}  // namespace

PowerInjection bus_power_injection(const ComplexMatrix& y, std::span<const double> v,
                                   std::span<const double> theta, std::size_t bus_index)
{
    const std::size_t n = y.dimension();
    check_sizes(n, v, theta);
    if (bus_index >= n) {
        throw IndexOutOfRange("bus index " + std::to_string(bus_index) + " out of range");
    }
    // S_h = V_h * conj(sum_k Y_hk V_k); without phase shifters Y is symmetric, so column h == row h
    const auto& m = y.sparse();
    Complex current(0.0, 0.0);
    for (ComplexMatrix::Storage::InnerIterator it(m, static_cast<Eigen::Index>(bus_index)); it; ++it) {
        const auto k = static_cast<std::size_t>(it.row());
        current += it.value() * std::polar(v[k], theta[k]);
    }
    const Complex s = std::polar(v[bus_index], theta[bus_index]) * std::conj(current);
    return {s.real(), s.imag()};
}

PowerInjection bus_power_injection(const Network& net, std::span<const double> v,
                                   std::span<const double> theta, int bus_id)
{
    const auto h = net.index_of(bus_id);
    return bus_power_injection(build_admittance(net), v, theta, h);
}

std::vector<PowerInjection> all_bus_injections(const ComplexMatrix& y, std::span<const double> v,
                                               std::span<const double> theta)
{
    const std::size_t n = y.dimension();
    check_sizes(n, v, theta);
    std::vector<Complex> voltage(n);
    for (std::size_t k = 0; k < n; ++k) {
        voltage[k] = std::polar(v[k], theta[k]);
    }
    std::vector<Complex> current(n, Complex(0.0, 0.0));
    const auto& m = y.sparse();
    for (Eigen::Index col = 0; col < m.outerSize(); ++col) {
        for (ComplexMatrix::Storage::InnerIterator it(m, col); it; ++it) {
            current[static_cast<std::size_t>(it.row())] += it.value() * voltage[static_cast<std::size_t>(col)];
        }
    }
    std::vector<PowerInjection> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Complex s = voltage[k] * std::conj(current[k]);
        out[k] = {s.real(), s.imag()};
    }
    return out;
}

InjectionJacobian injection_jacobian(const ComplexMatrix& y, std::span<const double> v,
                                     std::span<const double> theta)
{
    const std::size_t n = y.dimension();
    check_sizes(n, v, theta);
    const auto ni = static_cast<Eigen::Index>(n);
    Eigen::VectorXcd voltage(ni), unit(ni);
    for (Eigen::Index k = 0; k < ni; ++k) {
        unit(k) = std::polar(1.0, theta[static_cast<std::size_t>(k)]);
        voltage(k) = v[static_cast<std::size_t>(k)] * unit(k);
    }
    const Eigen::MatrixXcd ybus = y.dense();
    const Eigen::VectorXcd current = ybus * voltage;

    // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dv     = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    Eigen::MatrixXcd ds_dtheta = -(ybus * voltage.asDiagonal());
    ds_dtheta.diagonal() += current;
    ds_dtheta = (Complex(0.0, 1.0) * (voltage.asDiagonal() * ds_dtheta.conjugate())).eval();

    Eigen::MatrixXcd ds_dv = voltage.asDiagonal() * (ybus * unit.asDiagonal()).conjugate();
    ds_dv.diagonal() += current.conjugate().cwiseProduct(unit);

    return {ds_dtheta.real(), ds_dv.real(), ds_dtheta.imag(), ds_dv.imag()};
}

std::pair<Complex, Complex> branch_flow(const Network& net, const Branch& br, std::span<const double> v,
                                        std::span<const double> theta)
{
    check_sizes(net.size(), v, theta);
    const auto f = net.index_of(br.from_bus);
    const auto t = net.index_of(br.to_bus);
    const Complex y = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, 0.5 * br.b_sh);
    const Complex vf = std::polar(v[f], theta[f]);
    const Complex vt = std::polar(v[t], theta[t]);
    const Complex i_f = (y + ysh) / (br.tap * br.tap) * vf - y / br.tap * vt;
    const Complex i_t = (y + ysh) * vt - y / br.tap * vf;
    return {vf * std::conj(i_f), vt * std::conj(i_t)};
}

}  // namespace slackdyn
