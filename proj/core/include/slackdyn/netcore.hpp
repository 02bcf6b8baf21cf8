#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace slackdyn {

using Complex = std::complex<double>;

struct Bus {
    int id = 0;
    double v_mag = 1.0;  ///< pu
    double theta = 0.0;  ///< rad
    double base_kv = 1.0;
    double gs = 0.0;     ///< shunt conductance, pu on system base
    double bs = 0.0;     ///< shunt susceptance, pu on system base
};

/// Pi-model branch; an off-nominal tap sits on the from side.
struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_sh = 0.0;  ///< total line charging
    double tap = 1.0;
};

/// Buses keep file order; every bus-indexed vector in the library follows it.
class Network {
public:
    Network() = default;
    Network(std::vector<Bus> buses, std::vector<Branch> branches, double s_base = 100.0,
            double f_nominal = 60.0);

    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    std::size_t size() const noexcept { return buses_.size(); }
    double s_base() const noexcept { return s_base_; }
    double f_nominal() const noexcept { return f_nominal_; }
    double omega_b() const noexcept { return 2.0 * std::numbers::pi * f_nominal_; }

    /// Position of a bus id in file order. Throws IndexOutOfRange.
    std::size_t index_of(int bus_id) const;
    bool has_bus(int bus_id) const noexcept { return index_.contains(bus_id); }

    bool is_connected() const;

private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    double s_base_ = 100.0;
    double f_nominal_ = 60.0;
    std::unordered_map<int, std::size_t> index_;
};

/// Nodal admittance matrix, column-major sparse storage.
class ComplexMatrix {
public:
    using Storage = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;

    ComplexMatrix() = default;
    explicit ComplexMatrix(Storage m) : m_(std::move(m)) {}

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(m_.rows()); }
    Complex operator()(std::size_t row, std::size_t col) const {
        return m_.coeff(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
    }
    const Storage& sparse() const noexcept { return m_; }
    Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(m_); }

private:
    Storage m_;
};

ComplexMatrix build_admittance(const Network& net);

struct PowerInjection {
    double p = 0.0;
    double q = 0.0;
};

/// Net complex power flowing from bus `bus_id` into the network.
PowerInjection bus_power_injection(const Network& net, std::span<const double> v,
                                   std::span<const double> theta, int bus_id);

/// Same as above with a prebuilt admittance matrix and a bus position.
PowerInjection bus_power_injection(const ComplexMatrix& y, std::span<const double> v,
                                   std::span<const double> theta, std::size_t bus_index);

/// Injections at every bus, file order.
std::vector<PowerInjection> all_bus_injections(const ComplexMatrix& y, std::span<const double> v,
                                               std::span<const double> theta);

/// Partial derivatives of the bus injections S = V conj(Y V) with respect to
/// angles and magnitudes, dense n x n blocks.
struct InjectionJacobian {
    Eigen::MatrixXd dp_dtheta, dp_dv, dq_dtheta, dq_dv;
};
InjectionJacobian injection_jacobian(const ComplexMatrix& y, std::span<const double> v,
                                     std::span<const double> theta);

/// Complex power entering a branch at its from end and at its to end.
std::pair<Complex, Complex> branch_flow(const Network& net, const Branch& br,
                                        std::span<const double> v, std::span<const double> theta);

}  // namespace slackdyn
