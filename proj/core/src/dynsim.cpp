#include "slackdyn/dynsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

namespace slackdyn {

namespace {

constexpr double kTimeSnap = 1e-9;

bool is_angle_state(std::string_view name)
{
    return name == "delta" || name == "alpha" || name == "theta_hat";
}

std::string device_prefix(const Device& d)
{
    return "dev" + std::to_string(d.id()) + ".";
}

}  // namespace

// ---------------------------------------------------------------------------
// Case and events
// ---------------------------------------------------------------------------

DynamicCase::DynamicCase(const DynamicCase& other)
    : name(other.name),
      network(other.network),
      loads(other.loads),
      initial_slack(other.initial_slack),
      omega_n(other.omega_n)
{
    devices.reserve(other.devices.size());
    for (const auto& d : other.devices) {
        devices.push_back(d->clone());
    }
}

DynamicCase& DynamicCase::operator=(const DynamicCase& other)
{
    if (this != &other) {
        DynamicCase tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

const Device* DynamicCase::find_device(int id) const
{
    for (const auto& d : devices) {
        if (d->id() == id) {
            return d.get();
        }
    }
    return nullptr;
}

Event Event::scale_load(double t, int bus, double factor)
{
    Event e;
    e.t = t;
    e.kind = EventKind::ScaleLoad;
    e.bus = bus;
    e.factor = factor;
    return e;
}

Event Event::set_param(double t, int device, std::string field, double value)
{
    Event e;
    e.t = t;
    e.kind = EventKind::SetParam;
    e.device = device;
    e.field = std::move(field);
    e.value = value;
    return e;
}

Event Event::disconnect(double t, int device)
{
    Event e;
    e.t = t;
    e.kind = EventKind::DisconnectDevice;
    e.device = device;
    return e;
}

// ---------------------------------------------------------------------------
// Model setup
// ---------------------------------------------------------------------------

Simulator::Simulator(DynamicCase c, SimOptions opts) : case_(std::move(c)), opts_(opts)
{
    const auto& net = case_.network;
    n_ = net.size();
    if (n_ == 0) {
        throw ConfigurationError("dynamic case has no buses");
    }
    ybus_ = build_admittance(net);

    std::set<int> ids;
    std::set<int> controlled;
    bool has_gfm_or_ideal = false;
    int agc_count = 0;
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        const Device& d = *case_.devices[k];
        if (!ids.insert(d.id()).second) {
            throw ConfigurationError("duplicate device id " + std::to_string(d.id()));
        }
        offsets_.push_back(nx_);
        nx_ += d.size();
        tdiag_.insert(tdiag_.end(), d.t_diag().begin(), d.t_diag().end());
        off_.push_back(false);
        if (d.injects_power()) {
            if (!net.has_bus(d.bus())) {
                throw ConfigurationError("device " + std::to_string(d.id()) + " sits on unknown bus " +
                                         std::to_string(d.bus()));
            }
            bus_index_.push_back(net.index_of(d.bus()));
            if (d.controls_voltage() && !controlled.insert(d.bus()).second) {
                throw ConfigurationError("bus " + std::to_string(d.bus()) +
                                         " has more than one voltage-controlling device");
            }
        } else {
            bus_index_.push_back(0);
        }
        if (dynamic_cast<const MachineDevice*>(&d) != nullptr) {
            machines_.push_back(k);
        }
        if (dynamic_cast<const GfmDevice*>(&d) != nullptr || dynamic_cast<const IdealSlackDevice*>(&d) != nullptr) {
            has_gfm_or_ideal = true;
        }
        if (d.provides_xi()) {
            ++agc_count;
            xi_index_ = offsets_.back();
        }
    }
    if (agc_count > 1) {
        throw ConfigurationError("at most one AGC device is supported");
    }
    frame_ = (!has_gfm_or_ideal && !machines_.empty()) ? FrameMode::Coi : FrameMode::Nominal;

    p_load_.assign(n_, 0.0);
    q_load_.assign(n_, 0.0);
    for (const auto& l : case_.loads) {
        const std::size_t i = net.index_of(l.bus);
        p_load_[i] += l.p;
        q_load_[i] += l.q;
    }
}

BusVoltage Simulator::bus_of(std::size_t device, const Eigen::VectorXd& y) const
{
    if (!case_.devices[device]->injects_power()) {
        return {};
    }
    const std::size_t b = bus_index_[device];
    return {y[static_cast<Eigen::Index>(b)], y[static_cast<Eigen::Index>(n_ + b)]};
}

Signals Simulator::signals(const Eigen::VectorXd& x) const
{
    Signals s;
    s.omega_n = case_.omega_n;
    s.omega_b = case_.network.omega_b();
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k : machines_) {
        if (off_[k]) {
            continue;
        }
        const Device& d = *case_.devices[k];
        num += d.coi_weight() * x[static_cast<Eigen::Index>(offsets_[k] + *d.speed_state())];
        den += d.coi_weight();
    }
    const double coi = den > 0.0 ? num / den : case_.omega_n;
    s.omega_coi = coi;
    s.omega_frame = frame_ == FrameMode::Coi ? coi : case_.omega_n;
    s.xi = xi_index_ ? x[static_cast<Eigen::Index>(*xi_index_)] : 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

PowerFlowProblem static_problem(const DynamicCase& c)
{
    const auto& net = c.network;
    PowerFlowProblem out;

    // RLC loads enter as shunts at nominal frequency
    std::vector<Bus> buses = net.buses();
    for (const auto& d : c.devices) {
        if (const auto* rlc = dynamic_cast<const RlcLoadDevice*>(d.get())) {
            const Complex y = rlc->admittance(net.omega_b());
            buses[net.index_of(d->bus())].gs += y.real();
            buses[net.index_of(d->bus())].bs += y.imag();
        }
    }
    out.network = Network(buses, net.branches(), net.s_base(), net.f_nominal());

    out.injections.assign(net.size(), BusInjection{});
    for (const auto& l : c.loads) {
        auto& b = out.injections[net.index_of(l.bus)];
        b.p_load += l.p;
        b.q_load += l.q;
    }
    for (const auto& d : c.devices) {
        if (!d->injects_power() || dynamic_cast<const RlcLoadDevice*>(d.get()) != nullptr) {
            continue;
        }
        auto& b = out.injections[net.index_of(d->bus())];
        b.p_gen += d->dispatch();
        if (d->controls_voltage()) {
            b.pv = true;
            b.v_set = d->voltage_setpoint();
        }
    }

    out.slack = SlackSpec::single(net.buses().front().id);
    if (c.initial_slack) {
        out.slack = *c.initial_slack;
        return out;
    }
    // an ideal slack source takes the reference; otherwise the heaviest voltage-controlling source
    const Device* pick = nullptr;
    for (const auto& d : c.devices) {
        if (const auto* ideal = dynamic_cast<const IdealSlackDevice*>(d.get())) {
            const bool integ = ideal->params().mode == IdealSlackMode::Integrator;
            out.slack = SlackSpec::single(d->bus(), integ ? ideal->params().theta_ref : 0.0);
            return out;
        }
        if (d->controls_voltage() &&
            (pick == nullptr ||
             std::pair(d->coi_weight(), d->dispatch()) > std::pair(pick->coi_weight(), pick->dispatch()))) {
            pick = d.get();
        }
    }
    if (pick != nullptr) {
        out.slack = SlackSpec::single(pick->bus());
    }
    return out;
}

SystemState Simulator::initialize()
{
    const double wb = case_.network.omega_b();
    const PowerFlowProblem prob = static_problem(case_);
    const auto& inj = prob.injections;
    std::vector<std::vector<std::size_t>> sources(n_);
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        const Device& d = *case_.devices[k];
        if (d.injects_power() && dynamic_cast<const RlcLoadDevice*>(&d) == nullptr) {
            sources[bus_index_[k]].push_back(k);
        }
    }

    // well below the step tolerance so that t = 0 is an equilibrium of the step equations too
    PowerFlowOptions pf_opts;
    pf_opts.tol = 1e-3 * opts_.init_tol;
    pf_opts.max_iter = 30;
    try {
        pf_ = solve_powerflow(prob.network, inj, prob.slack, pf_opts);
    } catch (const NonConvergence& e) {
        throw PowerFlowFailed(std::string("initial power flow failed: ") + e.what());
    } catch (const SingularJacobian& e) {
        throw PowerFlowFailed(std::string("initial power flow failed: ") + e.what());
    }

    SystemState s;
    s.t = 0.0;
    s.y.resize(static_cast<Eigen::Index>(2 * n_));
    for (std::size_t i = 0; i < n_; ++i) {
        s.y[static_cast<Eigen::Index>(i)] = pf_.v[i];
        s.y[static_cast<Eigen::Index>(n_ + i)] = pf_.theta[i];
    }

    // share each bus's generation among its sources: scheduled dispatch plus an equal part of the pickup
    std::vector<PowerInjection> device_pq(case_.devices.size());
    for (std::size_t i = 0; i < n_; ++i) {
        if (sources[i].empty()) {
            continue;
        }
        const double extra = (pf_.p_gen[i] - inj[i].p_gen) / static_cast<double>(sources[i].size());
        for (std::size_t k : sources[i]) {
            const Device& d = *case_.devices[k];
            device_pq[k].p = d.dispatch() + extra;
            device_pq[k].q = d.controls_voltage() ? pf_.q_gen[i] : 0.0;
        }
    }

    Signals s0;
    s0.omega_n = case_.omega_n;
    s0.omega_b = wb;
    s0.omega_frame = case_.omega_n;
    s0.omega_coi = case_.omega_n;
    s0.xi = 0.0;
    for (const auto& d : case_.devices) {
        if (const auto* agc = dynamic_cast<const AgcDevice*>(d.get())) {
            s0.xi = agc->params().xi0;
        }
    }

    s.x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx_));
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        Device& d = *case_.devices[k];
        std::span<double> xs(s.x.data() + offsets_[k], d.size());
        d.initialize(bus_of(k, s.y), device_pq[k], s0, xs);
    }

    // equilibrium check on every device row and every bus balance
    const Eigen::VectorXd net_rows = network_rows(s.x, s.y);
    if (net_rows.size() > 0 && net_rows.cwiseAbs().maxCoeff() > opts_.init_tol) {
        throw PowerFlowFailed("device injections do not reproduce the power-flow solution (bus mismatch " +
                              std::to_string(net_rows.cwiseAbs().maxCoeff()) + ")");
    }
    const Eigen::VectorXd f = device_rhs(s.x, s.y);
    Eigen::Index worst = 0;
    const double fmax = nx_ > 0 ? f.cwiseAbs().maxCoeff(&worst) : 0.0;
    if (fmax > opts_.init_tol) {
        std::size_t owner = 0;
        while (owner + 1 < offsets_.size() && offsets_[owner + 1] <= static_cast<std::size_t>(worst)) {
            ++owner;
        }
        const Device& d = *case_.devices[owner];
        throw DeviceInitInfeasible("device " + std::to_string(d.id()) + " is not at equilibrium after initialization (" +
                                       d.state_names()[static_cast<std::size_t>(worst) - offsets_[owner]] +
                                       " residual " + std::to_string(fmax) + ")",
                                   d.id());
    }
    s.x_prime = rates(s.x, s.y);
    return s;
}

// ---------------------------------------------------------------------------
// Residual and Jacobian
// ---------------------------------------------------------------------------

Eigen::VectorXd Simulator::device_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const
{
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx_));
    const Signals sig = signals(x);
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        if (off_[k]) {
            continue;
        }
        const Device& d = *case_.devices[k];
        d.residual({x.data() + offsets_[k], d.size()}, bus_of(k, y), sig, {f.data() + offsets_[k], d.size()});
    }
    return f;
}

Eigen::VectorXd Simulator::rates(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const
{
    Eigen::VectorXd r = device_rhs(x, y);
    for (std::size_t k = 0; k < nx_; ++k) {
        r[static_cast<Eigen::Index>(k)] = tdiag_[k] != 0.0 ? r[static_cast<Eigen::Index>(k)] / tdiag_[k] : 0.0;
    }
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        if (off_[k]) {
            r.segment(static_cast<Eigen::Index>(offsets_[k]), static_cast<Eigen::Index>(case_.devices[k]->size()))
                .setZero();
        }
    }
    return r;
}

Eigen::VectorXd Simulator::network_rows(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const
{
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd r(2 * n);
    const std::span<const double> v(y.data(), n_);
    const std::span<const double> th(y.data() + n_, n_);
    const auto flows = all_bus_injections(ybus_, v, th);
    for (std::size_t i = 0; i < n_; ++i) {
        r[static_cast<Eigen::Index>(i)] = -p_load_[i] - flows[i].p;
        r[static_cast<Eigen::Index>(n_ + i)] = -q_load_[i] - flows[i].q;
    }
    const Signals sig = signals(x);
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        const Device& d = *case_.devices[k];
        if (off_[k] || !d.injects_power()) {
            continue;
        }
        const auto pq = d.injection({x.data() + offsets_[k], d.size()}, bus_of(k, y), sig);
        r[static_cast<Eigen::Index>(bus_index_[k])] += pq.p;
        r[static_cast<Eigen::Index>(n_ + bus_index_[k])] += pq.q;
    }
    return r;
}

std::vector<std::pair<std::size_t, double>> Simulator::coi_terms() const
{
    std::vector<std::pair<std::size_t, double>> terms;
    double den = 0.0;
    for (std::size_t k : machines_) {
        if (!off_[k]) {
            den += case_.devices[k]->coi_weight();
        }
    }
    if (!(den > 0.0)) {
        return terms;
    }
    for (std::size_t k : machines_) {
        if (!off_[k]) {
            const Device& d = *case_.devices[k];
            terms.emplace_back(offsets_[k] + *d.speed_state(), d.coi_weight() / den);
        }
    }
    return terms;
}

Eigen::VectorXd Simulator::residual_z(const SystemState& prev, const Eigen::VectorXd& z, double dt,
                                      StepRule rule) const
{
    const bool algebraic_only = rule == StepRule::AlgebraicOnly;
    const auto nx = static_cast<Eigen::Index>(nx_);
    const Eigen::VectorXd x = z.head(nx);
    const Eigen::VectorXd y = z.tail(static_cast<Eigen::Index>(2 * n_));
    const Eigen::VectorXd f = device_rhs(x, y);
    Eigen::VectorXd r(z.size());
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        for (std::size_t j = 0; j < case_.devices[k]->size(); ++j) {
            const auto i = static_cast<Eigen::Index>(offsets_[k] + j);
            const double t = tdiag_[static_cast<std::size_t>(i)];
            if (off_[k] || (algebraic_only && t != 0.0)) {
                r[i] = x[i] - prev.x[i];
            } else if (t != 0.0) {
                r[i] = rule == StepRule::BackwardEuler
                           ? t * (x[i] - prev.x[i]) - dt * f[i]
                           : t * (x[i] - prev.x[i]) - 0.5 * dt * (f[i] + t * prev.x_prime[i]);
            } else {
                r[i] = f[i];
            }
        }
    }
    r.tail(static_cast<Eigen::Index>(2 * n_)) = network_rows(x, y);
    return r;
}

Eigen::MatrixXd Simulator::jacobian_z(const SystemState&, const Eigen::VectorXd& z, double dt,
                                      StepRule rule) const
{
    const bool algebraic_only = rule == StepRule::AlgebraicOnly;
    const double weight = rule == StepRule::BackwardEuler ? dt : 0.5 * dt;
    const auto nx = static_cast<Eigen::Index>(nx_);
    const auto n = static_cast<Eigen::Index>(n_);
    const Eigen::VectorXd x = z.head(nx);
    const Eigen::VectorXd y = z.tail(2 * n);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(z.size(), z.size());

    // d(signal)/dz as sparse (column, weight) lists, signal order frame, coi, xi
    std::array<std::vector<std::pair<std::size_t, double>>, kSignalCount> dsig;
    const auto coi = coi_terms();
    if (frame_ == FrameMode::Coi) {
        dsig[0] = coi;
    }
    dsig[1] = coi;
    if (xi_index_) {
        dsig[2] = {{*xi_index_, 1.0}};
    }

    const Signals sig = signals(x);
    DeviceJacobian dj;
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        const Device& d = *case_.devices[k];
        const auto off = static_cast<Eigen::Index>(offsets_[k]);
        const auto m = static_cast<Eigen::Index>(d.size());
        if (off_[k]) {
            jac.block(off, off, m, m).setIdentity();
            continue;
        }
        d.jacobian({x.data() + offsets_[k], d.size()}, bus_of(k, y), sig, dj);
        const auto b = static_cast<Eigen::Index>(bus_index_[k]);
        const bool on_bus = d.injects_power();
        for (Eigen::Index r = 0; r < m; ++r) {
            const auto row = off + r;
            const double t = tdiag_[static_cast<std::size_t>(row)];
            double scale = 1.0;
            if (t != 0.0) {
                jac(row, row) += algebraic_only ? 1.0 : t;
                scale = algebraic_only ? 0.0 : -weight;
            }
            if (scale == 0.0) {
                continue;
            }
            jac.block(row, off, 1, m) += scale * dj.f_state.row(r);
            if (on_bus) {
                jac(row, nx + b) += scale * dj.f_bus(r, 0);
                jac(row, nx + n + b) += scale * dj.f_bus(r, 1);
            }
            for (int s = 0; s < kSignalCount; ++s) {
                for (const auto& [col, w] : dsig[static_cast<std::size_t>(s)]) {
                    jac(row, static_cast<Eigen::Index>(col)) += scale * dj.f_signal(r, s) * w;
                }
            }
        }
        if (!on_bus) {
            continue;
        }
        for (Eigen::Index c = 0; c < 2; ++c) {
            const Eigen::Index row = nx + c * n + b;
            jac.block(row, off, 1, m) += dj.pq_state.row(c);
            jac(row, nx + b) += dj.pq_bus(c, 0);
            jac(row, nx + n + b) += dj.pq_bus(c, 1);
            for (int s = 0; s < kSignalCount; ++s) {
                for (const auto& [col, w] : dsig[static_cast<std::size_t>(s)]) {
                    jac(row, static_cast<Eigen::Index>(col)) += dj.pq_signal(c, s) * w;
                }
            }
        }
    }

    const std::span<const double> v(y.data(), n_);
    const std::span<const double> th(y.data() + n_, n_);
    const auto net = injection_jacobian(ybus_, v, th);
    jac.block(nx, nx, n, n) -= net.dp_dv;
    jac.block(nx, nx + n, n, n) -= net.dp_dtheta;
    jac.block(nx + n, nx, n, n) -= net.dq_dv;
    jac.block(nx + n, nx + n, n, n) -= net.dq_dtheta;
    return jac;
}

Eigen::VectorXd Simulator::assemble_residual(const SystemState& prev, const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& y, double dt) const
{
    Eigen::VectorXd z(x.size() + y.size());
    z << x, y;
    return residual_z(prev, z, dt, StepRule::Trapezoidal);
}

Eigen::MatrixXd Simulator::assemble_jacobian(const SystemState& prev, const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& y, double dt) const
{
    Eigen::VectorXd z(x.size() + y.size());
    z << x, y;
    return jacobian_z(prev, z, dt, StepRule::Trapezoidal);
}

Simulator::Newton Simulator::solve(const SystemState& prev, Eigen::VectorXd z, double dt, StepRule rule) const
{
    Newton out;
    for (int it = 0;; ++it) {
        const Eigen::VectorXd r = residual_z(prev, z, dt, rule);
        out.mismatch = r.allFinite() ? r.lpNorm<Eigen::Infinity>() : std::numeric_limits<double>::infinity();
        out.iterations = it;
        if (out.mismatch < opts_.newton_tol) {
            out.converged = true;
            break;
        }
        if (it >= opts_.max_iter || !std::isfinite(out.mismatch)) {
            break;
        }
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian_z(prev, z, dt, rule));
        if (!(lu.rcond() > 1e-14)) {
            break;
        }
        const Eigen::VectorXd dz = lu.solve(-r);
        if (!dz.allFinite()) {
            break;
        }
        z += dz;
    }
    out.z = std::move(z);
    return out;
}

std::vector<BusMismatch> Simulator::mismatch_ranking(const Eigen::VectorXd& z) const
{
    const auto nx = static_cast<Eigen::Index>(nx_);
    const Eigen::VectorXd rows = network_rows(z.head(nx), z.tail(static_cast<Eigen::Index>(2 * n_)));
    std::vector<BusMismatch> out;
    for (std::size_t i = 0; i < n_; ++i) {
        out.push_back({case_.network.buses()[i].id, rows[static_cast<Eigen::Index>(i)],
                       rows[static_cast<Eigen::Index>(n_ + i)]});
    }
    auto size = [](const BusMismatch& b) {
        const double s = std::abs(b.dp) + std::abs(b.dq);
        return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
    };
    std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return size(a) > size(b); });
    return out;
}

SystemState Simulator::step(const SystemState& s, double dt) const
{
    return advance(s, dt, StepRule::Trapezoidal);
}

SystemState Simulator::step_damped(const SystemState& s, double dt) const
{
    const SystemState half = advance(s, 0.5 * dt, StepRule::BackwardEuler);
    return advance(half, dt - 0.5 * dt, StepRule::BackwardEuler);
}

SystemState Simulator::advance(const SystemState& s, double dt, StepRule rule) const
{
    Eigen::VectorXd z0(s.x.size() + s.y.size());
    z0 << s.x, s.y;
    const Newton nr = solve(s, std::move(z0), dt, rule);
    const double t_new = s.t + dt;
    if (!nr.converged) {
        throw StepNewtonDiverged("Newton iteration failed at t = " + std::to_string(t_new) + " s after " +
                                     std::to_string(nr.iterations) + " iterations (mismatch " +
                                     std::to_string(nr.mismatch) + ")",
                                 t_new, nr.iterations, mismatch_ranking(nr.z));
    }
    SystemState out;
    out.t = t_new;
    out.x = nr.z.head(s.x.size());
    out.y = nr.z.tail(s.y.size());
    out.x_prime = rates(out.x, out.y);
    return out;
}

// ---------------------------------------------------------------------------
// Events and time loop
// ---------------------------------------------------------------------------

void Simulator::apply_event(const Event& e, SystemState& s)
{
    auto device_index = [&](int id) {
        for (std::size_t k = 0; k < case_.devices.size(); ++k) {
            if (case_.devices[k]->id() == id) {
                return k;
            }
        }
        throw ConfigurationError("event refers to unknown device " + std::to_string(id));
    };
    switch (e.kind) {
    case EventKind::ScaleLoad: {
        const std::size_t i = case_.network.index_of(e.bus);
        if (p_load_[i] == 0.0 && q_load_[i] == 0.0) {
            throw ConfigurationError("load event at bus " + std::to_string(e.bus) + " which carries no static load");
        }
        p_load_[i] *= e.factor;
        q_load_[i] *= e.factor;
        break;
    }
    case EventKind::SetParam: {
        Device& d = *case_.devices[device_index(e.device)];
        if (!d.set_param(e.field, e.value)) {
            throw ConfigurationError("device " + std::to_string(e.device) + " has no settable field '" + e.field + "'");
        }
        break;
    }
    case EventKind::DisconnectDevice:
        off_[device_index(e.device)] = true;
        break;
    }

    Eigen::VectorXd z0(s.x.size() + s.y.size());
    z0 << s.x, s.y;
    const Newton nr = solve(s, std::move(z0), 0.0, StepRule::AlgebraicOnly);
    if (!nr.converged) {
        throw StepNewtonDiverged("algebraic re-solve after the event at t = " + std::to_string(s.t) + " s failed",
                                 s.t, nr.iterations, mismatch_ranking(nr.z));
    }
    s.x = nr.z.head(s.x.size());
    s.y = nr.z.tail(s.y.size());
    s.x_prime = rates(s.x, s.y);
}

Trajectory Simulator::make_trajectory() const
{
    std::vector<Channel> ch;
    for (const auto& b : case_.network.buses()) {
        ch.push_back({"bus" + std::to_string(b.id) + ".v", ChannelKind::BusVoltage, 0});
        ch.push_back({"bus" + std::to_string(b.id) + ".theta", ChannelKind::BusAngle, 0});
    }
    for (const auto& dp : case_.devices) {
        const Device& d = *dp;
        const std::string pre = device_prefix(d);
        for (std::size_t j = 0; j < d.size(); ++j) {
            const auto& name = d.state_names()[j];
            ChannelKind kind = ChannelKind::AlgebraicState;
            if (d.t_diag()[j] != 0.0) {
                kind = is_angle_state(name) ? ChannelKind::AngleState : ChannelKind::DifferentialState;
            }
            ch.push_back({pre + name, kind, d.id()});
        }
        if (d.type() == "gfm" || d.type() == "gfl") {
            ch.push_back({pre + "omega", ChannelKind::Frequency, d.id()});
        }
        if (!d.injects_power()) {
            continue;
        }
        ch.push_back({pre + "ps", ChannelKind::PowerSplit, d.id()});
        ch.push_back({pre + "pt", ChannelKind::PowerSplit, d.id()});
        ch.push_back({pre + "p", ChannelKind::PowerSplit, d.id()});
        if (d.type() == "rlc_load") {
            ch.push_back({pre + "pd", ChannelKind::PowerSplit, d.id()});
        }
        if (d.type() == "machine") {
            ch.push_back({pre + "ps_approx", ChannelKind::PowerSplit, d.id()});
        }
    }
    ch.push_back({"omega_coi", ChannelKind::Frequency, 0});
    return Trajectory(std::move(ch));
}

void Simulator::record(Trajectory& traj, const SystemState& s) const
{
    std::vector<double> row;
    row.reserve(traj.columns());
    for (std::size_t i = 0; i < n_; ++i) {
        row.push_back(s.y[static_cast<Eigen::Index>(i)]);
        row.push_back(s.y[static_cast<Eigen::Index>(n_ + i)]);
    }
    const Signals sig = signals(s.x);
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        const Device& d = *case_.devices[k];
        const std::span<const double> x(s.x.data() + offsets_[k], d.size());
        const std::span<const double> xp(s.x_prime.data() + offsets_[k], d.size());
        row.insert(row.end(), x.begin(), x.end());
        const BusVoltage bus = bus_of(k, s.y);
        if (d.type() == "gfm" || d.type() == "gfl") {
            row.push_back(d.frequency(x, xp, bus, sig).value_or(case_.omega_n));
        }
        if (!d.injects_power()) {
            continue;
        }
        SplitChannels sc;
        if (!off_[k]) {
            sc = d.split(x, xp, bus, sig);
        }
        row.push_back(sc.p_s);
        row.push_back(sc.p_t);
        row.push_back(sc.p);
        if (d.type() == "rlc_load") {
            row.push_back(sc.p_dissipated);
        }
        if (d.type() == "machine") {
            row.push_back(sc.p_s_approx.value_or(sc.p_s));
        }
    }
    row.push_back(reported_frequency(s));
    traj.append(s.t, row);
}

double Simulator::reported_frequency(const SystemState& s) const
{
    const Signals sig = signals(s.x);
    if (!coi_terms().empty()) {
        return sig.omega_coi;
    }
    double num = 0.0;
    double den = 0.0;
    std::optional<std::size_t> largest_gfl;
    for (std::size_t k = 0; k < case_.devices.size(); ++k) {
        if (off_[k]) {
            continue;
        }
        const Device& d = *case_.devices[k];
        const std::span<const double> x(s.x.data() + offsets_[k], d.size());
        const std::span<const double> xp(s.x_prime.data() + offsets_[k], d.size());
        if (d.type() == "gfm") {
            num += d.coi_weight() * d.frequency(x, xp, bus_of(k, s.y), sig).value_or(case_.omega_n);
            den += d.coi_weight();
        } else if (d.type() == "gfl") {
            if (!largest_gfl ||
                std::abs(d.dispatch()) > std::abs(case_.devices[*largest_gfl]->dispatch())) {
                largest_gfl = k;
            }
        }
    }
    if (den > 0.0) {
        return num / den;
    }
    if (largest_gfl) {
        const std::size_t k = *largest_gfl;
        const Device& d = *case_.devices[k];
        return d.frequency({s.x.data() + offsets_[k], d.size()}, {s.x_prime.data() + offsets_[k], d.size()},
                           bus_of(k, s.y), sig)
            .value_or(case_.omega_n);
    }
    return case_.omega_n;
}

RunResult Simulator::run(const Scenario& scenario)
{
    if (!(scenario.dt > 0.0) || !(scenario.t_end > 0.0)) {
        throw ConfigurationError("scenario '" + scenario.label + "' needs dt > 0 and t_end > 0");
    }
    std::vector<Event> events = scenario.events;
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    for (const auto& e : events) {
        if (e.t < 0.0 || !(e.t < scenario.t_end)) {
            throw ConfigurationError("scenario '" + scenario.label + "': event time " + std::to_string(e.t) +
                                     " s lies outside [0, t_end)");
        }
    }

    RunResult result;
    SystemState s = initialize();
    result.initial_powerflow = pf_;
    result.trajectory = make_trajectory();
    record(result.trajectory, s);

    std::size_t next = 0;
    const double dt = scenario.dt;
    try {
        while (s.t < scenario.t_end - kTimeSnap) {
            bool damp = false;
            while (next < events.size() && events[next].t <= s.t + kTimeSnap) {
                apply_event(events[next], s);
                ++next;
                damp = opts_.damp_after_events;
            }
            double t_new = s.t + dt;
            if (next < events.size() && events[next].t < t_new - kTimeSnap) {
                t_new = events[next].t;
            }
            if (next < events.size() && std::abs(events[next].t - t_new) <= kTimeSnap) {
                t_new = events[next].t;
            }
            if (t_new > scenario.t_end - kTimeSnap) {
                t_new = scenario.t_end;
            }
            s = damp ? step_damped(s, t_new - s.t) : step(s, t_new - s.t);
            s.t = t_new;
            record(result.trajectory, s);
        }
    } catch (const StepNewtonDiverged& e) {
        result.failure = StepFailure{e.t(), e.iterations(), e.what(), e.ranking()};
    }
    return result;
}

RunResult run(const DynamicCase& c, const Scenario& scenario, SimOptions opts)
{
    Simulator sim(c, opts);
    return sim.run(scenario);
}

std::optional<double> detect_steady_state(const Trajectory& traj, double tol, double window)
{
    const auto& t = traj.times();
    if (t.empty()) {
        return std::nullopt;
    }
    std::vector<std::size_t> cols, angles;
    for (std::size_t c = 0; c < traj.columns(); ++c) {
        if (traj.channels()[c].kind == ChannelKind::DifferentialState) {
            cols.push_back(c);
        } else if (traj.channels()[c].kind == ChannelKind::AngleState) {
            angles.push_back(c);
        }
    }
    // angles may drift at a constant rate in steady state, so their rate must be constant instead
    auto fast_at = [&](std::size_t i) {
        const double h = t[i] - t[i - 1];
        for (std::size_t c : cols) {
            if (!(std::abs(traj.at(i, c) - traj.at(i - 1, c)) / h < tol)) {
                return true;
            }
        }
        if (i >= 2) {
            const double h0 = t[i - 1] - t[i - 2];
            for (std::size_t c : angles) {
                const double r1 = (traj.at(i, c) - traj.at(i - 1, c)) / h;
                const double r0 = (traj.at(i - 1, c) - traj.at(i - 2, c)) / h0;
                if (!(std::abs(r1 - r0) / h < tol)) {
                    return true;
                }
            }
        }
        return false;
    };
    // scan backwards for the last sample whose outgoing rate exceeds tol
    std::size_t first_quiet = 0;
    for (std::size_t i = t.size() - 1; i > 0; --i) {
        if (fast_at(i)) {
            first_quiet = i;
            break;
        }
    }
    if (t.back() - t[first_quiet] < window - kTimeSnap) {
        return std::nullopt;
    }
    return t[first_quiet];
}

}  // namespace slackdyn
