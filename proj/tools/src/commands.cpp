#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "log.hpp"
#include "slackdyn/case_file.hpp"
#include "slackdyn/csv_io.hpp"
#include "slackdyn/dynsim.hpp"
#include "slackdyn/powerflow.hpp"
#include "slackdyn/report_json.hpp"
#include "slackdyn/slackcheck.hpp"
#include "slackdyn/svg_plot.hpp"

namespace slackdyn::cli {

namespace {

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::optional<CaseDefinition> load_case(const std::filesystem::path& path)
{
    try {
        return parse_case(path);
    } catch (const ParseError& e) {
        log_error(std::string("parse error: ") + e.what());
    } catch (const ValidationError& e) {
        log_error(std::string("invalid case: ") + e.what());
    }
    return std::nullopt;
}

std::map<int, double> equal_participation(const PowerFlowProblem& pf)
{
    std::map<int, double> k;
    const auto& buses = pf.network.buses();
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (pf.injections[i].pv || pf.injections[i].p_gen > 0.0) {
            k[buses[i].id] = 1.0;
        }
    }
    for (auto& [bus, v] : k) {
        v = 1.0 / static_cast<double>(k.size());
    }
    return k;
}

/// Applies --slack-mode / --participation; nullopt on a usage error.
std::optional<SlackSpec> choose_slack(const PowerFlowConfig& cfg, const CaseDefinition& def,
                                      const PowerFlowProblem& pf)
{
    const SlackSpec& base = pf.slack;
    if (cfg.slack_mode.empty()) {
        return base;
    }
    if (cfg.slack_mode == "single") {
        return SlackSpec::single(base.reference_bus, base.theta_ref);
    }
    if (cfg.slack_mode == "distributed") {
        std::map<int, double> k;
        if (cfg.participation == "file") {
            if (!def.model.initial_slack || def.model.initial_slack->participation.empty()) {
                log_error("--participation file: the case has no powerflow.participation table");
                return std::nullopt;
            }
            k = def.model.initial_slack->participation;
        } else {
            k = equal_participation(pf);
        }
        return SlackSpec::distributed(base.reference_bus, k, base.theta_ref);
    }
    if (cfg.slack_mode == "dynamic") {
        DroopSlackParams droop;
        if (def.model.initial_slack && def.model.initial_slack->mode == SlackMode::DynamicEquilibrium) {
            droop = def.model.initial_slack->droop;
        }
        return SlackSpec::dynamic_equilibrium(base.reference_bus, droop, base.theta_ref);
    }
    log_error("unknown slack mode '" + cfg.slack_mode + "'");
    return std::nullopt;
}

void print_solution(std::ostream& out, const CaseDefinition& def, const PowerFlowProblem& pf, const SlackSpec& spec,
                    const PowerFlowSolution& sol)
{
    const auto& buses = pf.network.buses();
    out << "case " << def.name << ", " << buses.size() << " buses, converged in " << sol.iterations
        << " iterations (max mismatch " << fmt("%.3e", sol.max_mismatch) << " pu)\n";
    out << "  bus        v [pu]    theta [rad]     p_gen [pu]     q_gen [pu]    pickup [pu]\n";
    for (std::size_t i = 0; i < buses.size(); ++i) {
        double k = 0.0;
        if (spec.mode == SlackMode::Single || spec.participation.empty()) {
            k = buses[i].id == spec.reference_bus ? 1.0 : 0.0;
        } else if (auto it = spec.participation.find(buses[i].id); it != spec.participation.end()) {
            k = it->second;
        }
        char line[160];
        std::snprintf(line, sizeof line, "%5d %13.8f %14.8f %14.8f %14.8f %14.8f\n", buses[i].id, sol.v[i],
                      sol.theta[i] + 0.0, sol.p_gen[i], sol.q_gen[i], k * sol.sigma_hat);
        out << line;
    }
    out << "sigma_hat = " << fmt("%.10f", sol.sigma_hat) << " pu\n";
    out << "losses    = " << fmt("%.10f", sol.losses) << " pu\n";
}

struct ScenarioOutcome {
    std::string label;
    int code = kExitOk;
};

CapabilityDocument capability(const CaseDefinition& def, const Scenario& sc, const RunResult& result,
                              const RunConfig& cfg)
{
    CapabilityDocument doc;
    doc.case_name = def.name;
    doc.scenario = sc.label;
    doc.failure = result.failure;
    try {
        doc.classification = classify(describe(def.model));
    } catch (const Error& e) {
        log_debug(std::string("classification skipped: ") + e.what());
    }
    const Trajectory& traj = result.trajectory;
    const auto cands = default_candidates(traj);
    try {
        doc.strong = check_strong(traj, cands, cfg.strong_tol);
    } catch (const Error& e) {
        doc.strong_error = e.what();
    }
    try {
        doc.weak = check_weak(traj, cands, cfg.weak_tol);
    } catch (const Error& e) {
        doc.weak_error = e.what();
    }
    try {
        doc.audit = audit_power_split(traj);
    } catch (const Error& e) {
        log_debug(std::string("power split audit skipped: ") + e.what());
    }
    return doc;
}

void write_plot(const std::filesystem::path& path, const CaseDefinition& def, const Trajectory& traj)
{
    const auto& buses = def.model.network.buses();
    const int bus = def.model.network.has_bus(1) ? 1 : buses.front().id;
    const std::string name = "bus" + std::to_string(bus) + ".theta";
    PlotOptions opts;
    opts.title = "Voltage phase angle at bus " + std::to_string(bus) + " (" + def.name + ")";
    opts.y_label = "theta" + std::to_string(bus) + " [rad]";
    write_svg(path, {{name, traj.times(), traj.column(name)}}, opts);
}

ScenarioOutcome run_one(const CaseDefinition& def, const Scenario& sc, const RunConfig& cfg,
                        const std::filesystem::path& dir, std::mutex& out_mutex, std::ostream& out)
{
    ScenarioOutcome o{sc.label, kExitOk};
    log_info("running " + def.name + " / " + sc.label + " to t = " + fmt("%g", sc.t_end) + " s, dt = " +
             fmt("%g", sc.dt) + " s");
    RunResult result;
    try {
        result = run(def.model, sc);
    } catch (const PowerFlowFailed& e) {
        log_error(sc.label + ": " + e.what());
        o.code = kExitPowerFlow;
        return o;
    } catch (const Error& e) {
        log_error(sc.label + ": " + e.what());
        o.code = kExitDynamic;
        return o;
    }

    std::filesystem::create_directories(dir);
    write_trajectory_csv(result.trajectory, dir / "trajectory.csv");
    write_powersplit_csv(result.trajectory, dir / "powersplit.csv");
    const CapabilityDocument doc = capability(def, sc, result, cfg);
    {
        std::ofstream f(dir / "capability.json", std::ios::binary);
        f << to_json(doc);
    }
    if (cfg.plot) {
        write_plot(dir / "theta1.svg", def, result.trajectory);
    }

    std::ostringstream msg;
    const auto& times = result.trajectory.times();
    if (result.failure) {
        const auto& f = *result.failure;
        msg << sc.label << ": Newton diverged at t = " << fmt("%.6g", f.t) << " s after " << f.iterations
            << " iterations; trajectory ends at t = " << fmt("%.6g", times.empty() ? 0.0 : times.back()) << " s\n";
        for (std::size_t k = 0; k < f.ranking.size() && k < 3; ++k) {
            msg << "  bus " << f.ranking[k].bus << " mismatch dp = " << fmt("%.3e", f.ranking[k].dp)
                << ", dq = " << fmt("%.3e", f.ranking[k].dq) << '\n';
        }
        o.code = kExitDynamic;
    } else {
        msg << sc.label << ": completed " << times.size() << " samples to t = "
            << fmt("%.6g", times.empty() ? 0.0 : times.back()) << " s; strong verdict "
            << (doc.strong ? to_string(doc.strong->verdict) : "n/a (" + doc.strong_error + ")") << '\n';
    }
    msg << "  outputs in " << dir.string() << '\n';
    std::lock_guard lock(out_mutex);
    out << msg.str();
    return o;
}

}  // namespace

int cmd_powerflow(const PowerFlowConfig& cfg, std::ostream& out)
{
    const auto def = load_case(cfg.case_path);
    if (!def) {
        return kExitUsage;
    }
    PowerFlowProblem pf;
    try {
        pf = static_problem(def->model);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitUsage;
    }
    std::optional<SlackSpec> spec;
    try {
        spec = choose_slack(cfg, *def, pf);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitUsage;
    }
    if (!spec) {
        return kExitUsage;
    }
    std::vector<std::pair<int, double>> trace;
    PowerFlowOptions opts;
    opts.on_iteration = [&](int k, double m) {
        trace.emplace_back(k, m);
        log_debug("iteration " + std::to_string(k) + ": max mismatch " + fmt("%.3e", m));
    };
    try {
        const PowerFlowSolution sol = solve_powerflow(pf.network, pf.injections, *spec, opts);
        print_solution(out, *def, pf, *spec, sol);
        return kExitOk;
    } catch (const NonConvergence& e) {
        log_error(e.what());
    } catch (const SingularJacobian& e) {
        log_error(e.what());
    } catch (const Error& e) {
        log_error(e.what());
        return kExitUsage;
    }
    for (const auto& [k, m] : trace) {
        log_error("  iteration " + std::to_string(k) + ": max mismatch " + fmt("%.6e", m));
    }
    return kExitPowerFlow;
}

int cmd_run(const RunConfig& cfg, std::ostream& out)
{
    if ((cfg.t_end && !(*cfg.t_end > 0.0)) || (cfg.dt && !(*cfg.dt > 0.0)) || cfg.jobs < 1) {
        log_error("--t-end, --dt and --jobs must be positive");
        return kExitUsage;
    }
    const auto def = load_case(cfg.case_path);
    if (!def) {
        return kExitUsage;
    }
    std::vector<Scenario> scenarios;
    try {
        for (const auto& label : cfg.scenarios) {
            Scenario sc = def->scenario(label);
            if (cfg.t_end) {
                sc.t_end = *cfg.t_end;
            }
            if (cfg.dt) {
                sc.dt = *cfg.dt;
            }
            for (const auto& e : sc.events) {
                if (e.t >= sc.t_end) {
                    log_info(label + ": event at t = " + fmt("%g", e.t) + " s lies beyond the end time");
                }
            }
            scenarios.push_back(std::move(sc));
        }
    } catch (const ValidationError& e) {
        log_error(e.what());
        return kExitUsage;
    }

    std::vector<ScenarioOutcome> outcomes(scenarios.size());
    std::mutex out_mutex;
    auto dir_of = [&](const Scenario& sc) {
        return scenarios.size() == 1 ? cfg.out_dir : cfg.out_dir / sc.label;
    };
    auto work = [&](std::size_t k) {
        try {
            outcomes[k] = run_one(*def, scenarios[k], cfg, dir_of(scenarios[k]), out_mutex, out);
        } catch (const std::exception& e) {
            log_error(scenarios[k].label + ": " + e.what());
            outcomes[k] = {scenarios[k].label, kExitDynamic};
        }
    };
    const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), scenarios.size());
    if (jobs <= 1) {
        for (std::size_t k = 0; k < scenarios.size(); ++k) {
            work(k);
        }
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < scenarios.size(); k = next++) {
                    work(k);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    int code = kExitOk;
    for (const auto& o : outcomes) {
        code = std::max(code, o.code);
    }
    return code;
}

int cmd_check(const CheckConfig& cfg, std::ostream& out)
{
    if (cfg.mode != "strong" && cfg.mode != "weak") {
        log_error("--mode must be strong or weak");
        return kExitUsage;
    }
    if (!(cfg.tol > 0.0)) {
        log_error("--tol must be positive");
        return kExitUsage;
    }
    Trajectory traj;
    try {
        traj = read_trajectory_csv(cfg.trajectory);
    } catch (const SchemaError& e) {
        log_error(std::string("schema error: ") + e.what());
        return kExitUsage;
    }
    const auto cands = default_candidates(traj);
    try {
        if (cfg.mode == "strong") {
            const CapabilityReport r = check_strong(traj, cands, cfg.tol);
            out << to_text(r, "strong");
            return r.verdict == Verdict::Strong ? kExitOk : kExitCheckFailed;
        }
        const CapabilityReport r = check_weak(traj, cands, cfg.tol);
        out << to_text(r, "weak");
        return r.verdict == Verdict::None ? kExitCheckFailed : kExitOk;
    } catch (const Error& e) {
        out << cfg.mode << " check: verdict None (" << e.what() << ")\n";
        return kExitCheckFailed;
    }
}

}  // namespace slackdyn::cli
