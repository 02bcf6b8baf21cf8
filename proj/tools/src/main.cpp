#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "log.hpp"

int main(int argc, char** argv)
{
    using namespace slackdyn::cli;
    set_log_level(level_from_env());

    CLI::App app{"Phasor-domain power system dynamics and slack capability analysis"};
    app.require_subcommand(1);

    PowerFlowConfig pf;
    auto* pf_cmd = app.add_subcommand("powerflow", "Solve the static power flow of a case");
    pf_cmd->add_option("--case", pf.case_path, "Case file (JSON)")->required()->check(CLI::ExistingFile);
    pf_cmd->add_option("--slack-mode", pf.slack_mode, "Slack formulation")
        ->check(CLI::IsMember({"single", "distributed", "dynamic"}));
    pf.participation = "equal";
    pf_cmd->add_option("--participation", pf.participation, "Participation factors for the distributed slack")
        ->check(CLI::IsMember({"equal", "file"}));

    RunConfig run;
    double t_end = 0.0;
    double dt = 0.0;
    auto* run_cmd = app.add_subcommand("run", "Simulate one or more scenarios of a case");
    run_cmd->add_option("--case", run.case_path, "Case file (JSON)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--scenario", run.scenarios, "Scenario name(s), comma separated")
        ->required()
        ->delimiter(',');
    auto* t_end_opt = run_cmd->add_option("--t-end", t_end, "Override the end time [s]");
    auto* dt_opt = run_cmd->add_option("--dt", dt, "Override the step size [s]");
    run_cmd->add_option("--out", run.out_dir, "Output directory")->required();
    run_cmd->add_flag("--plot", run.plot, "Write theta1.svg");
    run_cmd->add_option("--jobs", run.jobs, "Scenarios simulated in parallel");
    run_cmd->add_option("--strong-tol", run.strong_tol, "Tolerance of the strong capability check");
    run_cmd->add_option("--weak-tol", run.weak_tol, "Tolerance of the weak capability check");

    CheckConfig check;
    auto* check_cmd = app.add_subcommand("check", "Slack capability check of a trajectory CSV");
    check_cmd->add_option("--traj", check.trajectory, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    check_cmd->add_option("--mode", check.mode, "strong or weak")
        ->required()
        ->check(CLI::IsMember({"strong", "weak"}));
    check_cmd->add_option("--tol", check.tol, "Agreement tolerance [pu]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (*pf_cmd) {
        return cmd_powerflow(pf, std::cout);
    }
    if (*run_cmd) {
        if (*t_end_opt) {
            run.t_end = t_end;
        }
        if (*dt_opt) {
            run.dt = dt;
        }
        return cmd_run(run, std::cout);
    }
    return cmd_check(check, std::cout);
}
