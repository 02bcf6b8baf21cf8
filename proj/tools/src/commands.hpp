#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slackdyn::cli {

/// Stable process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitPowerFlow = 2,
    kExitDynamic = 3,
    kExitCheckFailed = 4,
};

struct PowerFlowConfig {
    std::filesystem::path case_path;
    std::string slack_mode;     ///< empty: the case's own choice
    std::string participation;  ///< "equal" or "file"
};

struct RunConfig {
    std::filesystem::path case_path;
    std::vector<std::string> scenarios;
    std::optional<double> t_end;
    std::optional<double> dt;
    std::filesystem::path out_dir;
    bool plot = false;
    int jobs = 1;
    double strong_tol = 1e-4;
    double weak_tol = 1e-4;
};

struct CheckConfig {
    std::filesystem::path trajectory;
    std::string mode;  ///< "strong" or "weak"
    double tol = 1e-4;
};

int cmd_powerflow(const PowerFlowConfig& cfg, std::ostream& out);
int cmd_run(const RunConfig& cfg, std::ostream& out);
int cmd_check(const CheckConfig& cfg, std::ostream& out);

}  // namespace slackdyn::cli
