#pragma once

#include <optional>
#include <string>

#include "slackdyn/dynsim.hpp"
#include "slackdyn/slackcheck.hpp"

namespace slackdyn {

inline constexpr const char* kCapabilitySchema = "slackdyn.capability/1";

/// Everything written to capability.json after a run. Checks that could not
/// be carried out keep their error message instead of a report.
struct CapabilityDocument {
    std::string case_name;
    std::string scenario;
    std::optional<StepFailure> failure;
    std::optional<SlackDescriptor> classification;
    std::optional<CapabilityReport> strong;
    std::string strong_error;
    std::optional<CapabilityReport> weak;
    std::string weak_error;
    std::optional<PowerSplitAudit> audit;
};

std::string to_json(const CapabilityDocument& doc);
std::string to_json(const CapabilityReport& report);

/// Human-readable summary of one check.
std::string to_text(const CapabilityReport& report, const std::string& mode);

}  // namespace slackdyn
