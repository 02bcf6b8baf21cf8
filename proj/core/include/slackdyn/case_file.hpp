#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "slackdyn/dynsim.hpp"

namespace slackdyn {

inline constexpr int kCaseFormatVersion = 1;

/// A validated case file: the dynamic model plus its named scenarios.
struct CaseDefinition {
    std::string name;
    std::string notes;
    double s_base = 100.0;
    double f_nominal = 60.0;
    DynamicCase model;
    std::vector<Scenario> scenarios;

    /// Throws ValidationError for an unknown name.
    const Scenario& scenario(std::string_view label) const;
};

/// Throws ParseError (malformed JSON, unknown or mistyped fields, with the
/// offending location) or ValidationError (inconsistent content).
CaseDefinition parse_case(const std::filesystem::path& path);
CaseDefinition parse_case_text(std::string_view text, const std::string& source = "<memory>");

}  // namespace slackdyn
