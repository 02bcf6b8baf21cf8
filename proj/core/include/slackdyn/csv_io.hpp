#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "slackdyn/trajectory.hpp"

namespace slackdyn {

/// Header `t,<channels...>`, 12 significant digits, LF line endings.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

/// Only the time column and the power-split channels.
void write_powersplit_csv(const Trajectory& traj, const std::filesystem::path& path);

/// Throws SchemaError on a missing or malformed header, ragged or
/// non-numeric rows, or times that do not increase.
Trajectory read_trajectory_csv(std::istream& in);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Channel kind implied by a column name of the emitted schema.
ChannelKind kind_from_name(const std::string& name);

}  // namespace slackdyn
