#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slackdyn {

enum class ChannelKind {
    BusVoltage,
    BusAngle,
    DifferentialState,
    AngleState,  ///< differential angle; drifts in a steady state seen from a rotating frame
    AlgebraicState,
    PowerSplit,
    Frequency,
    Signal,
};

struct Channel {
    std::string name;
    ChannelKind kind = ChannelKind::Signal;
    int device = 0;  ///< owning device id, 0 for bus and system channels
};

/// Time series with named columns, stored row by row. Append-only.
class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(std::vector<Channel> channels);

    /// Throws std::invalid_argument when t does not increase or the row width is wrong.
    void append(double t, std::span<const double> row);

    std::size_t samples() const noexcept { return times_.size(); }
    std::size_t columns() const noexcept { return channels_.size(); }
    bool empty() const noexcept { return times_.empty(); }

    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<Channel>& channels() const noexcept { return channels_; }

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws std::out_of_range for an unknown name.
    std::size_t index(std::string_view name) const;

    double at(std::size_t sample, std::size_t column) const { return data_[sample * channels_.size() + column]; }
    std::span<const double> row(std::size_t sample) const
    {
        return {data_.data() + sample * channels_.size(), channels_.size()};
    }
    std::vector<double> column(std::size_t column) const;
    std::vector<double> column(std::string_view name) const { return column(index(name)); }

    /// Copy with every time shifted by dt.
    Trajectory shifted(double dt) const;

private:
    std::vector<Channel> channels_;
    std::unordered_map<std::string, std::size_t> lookup_;
    std::vector<double> times_;
    std::vector<double> data_;
};

}  // namespace slackdyn
