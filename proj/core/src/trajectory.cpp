#include "slackdyn/trajectory.hpp"

#include <stdexcept>

namespace slackdyn {

Trajectory::Trajectory(std::vector<Channel> channels) : channels_(std::move(channels))
{
    for (std::size_t k = 0; k < channels_.size(); ++k) {
        if (!lookup_.emplace(channels_[k].name, k).second) {
            throw std::invalid_argument("duplicate trajectory channel '" + channels_[k].name + "'");
        }
    }
}

void Trajectory::append(double t, std::span<const double> row)
{
    if (row.size() != channels_.size()) {
        throw std::invalid_argument("trajectory row has " + std::to_string(row.size()) + " values, expected " +
                                    std::to_string(channels_.size()));
    }
    if (!times_.empty() && !(t > times_.back())) {
        throw std::invalid_argument("trajectory times must increase strictly");
    }
    times_.push_back(t);
    data_.insert(data_.end(), row.begin(), row.end());
}

std::optional<std::size_t> Trajectory::find(std::string_view name) const
{
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t Trajectory::index(std::string_view name) const
{
    if (const auto k = find(name)) {
        return *k;
    }
    throw std::out_of_range("no trajectory channel '" + std::string(name) + "'");
}

std::vector<double> Trajectory::column(std::size_t c) const
{
    std::vector<double> out(times_.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = at(i, c);
    }
    return out;
}

Trajectory Trajectory::shifted(double dt) const
{
    Trajectory out = *this;
    for (double& t : out.times_) {
        t += dt;
    }
    return out;
}

}  // namespace slackdyn
