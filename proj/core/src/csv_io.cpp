#include "slackdyn/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "slackdyn/error.hpp"

namespace slackdyn {

namespace {

void put(std::ostream& out, double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out << buf;
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

void write_columns(const Trajectory& traj, const std::vector<std::size_t>& cols, std::ostream& out)
{
    out << "t";
    for (std::size_t c : cols) {
        out << ',' << traj.channels()[c].name;
    }
    out << '\n';
    for (std::size_t i = 0; i < traj.samples(); ++i) {
        put(out, traj.times()[i]);
        for (std::size_t c : cols) {
            out << ',';
            put(out, traj.at(i, c));
        }
        out << '\n';
    }
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

}  // namespace

ChannelKind kind_from_name(const std::string& name)
{
    const auto dot = name.find('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (name.starts_with("bus")) {
        return leaf == "theta" ? ChannelKind::BusAngle : ChannelKind::BusVoltage;
    }
    if (name == "omega_coi") {
        return ChannelKind::Frequency;
    }
    if (leaf == "ps" || leaf == "pt" || leaf == "p" || leaf == "pd" || leaf == "ps_approx") {
        return ChannelKind::PowerSplit;
    }
    if (leaf == "delta" || leaf == "alpha" || leaf == "theta_hat") {
        return ChannelKind::AngleState;
    }
    return ChannelKind::DifferentialState;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out)
{
    std::vector<std::size_t> cols(traj.columns());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        cols[c] = c;
    }
    write_columns(traj, cols, out);
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path)
{
    auto out = open_out(path);
    write_trajectory_csv(traj, out);
}

void write_powersplit_csv(const Trajectory& traj, const std::filesystem::path& path)
{
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < traj.columns(); ++c) {
        if (traj.channels()[c].kind == ChannelKind::PowerSplit) {
            cols.push_back(c);
        }
    }
    auto out = open_out(path);
    write_columns(traj, cols, out);
}

Trajectory read_trajectory_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError("trajectory CSV is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_line(line);
    if (header.empty() || header.front() != "t") {
        throw SchemaError("trajectory CSV must start with a 't' column");
    }
    std::vector<Channel> channels;
    for (std::size_t k = 1; k < header.size(); ++k) {
        if (header[k].empty()) {
            throw SchemaError("empty column name at position " + std::to_string(k + 1));
        }
        Channel ch;
        ch.name = header[k];
        ch.kind = kind_from_name(ch.name);
        channels.push_back(ch);
    }
    Trajectory traj;
    try {
        traj = Trajectory(std::move(channels));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }

    std::vector<double> row(traj.columns());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " fields, header has " + std::to_string(header.size()));
        }
        std::vector<double> values(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const char* b = cells[k].data();
            const char* e = b + cells[k].size();
            const auto res = std::from_chars(b, e, values[k]);
            if (res.ec != std::errc() || res.ptr != e) {
                throw SchemaError("line " + std::to_string(line_no) + ", column " + header[k] +
                                  ": not a number");
            }
        }
        std::copy(values.begin() + 1, values.end(), row.begin());
        try {
            traj.append(values[0], row);
        } catch (const std::invalid_argument& e) {
            throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (traj.empty()) {
        throw SchemaError("trajectory CSV has a header but no samples");
    }
    return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open trajectory file " + path.string());
    }
    return read_trajectory_csv(in);
}

}  // namespace slackdyn
