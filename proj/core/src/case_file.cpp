#include "slackdyn/case_file.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "slackdyn/error.hpp"

namespace slackdyn {

namespace {

using nlohmann::json;

/// Strict view of one JSON object: every field must be read exactly once
/// with the right type, leftovers are rejected by finish().
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            throw ParseError(where_ + ": expected an object");
        }
    }

    const std::string& where() const { return where_; }
    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key)
    {
        const json& v = get(key);
        if (!v.is_number()) {
            throw ParseError(loc(key) + ": expected a number");
        }
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    int integer(const std::string& key)
    {
        const json& v = get(key);
        if (!v.is_number_integer()) {
            throw ParseError(loc(key) + ": expected an integer");
        }
        return v.get<int>();
    }

    std::string text(const std::string& key)
    {
        const json& v = get(key);
        if (!v.is_string()) {
            throw ParseError(loc(key) + ": expected a string");
        }
        return v.get<std::string>();
    }
    std::string text(const std::string& key, const std::string& fallback) { return has(key) ? text(key) : fallback; }

    bool flag(const std::string& key, bool fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const json& v = get(key);
        if (!v.is_boolean()) {
            throw ParseError(loc(key) + ": expected true or false");
        }
        return v.get<bool>();
    }

    const json& array(const std::string& key)
    {
        const json& v = get(key);
        if (!v.is_array()) {
            throw ParseError(loc(key) + ": expected an array");
        }
        return v;
    }

    const json& raw(const std::string& key) { return get(key); }

    std::string loc(const std::string& key) const { return where_ + "." + key; }

    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.contains(key)) {
                throw ParseError(loc(key) + ": unknown field");
            }
        }
    }

private:
    const json& get(const std::string& key)
    {
        if (!j_.contains(key)) {
            throw ParseError(loc(key) + ": missing required field");
        }
        used_.insert(key);
        return j_.at(key);
    }

    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

std::string item(const std::string& list, std::size_t k)
{
    return list + "[" + std::to_string(k) + "]";
}

DcSideParams read_dc(Fields& f)
{
    DcSideParams dc;
    if (!f.has("dc")) {
        return dc;
    }
    Fields d(f.raw("dc"), f.loc("dc"));
    dc.g_dc = d.number("g_dc", dc.g_dc);
    dc.c_dc = d.number("c_dc", dc.c_dc);
    dc.v_dc_ref = d.number("v_dc_ref", dc.v_dc_ref);
    d.finish();
    return dc;
}

std::unique_ptr<Device> read_device(Fields& f, int& integral_governors)
{
    const std::string type = f.text("type");
    const int id = f.integer("id");
    if (type == "agc") {
        AgcParams a;
        a.K_o = f.number("K_o");
        a.xi0 = f.number("xi0", 0.0);
        f.finish();
        return std::make_unique<AgcDevice>(id, a);
    }
    const int bus = f.integer("bus");
    if (type == "machine") {
        MachineParams m;
        m.M = f.number("M");
        m.D = f.number("D", 0.0);
        m.tau_e_max = f.number("tau_e_max");
        const double p_set = f.number("p_set");
        const double v_set = f.number("v_set", 1.0);
        std::optional<GovernorParams> gov;
        if (f.has("governor")) {
            Fields g(f.raw("governor"), f.loc("governor"));
            GovernorParams gp;
            const std::string mode = g.text("mode", "droop");
            if (mode == "integral") {
                gp.mode = GovernorMode::Integral;
                ++integral_governors;
            } else if (mode != "droop") {
                throw ParseError(g.loc("mode") + ": expected \"droop\" or \"integral\"");
            }
            gp.R = g.number("R");
            gp.T = g.number("T");
            gp.agc_share = g.number("agc_share", 0.0);
            g.finish();
            gov = gp;
        }
        f.finish();
        return std::make_unique<MachineDevice>(id, bus, m, gov, p_set, v_set);
    }
    if (type == "gfm") {
        GfmParams g;
        const std::string variant = f.text("variant", "droop");
        if (variant == "vsm") {
            g.variant = GfmVariant::Vsm;
        } else if (variant != "droop") {
            throw ParseError(f.loc("variant") + ": expected \"droop\" or \"vsm\"");
        }
        g.D_alpha = f.number("D_alpha");
        g.H_alpha = f.number("H_alpha", 0.0);
        g.M_alpha = f.number("M_alpha", 0.0);
        g.x_c = f.number("x_c", g.x_c);
        g.r_f = f.number("r_f", 0.0);
        g.v_set = f.number("v_set", 1.0);
        const double p_set = f.number("p_set");
        g.dc = read_dc(f);
        f.finish();
        return std::make_unique<GfmDevice>(id, bus, g, p_set);
    }
    if (type == "gfl") {
        GflParams g;
        g.p_set = f.number("p_set");
        g.v_set = f.number("v_set", 1.0);
        g.kp_pll = f.number("kp_pll", g.kp_pll);
        g.ki_pll = f.number("ki_pll", g.ki_pll);
        g.r_f = f.number("r_f", g.r_f);
        g.l_f = f.number("l_f", g.l_f);
        g.c_f = f.number("c_f", g.c_f);
        g.dc_droop = f.flag("dc_droop", g.dc_droop);
        g.dc_source = f.flag("dc_source", g.dc_source);
        g.T_dc = f.number("T_dc", g.T_dc);
        g.R_dc = f.number("R_dc", g.R_dc);
        g.kp_dc = f.number("kp_dc", g.kp_dc);
        g.ki_dc = f.number("ki_dc", g.ki_dc);
        g.kp_v = f.number("kp_v", g.kp_v);
        g.ki_v = f.number("ki_v", g.ki_v);
        g.T_i = f.number("T_i", g.T_i);
        g.T_vm = f.number("T_vm", g.T_vm);
        g.dc = read_dc(f);
        f.finish();
        return std::make_unique<GflDevice>(id, bus, g);
    }
    if (type == "ideal_slack") {
        IdealSlackParams p;
        const std::string mode = f.text("mode", "integrator");
        if (mode == "droop") {
            p.mode = IdealSlackMode::Droop;
        } else if (mode != "integrator") {
            throw ParseError(f.loc("mode") + ": expected \"integrator\" or \"droop\"");
        }
        p.K = f.number("K", p.K);
        p.H = f.number("H", p.H);
        p.T = f.number("T", p.T);
        p.theta_ref = f.number("theta_ref", p.theta_ref);
        p.p0 = f.number("p0", p.p0);
        p.v_set = f.number("v_set", p.v_set);
        f.finish();
        return std::make_unique<IdealSlackDevice>(id, bus, p);
    }
    throw ParseError(f.loc("type") + ": unknown device type \"" + type + "\"");
}

SlackSpec read_slack(Fields& f)
{
    const std::string mode = f.text("slack_mode", "single");
    const int ref = f.integer("reference_bus");
    const double theta_ref = f.number("theta_ref", 0.0);
    std::map<int, double> k;
    if (f.has("participation")) {
        const json& p = f.raw("participation");
        if (!p.is_object()) {
            throw ParseError(f.loc("participation") + ": expected an object mapping bus ids to factors");
        }
        for (const auto& [bus, value] : p.items()) {
            if (!value.is_number()) {
                throw ParseError(f.loc("participation") + "." + bus + ": expected a number");
            }
            try {
                k[std::stoi(bus)] = value.get<double>();
            } catch (const std::exception&) {
                throw ParseError(f.loc("participation") + "." + bus + ": key is not a bus id");
            }
        }
    }
    DroopSlackParams droop;
    if (f.has("droop")) {
        Fields d(f.raw("droop"), f.loc("droop"));
        droop.K = d.number("K", droop.K);
        droop.H = d.number("H", droop.H);
        droop.T = d.number("T", droop.T);
        d.finish();
    }
    f.finish();
    if (mode == "single") {
        return SlackSpec::single(ref, theta_ref);
    }
    if (mode == "distributed") {
        return SlackSpec::distributed(ref, k, theta_ref);
    }
    if (mode == "dynamic") {
        auto s = SlackSpec::dynamic_equilibrium(ref, droop, theta_ref);
        s.participation = k;
        return s;
    }
    throw ParseError(f.loc("slack_mode") + ": expected single, distributed or dynamic");
}

Event read_event(Fields& f)
{
    const double t = f.number("t");
    const std::string action = f.text("action");
    Event e;
    if (action == "scale_load") {
        const int bus = f.integer("bus");
        e = Event::scale_load(t, bus, f.number("factor"));
    } else if (action == "set_param") {
        const int dev = f.integer("device");
        const std::string field = f.text("field");
        e = Event::set_param(t, dev, field, f.number("value"));
    } else if (action == "disconnect") {
        e = Event::disconnect(t, f.integer("device"));
    } else {
        throw ParseError(f.loc("action") + ": expected scale_load, set_param or disconnect");
    }
    f.finish();
    return e;
}

std::string line_of(std::string_view text, std::size_t byte)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

const Scenario& CaseDefinition::scenario(std::string_view label) const
{
    for (const auto& s : scenarios) {
        if (s.label == label) {
            return s;
        }
    }
    std::string known;
    for (const auto& s : scenarios) {
        known += (known.empty() ? "" : ", ") + s.label;
    }
    throw ValidationError("case '" + name + "' has no scenario '" + std::string(label) + "' (known: " +
                          (known.empty() ? "none" : known) + ")");
}

CaseDefinition parse_case(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open case file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_case_text(buf.str(), path.string());
}

CaseDefinition parse_case_text(std::string_view text, const std::string& source)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": malformed JSON at " + line_of(text, e.byte));
    }

    CaseDefinition out;
    Fields top(root, source);
    const int version = top.integer("format_version");
    if (version != kCaseFormatVersion) {
        throw ValidationError(source + ": unsupported format_version " + std::to_string(version));
    }
    if (top.has("notes")) {
        const json& n = top.raw("notes");
        if (n.is_string()) {
            out.notes = n.get<std::string>();
        } else if (n.is_array() && std::all_of(n.begin(), n.end(), [](const json& l) { return l.is_string(); })) {
            for (const auto& l : n) {
                out.notes += (out.notes.empty() ? "" : "\n") + l.get<std::string>();
            }
        } else {
            throw ParseError(top.loc("notes") + ": expected a string or an array of strings");
        }
    }
    {
        Fields meta(top.raw("meta"), top.loc("meta"));
        out.name = meta.text("name");
        out.s_base = meta.number("s_base", 100.0);
        out.f_nominal = meta.number("f_nominal", 60.0);
        meta.finish();
    }

    std::vector<Bus> buses;
    const json& jb = top.array("buses");
    for (std::size_t k = 0; k < jb.size(); ++k) {
        Fields f(jb[k], item(top.loc("buses"), k));
        Bus b;
        b.id = f.integer("id");
        b.v_mag = f.number("v", 1.0);
        b.theta = f.number("theta", 0.0);
        b.base_kv = f.number("base_kv", 1.0);
        b.gs = f.number("gs", 0.0);
        b.bs = f.number("bs", 0.0);
        f.finish();
        buses.push_back(b);
    }
    if (buses.empty()) {
        throw ValidationError(source + ": the buses list is empty");
    }
    std::vector<Branch> branches;
    const json& jbr = top.array("branches");
    for (std::size_t k = 0; k < jbr.size(); ++k) {
        Fields f(jbr[k], item(top.loc("branches"), k));
        Branch br;
        br.from_bus = f.integer("from");
        br.to_bus = f.integer("to");
        br.r = f.number("r", 0.0);
        br.x = f.number("x");
        br.b_sh = f.number("b", 0.0);
        br.tap = f.number("tap", 1.0);
        f.finish();
        branches.push_back(br);
    }
    try {
        out.model.network = Network(buses, branches, out.s_base, out.f_nominal);
        if (!out.model.network.is_connected()) {
            throw ValidationError(source + ": the network is not connected");
        }
        build_admittance(out.model.network);
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(source + ": " + e.what());
    }
    out.model.name = out.name;
    const Network& net = out.model.network;
    auto check_bus = [&](int bus, const std::string& where) {
        if (!net.has_bus(bus)) {
            throw ValidationError(where + ": unknown bus " + std::to_string(bus));
        }
    };

    std::set<int> ids;
    auto check_id = [&](int id, const std::string& where) {
        if (!ids.insert(id).second) {
            throw ValidationError(where + ": duplicate device id " + std::to_string(id));
        }
    };

    if (top.has("loads")) {
        const json& jl = top.array("loads");
        for (std::size_t k = 0; k < jl.size(); ++k) {
            Fields f(jl[k], item(top.loc("loads"), k));
            const std::string type = f.text("type", "pq");
            const int bus = f.integer("bus");
            check_bus(bus, f.where());
            if (type == "pq") {
                out.model.loads.push_back({bus, f.number("p"), f.number("q", 0.0)});
                f.finish();
            } else if (type == "rlc") {
                const int id = f.integer("id");
                check_id(id, f.where());
                RlcLoadParams p;
                p.r = f.number("r");
                p.l = f.number("l");
                p.c = f.number("c");
                f.finish();
                try {
                    out.model.devices.push_back(std::make_unique<RlcLoadDevice>(id, bus, p));
                } catch (const ConfigurationError& e) {
                    throw ValidationError(f.where() + ": " + e.what());
                }
            } else {
                throw ParseError(f.loc("type") + ": expected \"pq\" or \"rlc\"");
            }
        }
    }

    int integral_governors = 0;
    bool has_agc = false;
    bool has_agc_share = false;
    const json& jd = top.array("devices");
    for (std::size_t k = 0; k < jd.size(); ++k) {
        Fields f(jd[k], item(top.loc("devices"), k));
        std::unique_ptr<Device> dev;
        try {
            dev = read_device(f, integral_governors);
        } catch (const ConfigurationError& e) {
            throw ValidationError(f.where() + ": " + e.what());
        }
        check_id(dev->id(), f.where());
        if (dev->injects_power()) {
            check_bus(dev->bus(), f.where());
        }
        has_agc = has_agc || dev->provides_xi();
        if (const auto* m = dynamic_cast<const MachineDevice*>(dev.get())) {
            has_agc_share = has_agc_share || (m->governor() && m->governor()->agc_share != 0.0);
        }
        out.model.devices.push_back(std::move(dev));
    }
    if (integral_governors > 1) {
        throw ValidationError(source + ": " + std::to_string(integral_governors) +
                              " governors use integral control; at most one is allowed, otherwise the "
                              "steady-state sharing among them is undetermined");
    }
    if (has_agc && !has_agc_share) {
        throw ValidationError(source + ": an AGC is present but no governor has a nonzero agc_share");
    }

    if (top.has("powerflow")) {
        Fields f(top.raw("powerflow"), top.loc("powerflow"));
        try {
            out.model.initial_slack = read_slack(f);
        } catch (const ConfigurationError& e) {
            throw ValidationError(f.where() + ": " + e.what());
        }
        check_bus(out.model.initial_slack->reference_bus, f.where());
    }

    try {
        Simulator probe(out.model);
    } catch (const ConfigurationError& e) {
        throw ValidationError(source + ": " + e.what());
    }

    if (top.has("scenarios")) {
        const json& js = top.array("scenarios");
        for (std::size_t k = 0; k < js.size(); ++k) {
            Fields f(js[k], item(top.loc("scenarios"), k));
            Scenario s;
            s.label = f.text("name");
            s.t_end = f.number("t_end");
            s.dt = f.number("dt", 0.01);
            if (f.has("events")) {
                const json& je = f.array("events");
                for (std::size_t i = 0; i < je.size(); ++i) {
                    Fields fe(je[i], item(f.loc("events"), i));
                    s.events.push_back(read_event(fe));
                }
            }
            f.finish();
            if (!(s.dt > 0.0) || !(s.t_end > 0.0)) {
                throw ValidationError(f.where() + ": dt and t_end must be positive");
            }
            for (const auto& e : s.events) {
                if (e.t < 0.0 || !(e.t < s.t_end)) {
                    throw ValidationError(f.where() + ": event at t = " + std::to_string(e.t) +
                                          " s is outside [0, t_end)");
                }
                if (e.kind == EventKind::ScaleLoad) {
                    check_bus(e.bus, f.where());
                    const bool has_load = std::any_of(out.model.loads.begin(), out.model.loads.end(),
                                                      [&](const StaticLoad& l) { return l.bus == e.bus; });
                    if (!has_load) {
                        throw ValidationError(f.where() + ": scale_load at bus " + std::to_string(e.bus) +
                                              " which has no PQ load");
                    }
                } else if (!ids.contains(e.device)) {
                    throw ValidationError(f.where() + ": event refers to unknown device " +
                                          std::to_string(e.device));
                }
            }
            for (const auto& prev : out.scenarios) {
                if (prev.label == s.label) {
                    throw ValidationError(f.where() + ": duplicate scenario name '" + s.label + "'");
                }
            }
            out.scenarios.push_back(std::move(s));
        }
    }
    top.finish();
    return out;
}

}  // namespace slackdyn
