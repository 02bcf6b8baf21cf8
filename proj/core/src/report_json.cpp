#include "slackdyn/report_json.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace slackdyn {

namespace {

using nlohmann::ordered_json;

ordered_json number_or_null(std::optional<double> v)
{
    return v && std::isfinite(*v) ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json report_json(const CapabilityReport& r)
{
    ordered_json j;
    j["verdict"] = to_string(r.verdict);
    j["sigma_hat"] = number_or_null(r.sigma_hat_estimate);
    j["tol"] = r.tol;
    j["window"] = {r.window_start, r.window_end};
    j["period"] = number_or_null(r.period);
    j["used_fallback"] = r.used_fallback;
    ordered_json devs = ordered_json::array();
    for (const auto& d : r.per_device) {
        devs.push_back({{"device", d.device},
                        {"variable", d.variable},
                        {"unit", to_string(d.unit)},
                        {"value", number_or_null(d.value)},
                        {"deviation", number_or_null(d.deviation)},
                        {"settled", d.settled}});
    }
    j["devices"] = devs;
    ordered_json cross = ordered_json::array();
    for (const auto& c : r.cross_class) {
        cross.push_back({{"a", c.a}, {"b", c.b}, {"value_a", c.value_a}, {"value_b", c.value_b}});
    }
    j["cross_class"] = cross;
    return j;
}

const char* name(Distribution d)
{
    return d == Distribution::Distributed ? "distributed" : "centralized";
}
const char* name(Cardinality c)
{
    return c == Cardinality::MultiVariable ? "multi-variable" : "single-variable";
}
const char* name(Temporality t)
{
    return t == Temporality::Dynamic ? "dynamic" : "static";
}
const char* name(Scope s)
{
    return s == Scope::Local ? "local" : "network-wide";
}

}  // namespace

std::string to_json(const CapabilityReport& report)
{
    return report_json(report).dump(2) + "\n";
}

std::string to_json(const CapabilityDocument& doc)
{
    ordered_json j;
    j["schema"] = kCapabilitySchema;
    j["case"] = doc.case_name;
    j["scenario"] = doc.scenario;
    j["completed"] = !doc.failure.has_value();
    if (doc.failure) {
        ordered_json ranking = ordered_json::array();
        for (const auto& b : doc.failure->ranking) {
            ranking.push_back({{"bus", b.bus}, {"dp", number_or_null(b.dp)}, {"dq", number_or_null(b.dq)}});
        }
        j["failure"] = {{"t", doc.failure->t},
                        {"iterations", doc.failure->iterations},
                        {"message", doc.failure->message},
                        {"bus_mismatch_ranking", ranking}};
    } else {
        j["failure"] = nullptr;
    }
    if (doc.classification) {
        const auto& c = *doc.classification;
        j["classification"] = {{"distribution", name(c.distribution)},
                               {"cardinality", name(c.cardinality)},
                               {"temporality", name(c.temporality)},
                               {"scope", name(c.scope)}};
    } else {
        j["classification"] = nullptr;
    }
    j["strong"] = doc.strong ? report_json(*doc.strong) : ordered_json{{"error", doc.strong_error}};
    j["weak"] = doc.weak ? report_json(*doc.weak) : ordered_json{{"error", doc.weak_error}};
    if (doc.audit) {
        const auto& a = *doc.audit;
        ordered_json devs = ordered_json::array();
        for (const auto& d : a.devices) {
            devs.push_back({{"device", d.device},
                            {"identity_error", number_or_null(d.identity_error)},
                            {"identity_worst_t", d.identity_worst_t},
                            {"steady_pt", number_or_null(d.steady_pt)},
                            {"approx_gap", number_or_null(d.approx_gap)}});
        }
        j["power_split"] = {{"tol_identity", a.tol_identity},
                            {"tol_steady", a.tol_steady},
                            {"identity_ok", a.identity_ok()},
                            {"steady_ok", a.steady_ok()},
                            {"steady_from", number_or_null(a.steady_from)},
                            {"devices", devs}};
    } else {
        j["power_split"] = nullptr;
    }
    return j.dump(2) + "\n";
}

std::string to_text(const CapabilityReport& r, const std::string& mode)
{
    std::ostringstream out;
    char buf[160];
    out << mode << " check: verdict " << to_string(r.verdict);
    if (r.sigma_hat_estimate) {
        std::snprintf(buf, sizeof buf, ", common value %.10g", *r.sigma_hat_estimate);
        out << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "window %.6g s .. %.6g s, tol %.3g", r.window_start, r.window_end, r.tol);
    out << buf;
    if (r.period) {
        std::snprintf(buf, sizeof buf, ", period %.6g s", *r.period);
        out << buf;
    }
    out << '\n';
    for (const auto& d : r.per_device) {
        std::snprintf(buf, sizeof buf, "  device %-4d %-20s %-9s value %-16.10g deviation %.3g%s\n", d.device,
                      d.variable.c_str(), to_string(d.unit).c_str(), d.value, d.deviation,
                      d.settled ? "" : "  (not settled)");
        out << buf;
    }
    for (const auto& c : r.cross_class) {
        out << "  cross-class agreement: " << c.a << " ~ " << c.b << '\n';
    }
    return out.str();
}

}  // namespace slackdyn
