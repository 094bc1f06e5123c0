#include "feqstab/report.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace feqstab {

using Json = nlohmann::ordered_json;

namespace {

// JSON has no infinities; they travel as strings.
Json number(double x) {
    if (std::isfinite(x))
        return x;
    if (std::isnan(x))
        return "nan";
    return x > 0 ? "inf" : "-inf";
}

double number(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        if (s == "nan")
            return std::numeric_limits<double>::quiet_NaN();
        throw ValidationError("report: '" + s + "' is not a number");
    }
    return j.get<double>();
}

Json optional_number(const std::optional<double>& x) { return x ? number(*x) : Json(nullptr); }

std::optional<double> optional_number(const Json& j) {
    if (j.is_null())
        return std::nullopt;
    return number(j);
}

Json numbers(const std::vector<double>& xs) {
    Json out = Json::array();
    for (double x : xs)
        out.push_back(number(x));
    return out;
}

std::vector<double> numbers(const Json& j) {
    std::vector<double> out;
    for (const auto& x : j)
        out.push_back(number(x));
    return out;
}

Json witness(const std::optional<std::vector<double>>& w) { return w ? numbers(*w) : Json(nullptr); }

std::optional<std::vector<double>> witness(const Json& j) {
    if (j.is_null())
        return std::nullopt;
    return numbers(j);
}

Json params(const std::map<std::string, double>& p) {
    Json out = Json::object();
    for (const auto& [k, v] : p)
        out[k] = number(v);
    return out;
}

std::map<std::string, double> params(const Json& j) {
    std::map<std::string, double> out;
    for (const auto& [k, v] : j.items())
        out[k] = number(v);
    return out;
}

Json to_json(const AdmissibilityReport& a) {
    Json j;
    j["name"] = a.name;
    j["grid_size"] = a.grid_size;
    j["max_ratio"] = number(a.max_ratio);
    j["zero_violations"] = a.zero_violations;
    j["verdict"] = std::string(to_string(a.verdict));
    j["witness"] = witness(a.witness);
    j["seed"] = a.seed ? Json(*a.seed) : Json(nullptr);
    j["params"] = params(a.params);
    return j;
}

AdmissibilityReport admissibility_from(const Json& j) {
    AdmissibilityReport a;
    a.name = j.at("name").get<std::string>();
    a.grid_size = j.at("grid_size").get<std::size_t>();
    a.max_ratio = number(j.at("max_ratio"));
    a.zero_violations = j.at("zero_violations").get<std::size_t>();
    a.verdict = parse_verdict(j.at("verdict").get<std::string>());
    a.witness = witness(j.at("witness"));
    if (!j.at("seed").is_null())
        a.seed = j.at("seed").get<std::uint64_t>();
    a.params = params(j.at("params"));
    return a;
}

Json to_json(const CheckReport& c) {
    Json j;
    j["name"] = c.name;
    j["verdict"] = std::string(to_string(c.verdict));
    j["samples"] = c.samples;
    j["worst"] = number(c.worst);
    j["witness"] = witness(c.witness);
    j["detail"] = c.detail;
    return j;
}

CheckReport check_from(const Json& j) {
    CheckReport c;
    c.name = j.at("name").get<std::string>();
    c.verdict = parse_verdict(j.at("verdict").get<std::string>());
    c.samples = j.at("samples").get<std::size_t>();
    c.worst = number(j.at("worst"));
    c.witness = witness(j.at("witness"));
    c.detail = j.at("detail").get<std::string>();
    return c;
}

Json mu_rows(const std::vector<MuStarRow>& rows) {
    Json out = Json::array();
    for (const auto& row : rows) {
        Json e;
        e["point"] = numbers(row.point);
        e["mu"] = number(row.mu);
        e["mu_star"] = number(row.mu_star);
        e["empirical"] = row.empirical;
        out.push_back(e);
    }
    return out;
}

std::vector<MuStarRow> mu_rows(const Json& j) {
    std::vector<MuStarRow> out;
    for (const auto& e : j)
        out.push_back({numbers(e.at("point")), number(e.at("mu")), number(e.at("mu_star")), e.at("empirical").get<bool>()});
    return out;
}

} // namespace

std::string report_to_json(const StabilityReport& r) {
    Json j;
    const ReportMetadata& m = r.metadata;
    Json meta;
    meta["command"] = m.command;
    meta["target"] = m.target;
    meta["params"] = params(m.params);
    meta["seed"] = m.seed;
    meta["eta"] = number(m.eta);
    meta["tol"] = number(m.tol);
    meta["grid_box"] = number(m.grid_box);
    meta["grid_count"] = m.grid_count;
    meta["grid_file"] = m.grid_file;
    meta["max_iter"] = m.max_iter;
    meta["dim"] = m.dim;
    meta["oscillator"] = m.oscillator;
    meta["version"] = m.version;
    meta["timestamp"] = m.timestamp;
    j["metadata"] = meta;
    j["status"] = r.status;
    j["exit_code"] = r.exit_code;
    j["warnings"] = r.warnings;
    j["eigenfactor"] = r.eigenfactor ? number(*r.eigenfactor) : Json("absent");
    j["contractive"] = r.contractive;
    j["measured_rate"] = optional_number(r.measured_rate);
    j["series_constant"] = optional_number(r.series_constant);
    j["paper_constant"] = optional_number(r.paper_constant);
    j["discrepancy"] = r.discrepancy;
    j["resonant"] = r.resonant ? Json(*r.resonant) : Json(nullptr);

    j["mu_star_probes"] = mu_rows(r.mu_star_probes);
    j["mu_star"] = mu_rows(r.mu_star);
    j["admissibility"] = r.admissibility ? to_json(*r.admissibility) : Json(nullptr);
    if (r.stability) {
        Json s;
        s["points"] = r.stability->points;
        s["min_slack"] = number(r.stability->min_slack);
        s["max_violation"] = number(r.stability->max_violation);
        s["verdict"] = std::string(to_string(r.stability->verdict));
        s["witness"] = witness(r.stability->witness);
        j["stability"] = s;
    } else {
        j["stability"] = nullptr;
    }
    Json checks = Json::array();
    for (const auto& c : r.checks)
        checks.push_back(to_json(c));
    j["checks"] = checks;

    Json conv;
    conv["point"] = numbers(r.convergence_point);
    Json rows = Json::array();
    for (const auto& row : r.convergence)
        rows.push_back(Json::array({row.n, number(row.delta), number(row.lambda_bound), number(row.tail)}));
    conv["columns"] = Json::array({"n", "delta", "lambda_bound", "tail"});
    conv["rows"] = rows;
    j["convergence"] = conv;
    return j.dump(2) + "\n";
}

StabilityReport report_from_json(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        StabilityReport r;
        const Json& meta = j.at("metadata");
        ReportMetadata& m = r.metadata;
        m.command = meta.at("command").get<std::string>();
        m.target = meta.at("target").get<std::string>();
        m.params = params(meta.at("params"));
        m.seed = meta.at("seed").get<std::uint64_t>();
        m.eta = number(meta.at("eta"));
        m.tol = number(meta.at("tol"));
        m.grid_box = number(meta.at("grid_box"));
        m.grid_count = meta.at("grid_count").get<std::size_t>();
        m.grid_file = meta.at("grid_file").get<std::string>();
        m.max_iter = meta.at("max_iter").get<int>();
        m.dim = meta.at("dim").get<std::size_t>();
        m.oscillator = meta.at("oscillator").get<std::string>();
        m.version = meta.at("version").get<std::string>();
        m.timestamp = meta.at("timestamp").get<std::string>();
        r.status = j.at("status").get<std::string>();
        r.exit_code = j.at("exit_code").get<int>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        if (const Json& c = j.at("eigenfactor"); !(c.is_string() && c.get<std::string>() == "absent"))
            r.eigenfactor = number(c);
        r.contractive = j.at("contractive").get<bool>();
        r.measured_rate = optional_number(j.at("measured_rate"));
        r.series_constant = optional_number(j.at("series_constant"));
        r.paper_constant = optional_number(j.at("paper_constant"));
        r.discrepancy = j.at("discrepancy").get<bool>();
        if (!j.at("resonant").is_null())
            r.resonant = j.at("resonant").get<bool>();
        r.mu_star_probes = mu_rows(j.at("mu_star_probes"));
        r.mu_star = mu_rows(j.at("mu_star"));
        if (!j.at("admissibility").is_null())
            r.admissibility = admissibility_from(j.at("admissibility"));
        if (const Json& s = j.at("stability"); !s.is_null())
            r.stability = StabilitySummary{s.at("points").get<std::size_t>(), number(s.at("min_slack")),
                                           number(s.at("max_violation")),
                                           parse_verdict(s.at("verdict").get<std::string>()), witness(s.at("witness"))};
        for (const auto& c : j.at("checks"))
            r.checks.push_back(check_from(c));
        const Json& conv = j.at("convergence");
        r.convergence_point = numbers(conv.at("point"));
        for (const auto& row : conv.at("rows"))
            r.convergence.push_back({row.at(0).get<int>(), number(row.at(1)), number(row.at(2)), number(row.at(3))});
        return r;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("report is missing a field: ") + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
    if (!out)
        throw Error("write failed for " + path.string());
}

void write_report(const StabilityReport& report, const std::filesystem::path& path) {
    write_text(path, report_to_json(report));
}

StabilityReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open report " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return report_from_json(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string convergence_csv(const StabilityReport& report) {
    std::string out = "n,delta,lambda_bound,tail\n";
    for (const auto& row : report.convergence)
        out += std::to_string(row.n) + "," + format_double(row.delta) + "," + format_double(row.lambda_bound) + "," +
               format_double(row.tail) + "\n";
    return out;
}

} // namespace feqstab
