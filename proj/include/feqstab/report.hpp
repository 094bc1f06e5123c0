#pragma once

#include "feqstab/catalog.hpp"
#include "feqstab/perturbation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace feqstab {

struct ReportMetadata {
    std::string command; ///< demo, run or check
    std::string target;  ///< catalog name or spec path
    std::map<std::string, double> params;
    std::uint64_t seed = 1;
    double eta = 0.5;
    double tol = 1e-10;
    double grid_box = 2.0;
    std::size_t grid_count = 100;
    std::string grid_file;
    int max_iter = 200;
    std::size_t dim = 1;
    std::string oscillator;
    std::string version;
    std::string timestamp; ///< the only field allowed to differ between identical runs

    friend bool operator==(const ReportMetadata&, const ReportMetadata&) = default;
};

struct MuStarRow {
    std::vector<double> point;
    double mu = 0.0;
    double mu_star = 0.0;
    bool empirical = false;

    friend bool operator==(const MuStarRow&, const MuStarRow&) = default;
};

struct StabilitySummary {
    std::size_t points = 0;
    double min_slack = 0.0;
    double max_violation = 0.0;
    Verdict verdict = Verdict::skipped;
    std::optional<std::vector<double>> witness;

    friend bool operator==(const StabilitySummary&, const StabilitySummary&) = default;
};

struct ConvergenceRow {
    int n = 0;
    double delta = 0.0;
    double lambda_bound = 0.0;
    double tail = 0.0;

    friend bool operator==(const ConvergenceRow&, const ConvergenceRow&) = default;
};

struct StabilityReport {
    ReportMetadata metadata;
    std::string status; ///< ok, fail, not-contractive, audit-fail
    int exit_code = 0;
    std::vector<std::string> warnings;

    std::optional<double> eigenfactor; ///< absent for non-diagonal or non-uniform specs
    bool contractive = false;
    std::optional<double> measured_rate;
    std::optional<double> series_constant;
    std::optional<double> paper_constant;
    bool discrepancy = false;
    std::optional<bool> resonant; ///< whether the perturbation is a T-eigenfunction

    std::vector<MuStarRow> mu_star;
    std::vector<MuStarRow> mu_star_probes; ///< fixed points with slot norms (1, 1) and (2, 2)
    std::optional<AdmissibilityReport> admissibility;
    std::optional<StabilitySummary> stability;
    std::vector<CheckReport> checks;

    std::vector<double> convergence_point;
    std::vector<ConvergenceRow> convergence;

    friend bool operator==(const StabilityReport&, const StabilityReport&) = default;
};

/// Key-value JSON tree with a fixed key order.
std::string report_to_json(const StabilityReport& report);
StabilityReport report_from_json(std::string_view text);

void write_report(const StabilityReport& report, const std::filesystem::path& path);
StabilityReport read_report(const std::filesystem::path& path);

/// Header "n,delta,lambda_bound,tail" then one row per traced iteration.
std::string convergence_csv(const StabilityReport& report);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace feqstab
