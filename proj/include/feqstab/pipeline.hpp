#pragma once

#include "feqstab/catalog.hpp"
#include "feqstab/dsl.hpp"
#include "feqstab/perturbation.hpp"
#include "feqstab/report.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace feqstab {

inline constexpr const char* version_string = "feq-stab 1.0.0";

struct RunOptions {
    std::map<std::string, double> params;
    double eta = 0.5;
    std::uint64_t seed = 1;
    double tol = 1e-10;
    double grid_box = 2.0;
    std::size_t grid_count = 100;
    int max_iter = 200;
    std::size_t dim = 1;
    OscillatorKind oscillator = OscillatorKind::resonant;
    std::optional<std::filesystem::path> grid_file;
    std::string timestamp;
};

/// Operator, bound and (when recognised) the catalog entry they came from.
struct Target {
    std::string name;
    OperatorSpec spec;
    BoundSpec bound;
    std::map<std::string, double> params;
    std::optional<CatalogEntry> entry;
};

Target catalog_target(const std::string& name, const std::map<std::string, double>& params);

/// A document equal to the catalog entry built from its own params is
/// treated as that entry, so exported specs rerun like the demo.
Target document_target(const SpecDocument& doc, const std::string& source);

/// Full pipeline: perturbed model, admissibility, limit on the grid,
/// stability audit, telescoping, fixed point, uniqueness and residual checks.
/// Exit codes: 0 all PASS, 1 other FAIL, 2 not contractive, 3 audit FAIL.
StabilityReport run_pipeline(const std::string& command, const Target& target, const RunOptions& options);

StabilityReport cmd_demo(const std::string& name, const RunOptions& options);
StabilityReport cmd_run(const SpecDocument& doc, const std::string& source, const RunOptions& options);

struct CheckOptions {
    bool fe31 = false;     ///< four-point audit plus eta margin search (needs parameter p)
    bool symmetry = false; ///< |f(x,y) - f(y,x)| over the grid
};

/// Audits only: admissibility and the opt-in checks. Exit 3 on any FAIL.
StabilityReport cmd_check(const Target& target, const RunOptions& options, const CheckOptions& checks);

struct Sweep {
    std::string param;
    double from = 0.0;
    double to = 0.0;
    double step = 1.0;
};

/// CSV "param,value,eigenfactor,series_constant,paper_constant,discrepancy",
/// one row per swept value; header only when from > to.
std::string cmd_bound(const std::string& name, const Sweep& sweep, const std::map<std::string, double>& fixed);

/// One row for a spec file; the series constant is 1 / (1 - c).
std::string cmd_bound(const SpecDocument& doc);

std::string export_spec(const CatalogEntry& entry);

} // namespace feqstab
