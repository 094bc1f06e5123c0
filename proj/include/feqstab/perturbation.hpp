#pragma once

#include "feqstab/catalog.hpp"
#include "feqstab/domain.hpp"
#include "feqstab/engine.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace feqstab {

enum class OscillatorKind { hash, resonant };

std::string_view to_string(OscillatorKind kind);
OscillatorKind parse_oscillator(std::string_view text);

/// Phase data that makes eta * envelope * oscillator an eigenfunction of T.
/// Needs diagonal maps with nonzero entries, and every bound term scaling by
/// the same factor under each single map. Returns nullopt otherwise, or when
/// no alignment within max_residual turns is found.
std::optional<Resonance> solve_resonance(const OperatorSpec& spec, const BoundSpec& bound,
                                         double max_residual = 1e-6, int search_radius = 600);

/// core + g with |g| <= eta * bound / (1 + s), s = sum |coef_i|. Since
/// Lambda bound = c bound with c <= s, the defect is at most
/// eta (1 + c) / (1 + s) bound <= bound. A resonant request that has no
/// solution falls back to the hash oscillator.
FunctionModel make_perturbed_model(const BilinearCore& core, const BoundSpec& bound, const OperatorSpec& spec,
                                   double eta, std::uint64_t seed, OscillatorKind kind = OscillatorKind::hash);

struct AdmissibilityReport {
    std::string name;
    std::size_t grid_size = 0;
    double max_ratio = 0.0;          ///< defect / mu over points with mu > 0
    std::size_t zero_violations = 0; ///< mu == 0 points with nonzero defect
    Verdict verdict = Verdict::skipped;
    std::optional<std::vector<double>> witness;
    std::optional<std::uint64_t> seed;
    std::map<std::string, double> params;

    friend bool operator==(const AdmissibilityReport&, const AdmissibilityReport&) = default;
};

inline constexpr double admissibility_slack = 1e-9;

/// defect(spec, model, q) / bound(q) over the grid.
AdmissibilityReport audit_admissibility(const FunctionModel& model, const OperatorSpec& spec, const BoundSpec& bound,
                                        std::span<const PairPoint> grid);

/// Four-point inequality |FE residual| <= |x|^p |y|^p |z|^p |w|^p. The bilinear
/// core cancels identically, so only the perturbation is evaluated.
AdmissibilityReport audit_fe31(const FunctionModel& model, double p, std::span<const Quadruple> quadruples);

struct EtaMargin {
    double eta;                ///< largest 2^-k (k >= 0) that passes, or 0
    int halvings;
    AdmissibilityReport audit; ///< audit at the returned eta
};

/// Halves eta from 1 until audit_fe31 passes on the given quadruples.
EtaMargin fe31_eta_margin(const BilinearCore& core, const CatalogEntry& entry, std::uint64_t seed,
                          std::span<const Quadruple> quadruples, OscillatorKind kind = OscillatorKind::hash,
                          int max_halvings = 80);

/// Origin, the 4d axis points at +-box, then Halton points in [-box, box]^(2d).
std::vector<PairPoint> default_grid(std::size_t dim, double box, std::size_t count);

/// Uniform points in [-box, box]^(2d) from mt19937_64.
std::vector<PairPoint> random_points(std::size_t dim, double box, std::size_t count, std::uint64_t seed);
std::vector<Quadruple> random_quadruples(std::size_t dim, double box, std::size_t count, std::uint64_t seed);

/// Whitespace-separated rows of 2d numbers; '#' starts a comment line.
std::vector<PairPoint> read_grid(const std::filesystem::path& path);
std::vector<PairPoint> parse_grid(std::string_view text);
void write_grid(const std::filesystem::path& path, std::span<const PairPoint> grid);
std::string format_grid(std::span<const PairPoint> grid);

} // namespace feqstab
