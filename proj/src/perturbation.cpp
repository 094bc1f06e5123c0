#include "feqstab/perturbation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace feqstab {

std::string_view to_string(OscillatorKind kind) { return kind == OscillatorKind::hash ? "hash" : "resonant"; }

OscillatorKind parse_oscillator(std::string_view text) {
    if (text == "hash")
        return OscillatorKind::hash;
    if (text == "resonant")
        return OscillatorKind::resonant;
    throw ValidationError("unknown oscillator '" + std::string(text) + "' (expected hash or resonant)");
}

// --- resonance -----------------------------------------------------------------

namespace {

struct PhaseRow {
    double a; // ln|a_i|
    double d; // ln|d_i|
    double h; // required phase, 0 or 1/2
};

double turn_distance(double x) { return std::fabs(x - std::nearbyint(x)); }

double worst_residual(const std::vector<PhaseRow>& rows, double tu, double tv) {
    double worst = 0.0;
    for (const auto& r : rows)
        worst = std::max(worst, turn_distance(tu * r.a + tv * r.d - r.h));
    return worst;
}

struct Candidate {
    double tu = 0.0, tv = 0.0, residual = std::numeric_limits<double>::infinity();

    bool better_than(const Candidate& other) const {
        if (residual != other.residual)
            return residual < other.residual;
        return std::hypot(tu, tv) < std::hypot(other.tu, other.tv);
    }
};

Candidate align(const std::vector<PhaseRow>& rows, int radius) {
    Candidate best;
    double scale = 0.0;
    for (const auto& r : rows)
        scale = std::max({scale, std::fabs(r.a), std::fabs(r.d)});
    if (scale == 0.0) {
        best.tu = best.tv = 0.0;
        best.residual = worst_residual(rows, 0.0, 0.0);
        return best;
    }
    // Best-conditioned pair of rows.
    std::size_t pi = 0, pj = 0;
    double pivot = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            const double det = rows[i].a * rows[j].d - rows[i].d * rows[j].a;
            if (std::fabs(det) > pivot) {
                pivot = std::fabs(det);
                pi = i;
                pj = j;
            }
        }
    auto consider = [&](double tu, double tv) {
        Candidate c{tu, tv, worst_residual(rows, tu, tv)};
        if (c.better_than(best))
            best = c;
    };
    if (pivot > 1e-9 * scale * scale) {
        const PhaseRow& r1 = rows[pi];
        const PhaseRow& r2 = rows[pj];
        const double det = r1.a * r2.d - r1.d * r2.a;
        for (int n1 = -radius; n1 <= radius; ++n1)
            for (int n2 = -radius; n2 <= radius; ++n2) {
                const double b1 = r1.h + n1;
                const double b2 = r2.h + n2;
                consider((b1 * r2.d - r1.d * b2) / det, (r1.a * b2 - b1 * r2.a) / det);
            }
        return best;
    }
    // Rank one: move along the dominant row's direction.
    const auto lead = std::max_element(rows.begin(), rows.end(), [](const PhaseRow& x, const PhaseRow& y) {
        return std::hypot(x.a, x.d) < std::hypot(y.a, y.d);
    });
    const double len2 = lead->a * lead->a + lead->d * lead->d;
    for (int n = -radius; n <= radius; ++n) {
        const double s = (lead->h + n) / len2;
        consider(s * lead->a, s * lead->d);
    }
    return best;
}

} // namespace

std::optional<Resonance> solve_resonance(const OperatorSpec& spec, const BoundSpec& bound, double max_residual,
                                         int search_radius) {
    if (!spec.is_diagonal())
        return std::nullopt;
    for (const auto& term : spec.terms()) {
        const auto& e = term.map.entries();
        if (e[0] == 0.0 || e[3] == 0.0)
            return std::nullopt;
        // Every bound term must scale by the same factor under this map.
        std::optional<double> scale;
        for (const auto& bt : bound.terms()) {
            const double s = std::pow(std::fabs(e[0]), bt.exp_first) * std::pow(std::fabs(e[3]), bt.exp_second);
            if (scale && std::fabs(*scale - s) > 1e-12 * std::max(*scale, s))
                return std::nullopt;
            scale = s;
        }
    }
    std::optional<Resonance> best;
    for (int su = 0; su <= 1; ++su)
        for (int sv = 0; sv <= 1; ++sv) {
            std::vector<PhaseRow> rows;
            for (const auto& term : spec.terms()) {
                const auto& e = term.map.entries();
                double sign = term.coef < 0.0 ? -1.0 : 1.0;
                if (su && e[0] < 0.0)
                    sign = -sign;
                if (sv && e[3] < 0.0)
                    sign = -sign;
                rows.push_back({std::log(std::fabs(e[0])), std::log(std::fabs(e[3])), sign < 0.0 ? 0.5 : 0.0});
            }
            const Candidate c = align(rows, search_radius);
            if (c.residual > max_residual)
                continue;
            Resonance r{su, sv, c.tu + 0.0, c.tv + 0.0, c.residual};
            if (!best || r.residual < best->residual)
                best = r;
        }
    return best;
}

FunctionModel make_perturbed_model(const BilinearCore& core, const BoundSpec& bound, const OperatorSpec& spec,
                                   double eta, std::uint64_t seed, OscillatorKind kind) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw ValidationError("eta must lie in [0, 1]");
    const auto c = eigenfactor(spec, bound);
    const double s = spec.abs_coef_sum();
    if (!c)
        throw ValidationError("no eigenfactor for this operator and bound: the margin argument "
                              "|g - Tg| <= eta (1 + c) / (1 + s) mu needs Lambda mu = c mu");
    if (*c > s * (1.0 + 1e-12))
        throw ValidationError("eigenfactor exceeds sum |coef|: the margin argument does not apply");
    if (eta == 0.0)
        return FunctionModel(core);
    std::optional<Resonance> resonance;
    if (kind == OscillatorKind::resonant)
        resonance = solve_resonance(spec, bound);
    return FunctionModel(core, PerturbationSpec(bound.scaled(1.0 / (1.0 + s)), eta, seed, core.codomain(), resonance));
}

// --- audits ----------------------------------------------------------------------

AdmissibilityReport audit_admissibility(const FunctionModel& model, const OperatorSpec& spec, const BoundSpec& bound,
                                        std::span<const PairPoint> grid) {
    AdmissibilityReport report;
    report.name = "admissibility";
    report.grid_size = grid.size();
    if (const auto& g = model.perturbation()) {
        report.seed = g->seed();
        report.params["eta"] = g->eta();
    }
    double worst = -1.0;
    for (const PairPoint& q : grid) {
        const double d = defect(spec, model, q);
        const double mu = bound(q);
        if (mu > 0.0) {
            const double ratio = d / mu;
            if (ratio > report.max_ratio)
                report.max_ratio = ratio;
            if (ratio > worst && ratio > 1.0 + admissibility_slack && report.zero_violations == 0) {
                worst = ratio;
                report.witness = q.flat();
            }
        } else if (d > 0.0) {
            if (report.zero_violations++ == 0)
                report.witness = q.flat();
        }
    }
    const bool ok = report.max_ratio <= 1.0 + admissibility_slack && report.zero_violations == 0;
    report.verdict = ok ? Verdict::pass : Verdict::fail;
    if (ok)
        report.witness.reset();
    return report;
}

AdmissibilityReport audit_fe31(const FunctionModel& model, double p, std::span<const Quadruple> quadruples) {
    AdmissibilityReport report;
    report.name = "fe31";
    report.grid_size = quadruples.size();
    report.params["p"] = p;
    if (const auto& g = model.perturbation()) {
        report.seed = g->seed();
        report.params["eta"] = g->eta();
    }
    const Evaluatable g = [&model](const PairPoint& q) { return model.perturbation_value(q); };
    double worst = -1.0;
    for (const Quadruple& q : quadruples) {
        const double lhs = model.perturbation() ? fe_residual(g, q) : 0.0;
        const double rhs =
            std::pow(q.x.norm(), p) * std::pow(q.y.norm(), p) * std::pow(q.z.norm(), p) * std::pow(q.w.norm(), p);
        if (rhs > 0.0) {
            const double ratio = lhs / rhs;
            report.max_ratio = std::max(report.max_ratio, ratio);
            if (ratio > worst && ratio > 1.0 + admissibility_slack && report.zero_violations == 0) {
                worst = ratio;
                report.witness = flatten(q);
            }
        } else if (lhs > 0.0) {
            if (report.zero_violations++ == 0)
                report.witness = flatten(q);
        }
    }
    const bool ok = report.max_ratio <= 1.0 + admissibility_slack && report.zero_violations == 0;
    report.verdict = ok ? Verdict::pass : Verdict::fail;
    if (ok)
        report.witness.reset();
    return report;
}

EtaMargin fe31_eta_margin(const BilinearCore& core, const CatalogEntry& entry, std::uint64_t seed,
                          std::span<const Quadruple> quadruples, OscillatorKind kind, int max_halvings) {
    const auto p = entry.params.find("p");
    if (p == entry.params.end())
        throw ValidationError("the four-point audit needs a catalog entry with parameter p");
    double eta = 1.0;
    for (int k = 0; k <= max_halvings; ++k, eta *= 0.5) {
        const FunctionModel model = make_perturbed_model(core, entry.bound, entry.spec, eta, seed, kind);
        AdmissibilityReport audit = audit_fe31(model, p->second, quadruples);
        if (audit.verdict == Verdict::pass)
            return {eta, k, std::move(audit)};
    }
    const FunctionModel exact(core);
    return {0.0, max_halvings + 1, audit_fe31(exact, p->second, quadruples)};
}

// --- grids -------------------------------------------------------------------------

namespace {

constexpr std::array<unsigned, 16> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(std::uint64_t index, unsigned base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= base;
    }
    return result;
}

void check_grid_args(std::size_t dim, double box) {
    if (dim == 0)
        throw ValidationError("grid dimension must be >= 1");
    if (!(box > 0.0) || !std::isfinite(box))
        throw ValidationError("grid box must be finite and > 0");
}

} // namespace

std::vector<PairPoint> default_grid(std::size_t dim, double box, std::size_t count) {
    check_grid_args(dim, box);
    if (2 * dim > primes.size())
        throw ValidationError("grid dimension too large for the Halton bases");
    const std::size_t n = 2 * dim;
    std::vector<PairPoint> out;
    out.reserve(count);
    auto push = [&](const std::vector<double>& flat) {
        if (out.size() < count)
            out.push_back(PairPoint::from_flat(flat));
    };
    push(std::vector<double>(n, 0.0));
    for (std::size_t axis = 0; axis < n; ++axis)
        for (double s : {box, -box}) {
            std::vector<double> flat(n, 0.0);
            flat[axis] = s;
            push(flat);
        }
    for (std::uint64_t index = 1; out.size() < count; ++index) {
        std::vector<double> flat(n);
        for (std::size_t j = 0; j < n; ++j)
            flat[j] = box * (2.0 * radical_inverse(index, primes[j]) - 1.0);
        push(flat);
    }
    return out;
}

namespace {

std::vector<double> uniform_flat(std::mt19937_64& rng, std::size_t n, double box) {
    std::vector<double> flat(n);
    for (double& x : flat)
        x = box * (2.0 * unit_interval(rng()) - 1.0);
    return flat;
}

} // namespace

std::vector<PairPoint> random_points(std::size_t dim, double box, std::size_t count, std::uint64_t seed) {
    check_grid_args(dim, box);
    std::mt19937_64 rng(seed);
    std::vector<PairPoint> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(PairPoint::from_flat(uniform_flat(rng, 2 * dim, box)));
    return out;
}

std::vector<Quadruple> random_quadruples(std::size_t dim, double box, std::size_t count, std::uint64_t seed) {
    check_grid_args(dim, box);
    std::mt19937_64 rng(seed);
    std::vector<Quadruple> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto f = uniform_flat(rng, 4 * dim, box);
        auto slot = [&](std::size_t k) {
            return VectorElement(std::vector<double>(f.begin() + k * dim, f.begin() + (k + 1) * dim));
        };
        out.push_back({slot(0), slot(1), slot(2), slot(3)});
    }
    return out;
}

std::vector<PairPoint> parse_grid(std::string_view text) {
    std::vector<PairPoint> out;
    std::size_t columns = 0;
    std::size_t row = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++row;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::vector<double> values;
        std::istringstream fields(line);
        std::string token;
        while (fields >> token) {
            double x = 0.0;
            const auto res = std::from_chars(token.data(), token.data() + token.size(), x);
            const std::string where = "row " + std::to_string(row) + " column " + std::to_string(values.size() + 1);
            if (res.ec != std::errc() || res.ptr != token.data() + token.size())
                throw ValidationError("grid " + where + ": '" + token + "' is not a number");
            if (!std::isfinite(x))
                throw ValidationError("grid " + where + ": non-finite value '" + token + "'");
            values.push_back(x);
        }
        if (values.empty() || values.size() % 2 != 0)
            throw ValidationError("grid row " + std::to_string(row) + ": expected an even number of columns, got " +
                                  std::to_string(values.size()));
        if (columns == 0)
            columns = values.size();
        else if (values.size() != columns)
            throw ValidationError("grid row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                                  " columns, got " + std::to_string(values.size()));
        out.push_back(PairPoint::from_flat(values));
    }
    return out;
}

std::vector<PairPoint> read_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open grid file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_grid(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string format_grid(std::span<const PairPoint> grid) {
    std::string out;
    for (const PairPoint& p : grid) {
        const auto flat = p.flat();
        for (std::size_t j = 0; j < flat.size(); ++j) {
            if (j)
                out += ' ';
            out += format_double(flat[j]);
        }
        out += '\n';
    }
    return out;
}

void write_grid(const std::filesystem::path& path, std::span<const PairPoint> grid) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write grid file " + path.string());
    out << format_grid(grid);
    if (!out)
        throw Error("write failed for grid file " + path.string());
}

} // namespace feqstab
