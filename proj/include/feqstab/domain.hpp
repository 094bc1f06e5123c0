#pragma once

#include "feqstab/errors.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace feqstab {

using Rational = boost::multiprecision::cpp_rational;

/// Function values live in R^m; m is the codomain dimension.
using Value = std::vector<double>;

double norm(std::span<const double> value);

enum class Verdict { pass, fail, skipped };

std::string_view to_string(Verdict verdict);
Verdict parse_verdict(std::string_view text);

/// Element of the slot space R^d with the Euclidean norm.
class VectorElement {
public:
    explicit VectorElement(std::vector<double> coords);

    static VectorElement zero(std::size_t dim);
    static VectorElement scalar(double value) { return VectorElement({value}); }

    std::size_t dim() const noexcept { return coords_.size(); }
    std::span<const double> coords() const noexcept { return coords_; }
    double operator[](std::size_t i) const { return coords_[i]; }
    double norm() const;

    VectorElement operator+(const VectorElement& rhs) const;
    VectorElement operator-(const VectorElement& rhs) const;
    VectorElement operator-() const;
    VectorElement scaled(double factor) const;

    friend bool operator==(const VectorElement&, const VectorElement&) = default;

private:
    std::vector<double> coords_;
};

/// A point (u, v) of the paired domain; both slots share the dimension d.
class PairPoint {
public:
    PairPoint(VectorElement first, VectorElement second);

    /// Scalar convenience for d = 1.
    static PairPoint scalar(double u, double v);

    const VectorElement& first() const noexcept { return first_; }
    const VectorElement& second() const noexcept { return second_; }
    std::size_t dim() const noexcept { return first_.dim(); }

    /// Coordinate bit patterns (signed zeros folded); exact identity of a point.
    std::vector<std::uint64_t> key() const;

    /// Flattened coordinates: first slot then second slot.
    std::vector<double> flat() const;
    static PairPoint from_flat(std::span<const double> coords);

    std::string to_string() const;

    friend bool operator==(const PairPoint&, const PairPoint&) = default;

private:
    VectorElement first_;
    VectorElement second_;
};

/// Block map (u, v) -> (a u + b v, c u + d v) with exact rational entries.
class ArgMap {
public:
    ArgMap(Rational a, Rational b, Rational c, Rational d);

    static ArgMap identity();
    static ArgMap diagonal(Rational a, Rational d) { return ArgMap(std::move(a), 0, 0, std::move(d)); }

    const Rational& a() const noexcept { return a_; }
    const Rational& b() const noexcept { return b_; }
    const Rational& c() const noexcept { return c_; }
    const Rational& d() const noexcept { return d_; }

    bool is_diagonal() const noexcept { return diagonal_; }

    /// Entries rounded to double once, in the order a, b, c, d.
    const std::array<double, 4>& entries() const noexcept { return rounded_; }

    PairPoint apply(const PairPoint& point) const;

    /// Matrix product: (lhs * rhs)(p) == lhs(rhs(p)).
    friend ArgMap operator*(const ArgMap& lhs, const ArgMap& rhs);
    friend bool operator==(const ArgMap& lhs, const ArgMap& rhs);

    /// Lexicographic order on (a, b, c, d).
    friend bool operator<(const ArgMap& lhs, const ArgMap& rhs);

    std::string to_string() const;

private:
    Rational a_, b_, c_, d_;
    std::array<double, 4> rounded_{};
    bool diagonal_ = true;
};

/// Applies a block map given by already-rounded entries. All map applications
/// in the library go through here so equal rationals give bitwise-equal points.
PairPoint apply_entries(const std::array<double, 4>& entries, bool diagonal, const PairPoint& point);

PairPoint apply_map(const ArgMap& map, const PairPoint& point);

/// Exact product M1^k1 * M2^k2 * ... in list order.
ArgMap compose_maps(std::span<const std::pair<ArgMap, unsigned>> maps);

std::string format_rational(const Rational& value);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

struct OperatorTerm {
    double coef;
    ArgMap map;

    friend bool operator==(const OperatorTerm&, const OperatorTerm&) = default;
};

/// (Tf)(p) = sum_i coef_i f(map_i(p)). Terms are kept in canonical order
/// (sorted by map, then coefficient) so equal specs sum in equal order.
class OperatorSpec {
public:
    explicit OperatorSpec(std::vector<OperatorTerm> terms);

    std::span<const OperatorTerm> terms() const noexcept { return terms_; }
    std::size_t size() const noexcept { return terms_.size(); }
    double abs_coef_sum() const noexcept { return abs_coef_sum_; }
    bool is_diagonal() const noexcept { return diagonal_; }

    friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;

private:
    std::vector<OperatorTerm> terms_;
    double abs_coef_sum_ = 0.0;
    bool diagonal_ = true;
};

struct BoundTerm {
    double coef;
    double exp_first;
    double exp_second;

    friend bool operator==(const BoundTerm&, const BoundTerm&) = default;
};

/// mu(u, v) = sum_i coef_i |u|^e1_i |v|^e2_i. An empty spec is mu == 0.
class BoundSpec {
public:
    BoundSpec() = default;
    explicit BoundSpec(std::vector<BoundTerm> terms);

    std::span<const BoundTerm> terms() const noexcept { return terms_; }
    bool empty() const noexcept { return terms_.empty(); }

    double operator()(const PairPoint& point) const;
    double at_norms(double norm_first, double norm_second) const;

    BoundSpec scaled(double factor) const;

    friend bool operator==(const BoundSpec&, const BoundSpec&) = default;

private:
    std::vector<BoundTerm> terms_;
};

/// Exact bilinear part f0(u, v)_j = u^T B_j v, one d x d matrix per codomain component.
class BilinearCore {
public:
    BilinearCore(std::size_t dim, std::vector<std::vector<double>> matrices);

    static BilinearCore scalar(double b) { return BilinearCore(1, {{b}}); }
    static BilinearCore identity(std::size_t dim, std::size_t codomain = 1);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t codomain() const noexcept { return matrices_.size(); }
    const std::vector<std::vector<double>>& matrices() const noexcept { return matrices_; }

    Value evaluate(const PairPoint& point) const;

    /// The four quadratic forms u^T B u, u^T B v, v^T B u, v^T B v per component.
    std::array<Value, 4> forms(const PairPoint& point) const;

    friend bool operator==(const BilinearCore&, const BilinearCore&) = default;

private:
    double form(std::size_t j, std::span<const double> left, std::span<const double> right) const;

    std::size_t dim_;
    std::vector<std::vector<double>> matrices_;
};

/// Phase data for the T-eigenfunction oscillator. The oscillator is
///   sgn(u_1)^sign_first * sgn(v_1)^sign_second
///     * cos(2 pi (turns_first ln|u| + turns_second ln|v|) + phase)
/// and with the envelope an eigenfunction of Lambda it satisfies T g = c g.
struct Resonance {
    int sign_first = 0;
    int sign_second = 0;
    double turns_first = 0.0;
    double turns_second = 0.0;
    double residual = 0.0; ///< worst phase misalignment, in turns

    friend bool operator==(const Resonance&, const Resonance&) = default;
};

/// Deterministic bounded perturbation g with |g(p)| <= eta * envelope(p).
class PerturbationSpec {
public:
    PerturbationSpec(BoundSpec envelope, double eta, std::uint64_t seed, std::size_t codomain,
                     std::optional<Resonance> resonance = std::nullopt);

    const BoundSpec& envelope() const noexcept { return envelope_; }
    double eta() const noexcept { return eta_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t codomain() const noexcept { return direction_.size(); }
    const std::optional<Resonance>& resonance() const noexcept { return resonance_; }
    bool is_resonant() const noexcept { return resonance_.has_value(); }

    Value evaluate(const PairPoint& point) const;

    friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;

private:
    double oscillate_hash(const PairPoint& point, std::size_t component) const;
    double oscillate_resonant(const PairPoint& point) const;

    BoundSpec envelope_;
    double eta_;
    std::uint64_t seed_;
    std::optional<Resonance> resonance_;
    double phase_ = 0.0;
    Value direction_;
};

/// f = f0 + g: bilinear core plus optional perturbation.
class FunctionModel {
public:
    explicit FunctionModel(BilinearCore core, std::optional<PerturbationSpec> perturbation = std::nullopt);

    const BilinearCore& core() const noexcept { return core_; }
    const std::optional<PerturbationSpec>& perturbation() const noexcept { return perturbation_; }
    std::size_t dim() const noexcept { return core_.dim(); }
    std::size_t codomain() const noexcept { return core_.codomain(); }

    Value evaluate(const PairPoint& point) const;
    Value perturbation_value(const PairPoint& point) const;

    friend bool operator==(const FunctionModel&, const FunctionModel&) = default;

private:
    void check_dim(const PairPoint& point) const;

    BilinearCore core_;
    std::optional<PerturbationSpec> perturbation_;
};

Value evaluate_model(const FunctionModel& model, const PairPoint& point);

/// splitmix64 finalizer; the library's only hashing primitive.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

} // namespace feqstab
