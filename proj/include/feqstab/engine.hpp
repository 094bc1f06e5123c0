#pragma once

#include "feqstab/domain.hpp"

#include <array>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace feqstab {

using Evaluatable = std::function<Value(const PairPoint&)>;
using ScalarField = std::function<double(const PairPoint&)>;

inline constexpr int default_depth_cap = 18;

/// Noise floor below which delta ratios are not trusted.
inline constexpr double delta_noise_floor = 1e3 * 2.220446049250313e-16;

Value apply_operator(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point);

enum class PowerMethod { automatic, collapse, naive };

/// Expansion of T^n into weighted composite maps, built lazily level by level.
///
/// Diagonal specs collapse to one term per multi-index k with |k| = n,
/// weight multinomial(n; k) * prod coef_i^k_i and map prod map_i^k_i.
/// Otherwise every ordered word of n terms is a leaf (k^n of them) and
/// levels beyond the depth cap throw CapacityError. Composite maps are
/// formed in exact rationals and rounded once. Thread-safe.
class PowerPlan {
public:
    struct Term {
        double weight;
        std::array<double, 4> entries;
        bool diagonal;
    };

    explicit PowerPlan(OperatorSpec spec, PowerMethod method = PowerMethod::automatic,
                       int depth_cap = default_depth_cap);

    const OperatorSpec& spec() const noexcept { return spec_; }
    bool collapsed() const noexcept { return collapsed_; }
    int depth_cap() const noexcept { return depth_cap_; }

    const std::vector<Term>& level(int n);

    /// (T^n h)(point) for a black-box h.
    Value apply(int n, const Evaluatable& h, const PairPoint& point);

    /// (Lambda^n delta)(point).
    double apply_abs(int n, const ScalarField& delta, const PairPoint& point);

private:
    struct Node {
        std::vector<int> k;
        Rational a, b, c, d;
        double weight;
    };

    void build_next();

    OperatorSpec spec_;
    bool collapsed_;
    int depth_cap_;
    std::mutex mutex_;
    std::deque<std::vector<Term>> levels_;
    std::vector<Node> frontier_;
};

Value operator_power(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point, int n,
                     PowerMethod method = PowerMethod::automatic, int depth_cap = default_depth_cap);

/// Number of evaluation points used for T^n.
std::size_t power_term_count(const OperatorSpec& spec, int n, PowerMethod method = PowerMethod::automatic);

double apply_lambda(const OperatorSpec& spec, const ScalarField& delta, const PairPoint& point);
double apply_lambda(const OperatorSpec& spec, const BoundSpec& delta, const PairPoint& point);

/// c with Lambda mu = c mu exactly, when every map is diagonal and each bound
/// term scales by the same factor. Empty bounds give 0.
std::optional<double> eigenfactor(const OperatorSpec& spec, const BoundSpec& bound);

/// Action of T on the span of u^T B u, u^T B v, v^T B u, v^T B v.
/// Coefficient row vectors transform as alpha -> alpha R, R = sum coef_i (M_i kron M_i),
/// computed in exact rationals.
class CoreTransfer {
public:
    explicit CoreTransfer(const OperatorSpec& spec);

    const std::array<double, 16>& matrix() const noexcept { return matrix_; }

    /// True when R fixes e_uv exactly, i.e. every bilinear core is a fixed point.
    bool fixes_bilinear() const noexcept { return fixes_bilinear_; }

    /// e_uv R^n.
    std::array<double, 4> coefficients(int n);

    static Value combine(const std::array<double, 4>& alpha, const std::array<Value, 4>& forms);

private:
    std::array<double, 16> matrix_{};
    bool fixes_bilinear_ = false;
    std::mutex mutex_;
    std::vector<std::array<double, 4>> powers_;
};

/// T^n f for a FunctionModel, split as core (transfer matrix) + perturbation (plan).
class ModelPowers {
public:
    ModelPowers(OperatorSpec spec, FunctionModel model, PowerMethod method = PowerMethod::automatic,
                int depth_cap = default_depth_cap);

    const OperatorSpec& spec() const noexcept { return plan_->spec(); }
    const FunctionModel& model() const noexcept { return model_; }
    PowerPlan& plan() noexcept { return *plan_; }

    Value power(const PairPoint& point, int n);

private:
    FunctionModel model_;
    std::shared_ptr<PowerPlan> plan_;
    std::shared_ptr<CoreTransfer> transfer_;
};

struct MuStar {
    double value;
    bool closed_form;
    int terms; ///< partial-sum length when empirical
};

MuStar mu_star_detail(const OperatorSpec& spec, const BoundSpec& bound, const PairPoint& point, double tol,
                      int max_terms = 200, int depth_cap = default_depth_cap);

double mu_star(const OperatorSpec& spec, const BoundSpec& bound, const PairPoint& point, double tol);

/// |f(p) - (Tf)(p)| for a black-box f.
double defect(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point);

/// |f(p) - (Tf)(p)| for a model; the bilinear core goes through the transfer matrix.
double defect(const OperatorSpec& spec, const FunctionModel& model, const PairPoint& point);

enum class StopReason { tail_below_tol, max_iter, divergence_detected };

std::string_view to_string(StopReason reason);

struct IterationTrace {
    PairPoint point;
    std::vector<Value> values;         ///< (T^n f)(point), n = 0..N
    std::vector<double> deltas;        ///< |T^n f - T^{n+1} f|, n = 0..N
    std::vector<double> lambda_bounds; ///< (Lambda^n mu)(point)
    std::vector<double> tail_bounds;   ///< sum_{i >= n} Lambda^i mu, closed form or estimate
    StopReason stop_reason = StopReason::tail_below_tol;
    bool empirical = false;

    std::size_t iterations() const noexcept { return values.empty() ? 0 : values.size() - 1; }

    /// Ratio of the last two consecutive deltas above the noise floor.
    std::optional<double> measured_rate() const;
};

struct LimitResult {
    Value value;
    IterationTrace trace;
};

struct LimitOptions {
    int max_iter = 200;
    int depth_cap = default_depth_cap;
    PowerMethod method = PowerMethod::automatic;
};

/// K(point) = lim T^n f(point) to within tol, stopping by the geometric tail.
LimitResult limit_value(const OperatorSpec& spec, const FunctionModel& model, const BoundSpec& bound,
                        const PairPoint& point, double tol, const LimitOptions& options = {});

/// Memoized limit K. Copies share one cache; safe for concurrent use.
/// Each value is extracted to tol / (1 + sum |coef|), which keeps the
/// fixed-point residual |K - TK| within tol.
class LimitEvaluator {
public:
    LimitEvaluator(OperatorSpec spec, FunctionModel model, BoundSpec bound, double tolerance,
                   LimitOptions options = {});

    double tolerance() const noexcept;
    double extraction_tolerance() const noexcept;
    const OperatorSpec& spec() const noexcept;
    const FunctionModel& model() const noexcept;
    const BoundSpec& bound() const noexcept;
    std::optional<double> eigenfactor() const noexcept;

    Value value(const PairPoint& point) const;
    LimitResult result(const PairPoint& point) const;
    Value operator()(const PairPoint& point) const { return value(point); }

    double mu_star(const PairPoint& point) const;

    std::size_t cache_size() const;
    std::size_t computations() const;

private:
    struct State;
    std::shared_ptr<State> state_;
};

struct PointAudit {
    PairPoint point;
    double mu;
    double mu_star;
    double distance; ///< |f - K|
    double slack;    ///< mu* + tol - distance

    friend bool operator==(const PointAudit&, const PointAudit&) = default;
};

struct StabilityAudit {
    std::vector<PointAudit> rows;
    double min_slack = 0.0;
    double max_violation = 0.0;
    Verdict verdict = Verdict::skipped;
    std::optional<PairPoint> witness;
};

StabilityAudit verify_stability(const LimitEvaluator& limit, std::span<const PairPoint> grid);

StabilityAudit verify_stability(const OperatorSpec& spec, const FunctionModel& model, const BoundSpec& bound,
                                std::span<const PairPoint> grid, double tol);

struct UniquenessReport {
    std::size_t points = 0;
    double max_difference = 0.0;
    double allowed = 0.0;
    Verdict verdict = Verdict::skipped;
    std::optional<PairPoint> witness;
};

UniquenessReport uniqueness_probe(const LimitEvaluator& a, const LimitEvaluator& b, std::span<const PairPoint> grid);

UniquenessReport uniqueness_probe(const OperatorSpec& spec, const FunctionModel& model_a, const FunctionModel& model_b,
                                  const BoundSpec& bound, std::span<const PairPoint> grid, double tol);

} // namespace feqstab
