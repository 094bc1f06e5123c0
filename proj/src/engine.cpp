#include "feqstab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <shared_mutex>
#include <unordered_map>

namespace feqstab {

namespace {

void require_finite(const Value& v, const PairPoint& point) {
    for (double x : v)
        if (!std::isfinite(x))
            throw EvaluationError("function returned a non-finite value", point.to_string());
}

void axpy(Value& acc, double w, const Value& v) {
    if (acc.empty())
        acc.assign(v.size(), 0.0);
    if (acc.size() != v.size())
        throw ValidationError("function value dimension changed between points");
    for (std::size_t j = 0; j < v.size(); ++j)
        acc[j] += w * v[j];
}

Value difference(const Value& a, const Value& b) {
    Value out(a);
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] -= b[j];
    return out;
}

// Leaf budget for the non-commuting expansion; beyond this a level is not built.
constexpr std::size_t max_naive_leaves = std::size_t{1} << 21;

} // namespace

Value apply_operator(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point) {
    Value acc;
    for (const auto& term : spec.terms()) {
        const PairPoint mapped = term.map.apply(point);
        const Value v = f(mapped);
        require_finite(v, mapped);
        axpy(acc, term.coef, v);
    }
    return acc;
}

// --- PowerPlan -----------------------------------------------------------------

PowerPlan::PowerPlan(OperatorSpec spec, PowerMethod method, int depth_cap)
    : spec_(std::move(spec)), depth_cap_(depth_cap) {
    switch (method) {
    case PowerMethod::automatic: collapsed_ = spec_.is_diagonal(); break;
    case PowerMethod::collapse:
        if (!spec_.is_diagonal())
            throw ValidationError("multinomial collapse needs commuting (diagonal) maps");
        collapsed_ = true;
        break;
    case PowerMethod::naive: collapsed_ = false; break;
    }
    frontier_.push_back(Node{std::vector<int>(spec_.size(), 0), 1, 0, 0, 1, 1.0});
    levels_.push_back({Term{1.0, {1.0, 0.0, 0.0, 1.0}, true}});
}

void PowerPlan::build_next() {
    const int n = static_cast<int>(levels_.size());
    const auto terms = spec_.terms();
    std::vector<Node> next;
    if (collapsed_) {
        for (const Node& node : frontier_) {
            std::size_t last = 0;
            for (std::size_t j = 0; j < node.k.size(); ++j)
                if (node.k[j] > 0)
                    last = j;
            for (std::size_t j = last; j < terms.size(); ++j) {
                Node child{node.k, node.a * terms[j].map.a(), 0, 0, node.d * terms[j].map.d(), 0.0};
                ++child.k[j];
                child.weight = node.weight * terms[j].coef * (static_cast<double>(n) / child.k[j]);
                next.push_back(std::move(child));
            }
        }
    } else {
        if (n > depth_cap_)
            throw CapacityError("non-commuting operator power n = " + std::to_string(n) + " exceeds the depth cap " +
                                std::to_string(depth_cap_) + "; loosen the tolerance or raise the cap");
        if (frontier_.size() * terms.size() > max_naive_leaves)
            throw CapacityError("non-commuting operator power n = " + std::to_string(n) + " needs " +
                                std::to_string(frontier_.size() * terms.size()) +
                                " leaves; loosen the tolerance or lower the depth");
        next.reserve(frontier_.size() * terms.size());
        for (const Node& node : frontier_) {
            for (const auto& term : terms) {
                const ArgMap& m = term.map;
                next.push_back(Node{{}, m.a() * node.a + m.b() * node.c, m.a() * node.b + m.b() * node.d,
                                    m.c() * node.a + m.d() * node.c, m.c() * node.b + m.d() * node.d,
                                    node.weight * term.coef});
            }
        }
    }
    std::vector<Term> level;
    level.reserve(next.size());
    for (const Node& node : next) {
        const bool diagonal = node.b == 0 && node.c == 0;
        level.push_back(Term{node.weight,
                             {node.a.convert_to<double>(), node.b.convert_to<double>(), node.c.convert_to<double>(),
                              node.d.convert_to<double>()},
                             diagonal});
    }
    frontier_ = std::move(next);
    levels_.push_back(std::move(level));
}

const std::vector<PowerPlan::Term>& PowerPlan::level(int n) {
    if (n < 0)
        throw ValidationError("operator power must be >= 0");
    std::lock_guard lock(mutex_);
    while (static_cast<int>(levels_.size()) <= n)
        build_next();
    return levels_[static_cast<std::size_t>(n)];
}

Value PowerPlan::apply(int n, const Evaluatable& h, const PairPoint& point) {
    Value acc;
    for (const Term& t : level(n)) {
        const PairPoint mapped = apply_entries(t.entries, t.diagonal, point);
        const Value v = h(mapped);
        require_finite(v, mapped);
        axpy(acc, t.weight, v);
    }
    return acc;
}

double PowerPlan::apply_abs(int n, const ScalarField& delta, const PairPoint& point) {
    double sum = 0.0;
    for (const Term& t : level(n))
        sum += std::fabs(t.weight) * delta(apply_entries(t.entries, t.diagonal, point));
    return sum;
}

Value operator_power(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point, int n,
                     PowerMethod method, int depth_cap) {
    PowerPlan plan(spec, method, depth_cap);
    return plan.apply(n, f, point);
}

std::size_t power_term_count(const OperatorSpec& spec, int n, PowerMethod method) {
    PowerPlan plan(spec, method, std::max(n, default_depth_cap));
    return plan.level(n).size();
}

// --- Lambda and the eigenfactor ---------------------------------------------------

double apply_lambda(const OperatorSpec& spec, const ScalarField& delta, const PairPoint& point) {
    double sum = 0.0;
    for (const auto& term : spec.terms())
        sum += std::fabs(term.coef) * delta(term.map.apply(point));
    return sum;
}

double apply_lambda(const OperatorSpec& spec, const BoundSpec& delta, const PairPoint& point) {
    return apply_lambda(spec, ScalarField([&delta](const PairPoint& p) { return delta(p); }), point);
}

std::optional<double> eigenfactor(const OperatorSpec& spec, const BoundSpec& bound) {
    if (!spec.is_diagonal())
        return std::nullopt;
    if (bound.empty())
        return 0.0;
    std::optional<double> factor;
    for (const auto& bt : bound.terms()) {
        double f = 0.0;
        for (const auto& term : spec.terms()) {
            const auto& e = term.map.entries();
            f += std::fabs(term.coef) * std::pow(std::fabs(e[0]), bt.exp_first) *
                 std::pow(std::fabs(e[3]), bt.exp_second);
        }
        if (!factor)
            factor = f;
        else if (std::fabs(*factor - f) > 1e-12 * std::max(1.0, std::fabs(f)))
            return std::nullopt;
    }
    // Cross-check the closed form against Lambda at a few fixed pseudo-random points.
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (int i = 0; i < 8; ++i) {
        h = mix64(h);
        const double u = 0.25 + 1.75 * unit_interval(h);
        h = mix64(h);
        const double v = -0.25 - 1.75 * unit_interval(h);
        const PairPoint p = PairPoint::scalar(u, v);
        const double lhs = apply_lambda(spec, bound, p);
        const double rhs = *factor * bound(p);
        if (std::fabs(lhs - rhs) > 1e-10 * std::max(std::fabs(rhs), 1e-300))
            throw std::logic_error("eigenfactor closed form disagrees with Lambda at " + p.to_string());
    }
    return factor;
}

// --- CoreTransfer ------------------------------------------------------------------

CoreTransfer::CoreTransfer(const OperatorSpec& spec) {
    std::array<Rational, 16> r;
    for (auto& x : r)
        x = 0;
    for (const auto& term : spec.terms()) {
        const Rational coef(term.coef);
        const std::array<Rational, 4> m{term.map.a(), term.map.b(), term.map.c(), term.map.d()};
        // kron(M, M) with basis order (uu, uv, vu, vv)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l)
                        r[(2 * i + k) * 4 + (2 * j + l)] += coef * m[2 * i + j] * m[2 * k + l];
    }
    for (std::size_t i = 0; i < 16; ++i)
        matrix_[i] = r[i].convert_to<double>();
    fixes_bilinear_ = r[4] == 0 && r[5] == 1 && r[6] == 0 && r[7] == 0;
    powers_.push_back({0.0, 1.0, 0.0, 0.0});
}

std::array<double, 4> CoreTransfer::coefficients(int n) {
    std::lock_guard lock(mutex_);
    while (static_cast<int>(powers_.size()) <= n) {
        const auto& a = powers_.back();
        std::array<double, 4> next{};
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                next[j] += a[i] * matrix_[i * 4 + j];
        powers_.push_back(next);
    }
    return powers_[static_cast<std::size_t>(n)];
}

Value CoreTransfer::combine(const std::array<double, 4>& alpha, const std::array<Value, 4>& forms) {
    Value out(forms[0].size(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j)
        for (int i = 0; i < 4; ++i)
            if (alpha[i] != 0.0)
                out[j] += alpha[i] * forms[i][j];
    return out;
}

// --- ModelPowers ---------------------------------------------------------------------

ModelPowers::ModelPowers(OperatorSpec spec, FunctionModel model, PowerMethod method, int depth_cap)
    : model_(std::move(model)),
      plan_(std::make_shared<PowerPlan>(spec, method, depth_cap)),
      transfer_(std::make_shared<CoreTransfer>(spec)) {}

Value ModelPowers::power(const PairPoint& point, int n) {
    if (point.dim() != model_.dim())
        throw ValidationError("point dimension does not match model dimension");
    Value out = CoreTransfer::combine(transfer_->coefficients(n), model_.core().forms(point));
    if (model_.perturbation()) {
        const Value g = plan_->apply(
            n, [this](const PairPoint& p) { return model_.perturbation_value(p); }, point);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] += g[j];
    }
    return out;
}

// --- mu* ---------------------------------------------------------------------------

MuStar mu_star_detail(const OperatorSpec& spec, const BoundSpec& bound, const PairPoint& point, double tol,
                      int max_terms, int depth_cap) {
    if (!(tol > 0.0))
        throw ValidationError("mu* tolerance must be > 0");
    if (const auto c = eigenfactor(spec, bound)) {
        if (*c >= 1.0)
            throw NotContractiveError("majorant series diverges: eigenfactor " + std::to_string(*c) + " >= 1", *c);
        return {bound(point) / (1.0 - *c), true, 0};
    }
    PowerPlan plan(spec, PowerMethod::automatic, depth_cap);
    const ScalarField mu = [&bound](const PairPoint& p) { return bound(p); };
    double sum = 0.0;
    double previous = 0.0;
    int growing = 0;
    for (int n = 0; n <= max_terms; ++n) {
        const double term = plan.apply_abs(n, mu, point);
        sum += term;
        if (n == 0) {
            previous = term;
            continue;
        }
        const double ratio = previous > 0.0 ? term / previous : (term > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        growing = ratio >= 1.0 ? growing + 1 : 0;
        if (growing >= 5)
            throw NotContractiveError("majorant series diverges: measured ratio " + std::to_string(ratio), ratio);
        if (ratio < 1.0 && term * ratio / (1.0 - ratio) < tol)
            return {sum, false, n + 1};
        previous = term;
    }
    throw IterationLimitError("mu* partial sums did not reach tolerance", previous);
}

double mu_star(const OperatorSpec& spec, const BoundSpec& bound, const PairPoint& point, double tol) {
    return mu_star_detail(spec, bound, point, tol).value;
}

// --- defect ----------------------------------------------------------------------------

double defect(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& point) {
    const Value fp = f(point);
    require_finite(fp, point);
    return norm(difference(fp, apply_operator(spec, f, point)));
}

double defect(const OperatorSpec& spec, const FunctionModel& model, const PairPoint& point) {
    if (point.dim() != model.dim())
        throw ValidationError("point dimension does not match model dimension");
    CoreTransfer transfer(spec);
    const auto a1 = transfer.coefficients(1);
    const std::array<double, 4> step{a1[0], a1[1] - 1.0, a1[2], a1[3]};
    Value out = CoreTransfer::combine(step, model.core().forms(point));
    if (model.perturbation()) {
        const Evaluatable g = [&model](const PairPoint& p) { return model.perturbation_value(p); };
        const Value d = difference(apply_operator(spec, g, point), g(point));
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] += d[j];
    }
    return norm(out);
}

// --- limit extraction ------------------------------------------------------------------

std::string_view to_string(StopReason reason) {
    switch (reason) {
    case StopReason::tail_below_tol: return "tail-below-tol";
    case StopReason::max_iter: return "max-iter";
    case StopReason::divergence_detected: return "divergence-detected";
    }
    return "max-iter";
}

std::optional<double> IterationTrace::measured_rate() const {
    for (std::size_t n = deltas.size(); n-- > 1;)
        if (deltas[n] > delta_noise_floor && deltas[n - 1] > delta_noise_floor)
            return deltas[n] / deltas[n - 1];
    return std::nullopt;
}

namespace {

LimitResult extract_limit(ModelPowers& powers, const BoundSpec& bound, std::optional<double> factor,
                          const PairPoint& point, double tol, const LimitOptions& options) {
    if (!(tol > 0.0))
        throw ValidationError("limit tolerance must be > 0");
    IterationTrace trace{point, {}, {}, {}, {}, StopReason::tail_below_tol, !factor.has_value()};

    auto push_delta = [&](int n) {
        while (static_cast<int>(trace.values.size()) <= n + 1)
            trace.values.push_back(powers.power(point, static_cast<int>(trace.values.size())));
        trace.deltas.push_back(norm(difference(trace.values[n], trace.values[n + 1])));
    };

    if (factor) {
        const double c = *factor;
        if (c >= 1.0)
            throw NotContractiveError("operator is not contractive: eigenfactor " + std::to_string(c), c);
        const double mu = bound(point);
        const double star = mu / (1.0 - c);
        int last = 0;
        while (std::pow(c, last) * star >= tol) {
            if (++last > options.max_iter)
                throw IterationLimitError("limit did not reach tolerance within max-iter",
                                          std::pow(c, options.max_iter) * star);
        }
        for (int n = 0; n <= last; ++n) {
            push_delta(n);
            trace.lambda_bounds.push_back(std::pow(c, n) * mu);
            trace.tail_bounds.push_back(std::pow(c, n) * star);
        }
        trace.values.resize(static_cast<std::size_t>(last) + 1);
        return {trace.values.back(), std::move(trace)};
    }

    // Empirical tails: measured ratio of Lambda^n mu.
    const ScalarField mu = [&bound](const PairPoint& p) { return bound(p); };
    int lambda_growing = 0;
    int delta_growing = 0;
    for (int n = 0; n <= options.max_iter; ++n) {
        push_delta(n);
        const double lam = powers.plan().apply_abs(n, mu, point);
        double ratio = 0.0;
        if (n > 0) {
            const double prev = trace.lambda_bounds.back();
            ratio = prev > 0.0 ? lam / prev : (lam > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        }
        trace.lambda_bounds.push_back(lam);
        const double tail = ratio < 1.0 ? lam / (1.0 - ratio) : std::numeric_limits<double>::infinity();
        trace.tail_bounds.push_back(tail);

        lambda_growing = n > 0 && ratio >= 1.0 ? lambda_growing + 1 : 0;
        if (n > 0 && trace.deltas[n] > delta_noise_floor && trace.deltas[n - 1] > delta_noise_floor &&
            trace.deltas[n] > trace.deltas[n - 1])
            ++delta_growing;
        else
            delta_growing = 0;
        if (lambda_growing >= 5 || delta_growing >= 5) {
            trace.stop_reason = StopReason::divergence_detected;
            throw NotContractiveError("divergence detected at n = " + std::to_string(n) + " (measured ratio " +
                                          std::to_string(lambda_growing >= 5 ? ratio
                                                                             : trace.deltas[n] / trace.deltas[n - 1]) +
                                          ")",
                                      lambda_growing >= 5 ? ratio : trace.deltas[n] / trace.deltas[n - 1]);
        }
        if (n > 0 && tail < tol) {
            trace.values.resize(static_cast<std::size_t>(n) + 1);
            return {trace.values.back(), std::move(trace)};
        }
    }
    trace.stop_reason = StopReason::max_iter;
    throw IterationLimitError("limit did not reach tolerance within max-iter", trace.tail_bounds.back());
}

} // namespace

LimitResult limit_value(const OperatorSpec& spec, const FunctionModel& model, const BoundSpec& bound,
                        const PairPoint& point, double tol, const LimitOptions& options) {
    ModelPowers powers(spec, model, options.method, options.depth_cap);
    return extract_limit(powers, bound, eigenfactor(spec, bound), point, tol, options);
}

// --- LimitEvaluator ----------------------------------------------------------------------

namespace {

struct KeyHash {
    std::size_t operator()(const std::vector<std::uint64_t>& key) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (auto k : key)
            h = mix64(h ^ k);
        return static_cast<std::size_t>(h);
    }
};

} // namespace

struct LimitEvaluator::State {
    OperatorSpec spec;
    BoundSpec bound;
    double tolerance;
    double extraction_tolerance;
    LimitOptions options;
    std::optional<double> factor;
    ModelPowers powers;
    mutable std::shared_mutex mutex;
    std::unordered_map<std::vector<std::uint64_t>, LimitResult, KeyHash> cache;
    std::size_t computations = 0;

    State(OperatorSpec s, FunctionModel m, BoundSpec b, double tol, LimitOptions opt)
        : spec(s), bound(std::move(b)), tolerance(tol), extraction_tolerance(tol / (1.0 + s.abs_coef_sum())),
          options(opt), factor(feqstab::eigenfactor(spec, bound)), powers(std::move(s), std::move(m), opt.method, opt.depth_cap) {
        if (!(tol > 0.0))
            throw ValidationError("limit tolerance must be > 0");
    }
};

LimitEvaluator::LimitEvaluator(OperatorSpec spec, FunctionModel model, BoundSpec bound, double tolerance,
                               LimitOptions options)
    : state_(std::make_shared<State>(std::move(spec), std::move(model), std::move(bound), tolerance, options)) {}

double LimitEvaluator::tolerance() const noexcept { return state_->tolerance; }
double LimitEvaluator::extraction_tolerance() const noexcept { return state_->extraction_tolerance; }
const OperatorSpec& LimitEvaluator::spec() const noexcept { return state_->spec; }
const FunctionModel& LimitEvaluator::model() const noexcept { return state_->powers.model(); }
const BoundSpec& LimitEvaluator::bound() const noexcept { return state_->bound; }
std::optional<double> LimitEvaluator::eigenfactor() const noexcept { return state_->factor; }

LimitResult LimitEvaluator::result(const PairPoint& point) const {
    auto key = point.key();
    {
        std::shared_lock lock(state_->mutex);
        if (auto it = state_->cache.find(key); it != state_->cache.end())
            return it->second;
    }
    LimitResult computed =
        extract_limit(state_->powers, state_->bound, state_->factor, point, state_->extraction_tolerance, state_->options);
    std::unique_lock lock(state_->mutex);
    ++state_->computations;
    auto [it, inserted] = state_->cache.emplace(std::move(key), std::move(computed));
    return it->second;
}

Value LimitEvaluator::value(const PairPoint& point) const { return result(point).value; }

double LimitEvaluator::mu_star(const PairPoint& point) const {
    if (state_->factor) {
        if (*state_->factor >= 1.0)
            throw NotContractiveError("eigenfactor >= 1", *state_->factor);
        return state_->bound(point) / (1.0 - *state_->factor);
    }
    return mu_star_detail(state_->spec, state_->bound, point, state_->extraction_tolerance, state_->options.max_iter,
                          state_->options.depth_cap)
        .value;
}

std::size_t LimitEvaluator::cache_size() const {
    std::shared_lock lock(state_->mutex);
    return state_->cache.size();
}

std::size_t LimitEvaluator::computations() const {
    std::shared_lock lock(state_->mutex);
    return state_->computations;
}

// --- stability and uniqueness -------------------------------------------------------------

StabilityAudit verify_stability(const LimitEvaluator& limit, std::span<const PairPoint> grid) {
    StabilityAudit audit;
    audit.min_slack = std::numeric_limits<double>::infinity();
    for (const PairPoint& p : grid) {
        const LimitResult r = limit.result(p);
        const double distance = norm(difference(r.trace.values.front(), r.value));
        const double star = limit.mu_star(p);
        const double slack = star + limit.tolerance() - distance;
        audit.rows.push_back(PointAudit{p, limit.bound()(p), star, distance, slack});
        if (slack < audit.min_slack)
            audit.min_slack = slack;
        if (slack < 0.0 && -slack > audit.max_violation) {
            audit.max_violation = -slack;
            audit.witness = p;
        }
    }
    if (grid.empty())
        audit.min_slack = 0.0;
    audit.verdict = audit.witness ? Verdict::fail : Verdict::pass;
    return audit;
}

StabilityAudit verify_stability(const OperatorSpec& spec, const FunctionModel& model, const BoundSpec& bound,
                                std::span<const PairPoint> grid, double tol) {
    return verify_stability(LimitEvaluator(spec, model, bound, tol), grid);
}

UniquenessReport uniqueness_probe(const LimitEvaluator& a, const LimitEvaluator& b, std::span<const PairPoint> grid) {
    UniquenessReport report;
    report.points = grid.size();
    report.allowed = 2.0 * std::max(a.tolerance(), b.tolerance());
    for (const PairPoint& p : grid) {
        const double diff = norm(difference(a.value(p), b.value(p)));
        if (diff > report.max_difference) {
            report.max_difference = diff;
            if (diff > report.allowed)
                report.witness = p;
        }
    }
    report.verdict = report.witness ? Verdict::fail : Verdict::pass;
    return report;
}

UniquenessReport uniqueness_probe(const OperatorSpec& spec, const FunctionModel& model_a, const FunctionModel& model_b,
                                  const BoundSpec& bound, std::span<const PairPoint> grid, double tol) {
    if (!(model_a.core() == model_b.core()))
        throw ValidationError("uniqueness probe needs models sharing one bilinear core");
    return uniqueness_probe(LimitEvaluator(spec, model_a, bound, tol), LimitEvaluator(spec, model_b, bound, tol), grid);
}

} // namespace feqstab
