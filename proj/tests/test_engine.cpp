#include "helpers.hpp"

#include "feqstab/perturbation.hpp"

#include <doctest.h>

#include <thread>

using namespace feqstab;
using namespace testing;

namespace {

OperatorSpec displayed_variant() {
    // Same maps and |coef| as thm31, signs (+2 on 3x/5, -2 on 2x/5, -1 on -x/5).
    return OperatorSpec({{-1.0, ArgMap::diagonal(Rational(-1, 5), 3)},
                         {2.0, ArgMap::diagonal(Rational(3, 5), 1)},
                         {-2.0, ArgMap::diagonal(Rational(2, 5), 2)}});
}

OperatorSpec mixed_spec() {
    return OperatorSpec({{16.0, ArgMap(Rational(1, 8), Rational(1, 8), 0, Rational(1, 4))},
                         {16.0, ArgMap(Rational(1, 8), Rational(-1, 8), 0, Rational(1, 4))}});
}

BoundSpec sextic() { return BoundSpec({{1, 6, 0}, {3, 4, 2}, {3, 2, 4}, {1, 0, 6}}); }

FunctionModel hash_model(const CatalogEntry& e, double eta, std::uint64_t seed) {
    return make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, eta, seed, OscillatorKind::hash);
}

} // namespace

TEST_CASE("apply_operator matches hand evaluation") {
    const auto e = thm31(4);
    // 2 (2/5)(2) - (-1/5)(3) - 2 (3/5)(1) = 8/5 + 3/5 - 6/5 = 1
    CHECK(apply_operator(e.spec, uv, PairPoint::scalar(1.0, 1.0))[0] == doctest::Approx(1.0).epsilon(1e-15));
    // 2 (x/2)(z/2) - 2 (x/2)(-z/2) = xz
    const auto e2 = thm32(3, 0.0);
    CHECK(apply_operator(e2.spec, uv, PairPoint::scalar(1.5, -2.0))[0] == doctest::Approx(-3.0).epsilon(1e-15));
    // the displayed-sign variant maps uv to 0.2 uv
    CHECK(apply_operator(displayed_variant(), uv, PairPoint::scalar(1.0, 1.0))[0] ==
          doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("collapsed powers equal the naive recursion") {
    const auto e = thm31(4);
    // smooth f: the hash oscillator is keyed on exact bits, and the oracle rounds per step
    const Evaluatable f = [](const PairPoint& p) {
        const double u = p.first()[0], v = p.second()[0];
        return Value{std::sin(3.0 * u) * std::cos(v) + u * u * v};
    };
    PowerPlan collapse(e.spec, PowerMethod::collapse);
    PowerPlan naive(e.spec, PowerMethod::naive);
    for (const auto& p : sample_points(10, 2.0, 11))
        for (int n = 0; n <= 6; ++n) {
            const double oracle = naive_power(e.spec, f, p, n)[0];
            CHECK(rel_diff(collapse.apply(n, f, p)[0], oracle) <= 1e-12);
            CHECK(rel_diff(naive.apply(n, f, p)[0], oracle) <= 1e-12);
        }
}

TEST_CASE("term counts follow multinomial and word counts") {
    const auto e = thm31(4);
    // compositions of n into 3 parts: C(n+2, 2)
    CHECK(power_term_count(e.spec, 5, PowerMethod::collapse) == 21);
    CHECK(power_term_count(e.spec, 5, PowerMethod::naive) == 243);
    CHECK(power_term_count(e.spec, 0) == 1);
    CHECK_THROWS_AS(PowerPlan(mixed_spec(), PowerMethod::collapse), ValidationError);
    PowerPlan capped(mixed_spec(), PowerMethod::naive, 4);
    CHECK(capped.level(4).size() == 16);
    CHECK_THROWS_AS(capped.level(5), CapacityError);
}

TEST_CASE("collapse weights sum to (sum coef)^n") {
    const auto e = thm31(4);
    PowerPlan plan(e.spec);
    for (int n = 1; n <= 10; ++n) {
        double sum = 0.0, abs_sum = 0.0;
        for (const auto& t : plan.level(n)) {
            sum += t.weight;
            abs_sum += std::fabs(t.weight);
        }
        CHECK(sum == doctest::Approx(std::pow(-1.0, n)).epsilon(1e-12));
        CHECK(abs_sum == doctest::Approx(std::pow(5.0, n)).epsilon(1e-12));
    }
}

TEST_CASE("eigenfactor closed forms") {
    CHECK(*eigenfactor(thm31(4).spec, thm31(4).bound) == doctest::Approx(0.3859328).epsilon(1e-13));
    CHECK(*eigenfactor(thm32(3, 0.2).spec, thm32(3, 0.2).bound) == 0.5);
    CHECK(!eigenfactor(mixed_spec(), sextic()));
    CHECK(*eigenfactor(thm31(4).spec, BoundSpec()) == 0.0);
    // non-uniform scaling across bound terms has no eigenfactor
    CHECK(!eigenfactor(thm31(4).spec, BoundSpec({{1, 2, 0}, {1, 0, 2}})));
}

TEST_CASE("core transfer matrix") {
    CHECK(CoreTransfer(thm31(4).spec).fixes_bilinear());
    CHECK(CoreTransfer(thm32(3, 0).spec).fixes_bilinear());
    CHECK(CoreTransfer(mixed_spec()).fixes_bilinear());
    CHECK(!CoreTransfer(displayed_variant()).fixes_bilinear());
    CoreTransfer t(displayed_variant());
    CHECK(t.coefficients(3)[1] == doctest::Approx(0.008).epsilon(1e-12));
}

TEST_CASE("mu* closed form equals partial sums") {
    for (const auto& e : {thm31(4), thm32(3, 0.2)}) {
        for (const auto& p : sample_points(5, 2.0, 17)) {
            double sum = 0.0;
            for (int n = 0; n <= 12; ++n)
                sum += naive_lambda(e.spec, e.bound, p, n);
            const double tail = std::pow(e.factor, 13) / (1.0 - e.factor) * e.bound(p);
            CHECK(std::fabs(sum + tail - mu_star(e.spec, e.bound, p, 1e-12)) <= 1e-9 * std::max(1.0, sum));
        }
    }
    CHECK(mu_star(thm31(4).spec, thm31(4).bound, PairPoint::scalar(1.0, 1.0), 1e-12) ==
          doctest::Approx(0.0864468).epsilon(1e-6));
    CHECK(mu_star(thm32(3, 0.0).spec, thm32(3, 0.0).bound, PairPoint::scalar(2.0, 2.0), 1e-12) ==
          doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("empirical mu* for mixed maps") {
    const PairPoint p = PairPoint::scalar(1.0, 1.0);
    const MuStar m = mu_star_detail(mixed_spec(), sextic(), p, 1e-12);
    CHECK(!m.closed_form);
    double sum = 0.0;
    for (int n = 0; n < m.terms; ++n)
        sum += naive_lambda(mixed_spec(), sextic(), p, n);
    CHECK(m.value == doctest::Approx(sum).epsilon(1e-12));
    CHECK(m.value > sextic()(p));
}

TEST_CASE("divergent majorants raise NotContractive") {
    const OperatorSpec grow({{2.0, ArgMap(1, 1, 0, 1)}});
    CHECK_THROWS_AS(mu_star_detail(grow, BoundSpec({{1, 2, 0}}), PairPoint::scalar(1.0, 1.0), 1e-10),
                    NotContractiveError);
    const OperatorSpec identity({{1.0, ArgMap::identity()}});
    CHECK_THROWS_AS(mu_star(identity, BoundSpec({{1, 2, 2}}), PairPoint::scalar(1.0, 1.0), 1e-10),
                    NotContractiveError);
    const FunctionModel exact(BilinearCore::identity(1));
    try {
        limit_value(identity, exact, BoundSpec({{1, 2, 2}}), PairPoint::scalar(1.0, 1.0), 1e-10);
        FAIL("expected NotContractiveError");
    } catch (const NotContractiveError& e) {
        CHECK(e.factor() == 1.0);
    }
}

TEST_CASE("limits of perturbed models recover the core") {
    const auto e = thm31(4);
    const FunctionModel model = hash_model(e, 1.0, 7);
    for (const auto& p : sample_points(20, 2.0, 23)) {
        const LimitResult r = limit_value(e.spec, model, e.bound, p, 1e-10);
        CHECK(std::fabs(r.value[0] - uv(p)[0]) <= 1e-10);
        CHECK(r.trace.stop_reason == StopReason::tail_below_tol);
        CHECK(r.trace.values.size() == r.trace.deltas.size());
        for (std::size_t n = 0; n < r.trace.deltas.size(); ++n)
            CHECK(r.trace.deltas[n] <= r.trace.lambda_bounds[n] + 1e-9);
    }
}

TEST_CASE("iteration cap raises IterationLimitError") {
    const auto e = thm31(4);
    const FunctionModel model = hash_model(e, 1.0, 7);
    LimitOptions o;
    o.max_iter = 3;
    CHECK_THROWS_AS(limit_value(e.spec, model, e.bound, PairPoint::scalar(1.5, 1.5), 1e-10, o), IterationLimitError);
}

TEST_CASE("empirical limits for mixed maps") {
    const OperatorSpec spec = mixed_spec();
    const FunctionModel model(BilinearCore::identity(1),
                              PerturbationSpec(sextic().scaled(1.0 / 33.0), 1.0, 5, 1));
    for (const auto& p : sample_points(10, 2.0, 29)) {
        const LimitResult r = limit_value(spec, model, sextic(), p, 1e-10);
        CHECK(r.trace.empirical);
        CHECK(std::fabs(r.value[0] - uv(p)[0]) <= 1e-9);
    }
}

TEST_CASE("defect is structural for models") {
    const auto e = thm31(4);
    const FunctionModel exact(BilinearCore::identity(1));
    for (const auto& p : sample_points(20, 2.0, 31)) {
        CHECK(defect(e.spec, exact, p) == 0.0);
        CHECK(defect(e.spec, Evaluatable(uv), p) <= 1e-12);
    }
    const FunctionModel m = hash_model(e, 1.0, 2);
    const PairPoint p = PairPoint::scalar(1.2, -0.8);
    const Evaluatable f = [&m](const PairPoint& q) { return m.evaluate(q); };
    CHECK(defect(e.spec, m, p) == doctest::Approx(defect(e.spec, f, p)).epsilon(1e-9));
}

TEST_CASE("stability audit passes for admissible and fails for oversized perturbations") {
    const auto e = thm31(4);
    const auto grid = default_grid(1, 2.0, 60);
    const FunctionModel good = hash_model(e, 1.0, 4);
    const StabilityAudit ok = verify_stability(e.spec, good, e.bound, grid, 1e-10);
    CHECK(ok.verdict == Verdict::pass);
    CHECK(ok.rows.size() == grid.size());
    CHECK(ok.min_slack >= 0.0);

    // g = 3 mu times a resonant oscillation: |f - K| reaches ~3 mu|osc| > mu*.
    const auto res = solve_resonance(e.spec, e.bound);
    REQUIRE(res);
    const FunctionModel bad(BilinearCore::identity(1), PerturbationSpec(e.bound.scaled(3.0), 1.0, 4, 1, res));
    const StabilityAudit fail = verify_stability(e.spec, bad, e.bound, grid, 1e-10);
    CHECK(fail.verdict == Verdict::fail);
    REQUIRE(fail.witness);
    CHECK(fail.max_violation > 0.0);
}

TEST_CASE("uniqueness across seeds") {
    const auto e = thm32(3, 0.2);
    const auto grid = default_grid(1, 2.0, 50);
    const UniquenessReport u =
        uniqueness_probe(e.spec, hash_model(e, 1.0, 1), hash_model(e, 1.0, 2), e.bound, grid, 1e-10);
    CHECK(u.verdict == Verdict::pass);
    CHECK(u.max_difference <= 1e-8);
    CHECK_THROWS_AS(uniqueness_probe(e.spec, FunctionModel(BilinearCore::scalar(1.0)),
                                     FunctionModel(BilinearCore::scalar(2.0)), e.bound, grid, 1e-10),
                    ValidationError);
}

TEST_CASE("limit evaluator caches and is safe under concurrency") {
    const auto e = thm31(4);
    const LimitEvaluator K(e.spec, hash_model(e, 1.0, 8), e.bound, 1e-10);
    CHECK(K.extraction_tolerance() == doctest::Approx(1e-10 / 6.0));
    const auto grid = default_grid(1, 2.0, 40);
    std::vector<double> serial;
    {
        const LimitEvaluator fresh(e.spec, hash_model(e, 1.0, 8), e.bound, 1e-10);
        for (const auto& p : grid)
            serial.push_back(fresh(p)[0]);
    }
    std::vector<std::thread> threads;
    std::vector<std::vector<double>> seen(6);
    for (int t = 0; t < 6; ++t)
        threads.emplace_back([&, t] {
            for (std::size_t i = 0; i < grid.size(); ++i)
                seen[t].push_back(K(grid[(i + 7 * t) % grid.size()])[0]);
        });
    for (auto& th : threads)
        th.join();
    for (int t = 0; t < 6; ++t)
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(seen[t][i] == serial[(i + 7 * t) % grid.size()]);
    CHECK(K.cache_size() == grid.size());
    const LimitEvaluator copy = K;
    copy(grid[0]);
    CHECK(copy.cache_size() == grid.size());
}

TEST_CASE("fixed-point residual of the extracted limit") {
    const auto e = thm32(3, 0.2);
    const LimitEvaluator K(e.spec, hash_model(e, 1.0, 12), e.bound, 1e-10);
    for (const auto& p : default_grid(1, 2.0, 30)) {
        const Value k = K(p);
        const Value tk = apply_operator(e.spec, K, p);
        CHECK(std::fabs(k[0] - tk[0]) <= 2e-10);
    }
}

TEST_CASE("measured rate of a resonant perturbation equals the eigenfactor") {
    for (double p : {3.5, 4.0, 5.0}) {
        const auto e = thm31(p);
        const FunctionModel m =
            make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, 0.5, 1, OscillatorKind::resonant);
        REQUIRE(m.perturbation()->is_resonant());
        const LimitResult r = limit_value(e.spec, m, e.bound, PairPoint::scalar(1.3, -0.9), 1e-12);
        REQUIRE(r.trace.deltas.size() >= 3);
        // T g = c g, so every delta ratio is c; the early ones sit far above rounding
        CHECK(r.trace.deltas[1] / r.trace.deltas[0] == doctest::Approx(e.factor).epsilon(1e-6));
        CHECK(r.trace.deltas[2] / r.trace.deltas[1] == doctest::Approx(e.factor).epsilon(1e-6));
        REQUIRE(r.trace.measured_rate());
        CHECK(*r.trace.measured_rate() == doctest::Approx(e.factor).epsilon(1e-2));
    }
}
