#include "helpers.hpp"

#include "feqstab/perturbation.hpp"

#include <doctest.h>

#include <filesystem>

using namespace feqstab;
using namespace testing;

TEST_CASE("eta = 0 gives the exact core") {
    const auto e = thm31(4);
    const BilinearCore core = BilinearCore::scalar(-0.75);
    const FunctionModel m = make_perturbed_model(core, e.bound, e.spec, 0.0, 9);
    CHECK(!m.perturbation());
    CHECK(m == FunctionModel(core));
    CHECK_THROWS_AS(make_perturbed_model(core, e.bound, e.spec, 1.5, 9), ValidationError);
}

TEST_CASE("perturbed models are admissible by construction") {
    const auto grid = default_grid(1, 2.0, 100);
    for (const auto& e : {thm31(4), thm32(3, 0.2)})
        for (OscillatorKind kind : {OscillatorKind::hash, OscillatorKind::resonant})
            for (double eta : {0.2, 0.5, 1.0})
                for (std::uint64_t seed = 1; seed <= 10; ++seed) {
                    const FunctionModel m =
                        make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, eta, seed, kind);
                    const AdmissibilityReport a = audit_admissibility(m, e.spec, e.bound, grid);
                    CHECK(a.verdict == Verdict::pass);
                    CHECK(a.max_ratio <= 1.0 + admissibility_slack);
                    CHECK(a.zero_violations == 0);
                    CHECK(a.grid_size == grid.size());
                    CHECK(*a.seed == seed);
                }
}

TEST_CASE("resonant perturbations are T-eigenfunctions") {
    for (const auto& e : {thm31(4), thm32(3, 0.2)}) {
        const FunctionModel m =
            make_perturbed_model(BilinearCore::scalar(0.0), e.bound, e.spec, 1.0, 5, OscillatorKind::resonant);
        REQUIRE(m.perturbation()->is_resonant());
        const Evaluatable g = [&m](const PairPoint& p) { return m.perturbation_value(p); };
        for (const auto& p : sample_points(20, 2.0, 61)) {
            const double tg = apply_operator(e.spec, g, p)[0];
            CHECK(std::fabs(tg - e.factor * g(p)[0]) <= 1e-6 * e.bound(p));
        }
    }
}

TEST_CASE("solve_resonance") {
    const auto r31 = solve_resonance(thm31(4).spec, thm31(4).bound);
    REQUIRE(r31);
    CHECK(r31->residual <= 1e-6);
    const auto r32 = solve_resonance(thm32(3, 0).spec, thm32(3, 0).bound);
    REQUIRE(r32);
    CHECK(r32->residual <= 1e-12);
    // non-diagonal maps have no log-lattice phase
    const OperatorSpec mixed({{1.0, ArgMap(Rational(1, 2), Rational(1, 2), 0, Rational(1, 2))}});
    CHECK(!solve_resonance(mixed, BoundSpec({{1, 2, 2}})));
    // a zero diagonal entry sends points to the axis
    const OperatorSpec degenerate({{0.5, ArgMap::diagonal(0, Rational(1, 2))}});
    CHECK(!solve_resonance(degenerate, BoundSpec({{1, 2, 2}})));
}

TEST_CASE("oversized resonant perturbations fail the audit") {
    const auto e = thm31(4);
    const auto res = solve_resonance(e.spec, e.bound);
    REQUIRE(res);
    // g = 3 mu osc has defect (1 - c) 3 mu |osc|, up to ~1.8 mu
    const FunctionModel m(BilinearCore::identity(1), PerturbationSpec(e.bound.scaled(3.0), 1.0, 2, 1, res));
    const AdmissibilityReport a = audit_admissibility(m, e.spec, e.bound, default_grid(1, 2.0, 100));
    CHECK(a.verdict == Verdict::fail);
    CHECK(a.max_ratio > 1.0);
    REQUIRE(a.witness);
    CHECK(a.witness->size() == 2);
}

TEST_CASE("perturbations vanish where the envelope does") {
    const auto e = thm31(4);
    const FunctionModel m = make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, 1.0, 3);
    for (double t : {-1.5, 0.0, 0.25, 2.0}) {
        CHECK(m.perturbation_value(PairPoint::scalar(0.0, t))[0] == 0.0);
        CHECK(m.perturbation_value(PairPoint::scalar(t, 0.0))[0] == 0.0);
    }
    const FunctionModel again = make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, 1.0, 3);
    for (const auto& p : sample_points(50, 2.0, 62))
        CHECK(m.evaluate(p) == again.evaluate(p));
}

TEST_CASE("non-diagonal specs have no margin argument") {
    const OperatorSpec mixed({{16.0, ArgMap(Rational(1, 8), Rational(1, 8), 0, Rational(1, 4))},
                              {16.0, ArgMap(Rational(1, 8), Rational(-1, 8), 0, Rational(1, 4))}});
    CHECK_THROWS_AS(make_perturbed_model(BilinearCore::identity(1), BoundSpec({{1, 6, 0}}), mixed, 0.5, 1),
                    ValidationError);
}

TEST_CASE("four-point audit") {
    const auto e = thm31(4);
    const auto quads = random_quadruples(1, 2.0, 200, 9);
    CHECK(audit_fe31(FunctionModel(BilinearCore::identity(1)), 4.0, quads).verdict == Verdict::pass);

    // y = 0 makes the right side zero while g(x, z -+ w) - g(x, z) need not vanish
    const Quadruple zero_slot{VectorElement::scalar(1.3), VectorElement::scalar(0.0), VectorElement::scalar(0.9),
                              VectorElement::scalar(0.4)};
    const std::vector<Quadruple> one{zero_slot};
    const FunctionModel m = make_perturbed_model(BilinearCore::identity(1), e.bound, e.spec, 1.0, 1);
    const AdmissibilityReport bad = audit_fe31(m, 4.0, one);
    CHECK(bad.verdict == Verdict::fail);
    CHECK(bad.zero_violations == 1);
    REQUIRE(bad.witness);
    CHECK(bad.witness->size() == 4);

    const EtaMargin margin = fe31_eta_margin(BilinearCore::identity(1), e, 1, quads);
    CHECK(margin.audit.verdict == Verdict::pass);
    CHECK(margin.eta > 0.0);
    CHECK(margin.eta == std::ldexp(1.0, -margin.halvings));
    CHECK_THROWS_AS(fe31_eta_margin(BilinearCore::identity(1), thm32(3, 0), 1, quads), ValidationError);
}

TEST_CASE("default grid layout") {
    const auto g = default_grid(1, 2.0, 100);
    REQUIRE(g.size() == 100);
    CHECK(g[0] == PairPoint::scalar(0.0, 0.0));
    CHECK(g[1].flat() == std::vector<double>{2.0, 0.0});
    CHECK(g[2].flat() == std::vector<double>{-2.0, 0.0});
    for (const auto& p : g)
        for (double x : p.flat())
            CHECK(std::fabs(x) <= 2.0);
    const auto g2 = default_grid(2, 1.0, 30);
    CHECK(g2[5].dim() == 2);
    CHECK(default_grid(1, 2.0, 3).size() == 3);
    CHECK_THROWS_AS(default_grid(1, 0.0, 10), ValidationError);
    CHECK(random_points(1, 2.0, 10, 4).size() == 10);
    CHECK(random_points(1, 2.0, 10, 4)[3] == random_points(1, 2.0, 10, 4)[3]);
}

TEST_CASE("grid files") {
    const auto g = parse_grid("# header\n1 2\n\n-0.5 3e-1\n");
    REQUIRE(g.size() == 2);
    CHECK(g[1].flat() == std::vector<double>{-0.5, 0.3});
    try {
        parse_grid("1 2\n3 nan\n");
        FAIL("expected a grid error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 2 column 2") != std::string::npos);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_grid("1 2 3\n"), ValidationError);
    CHECK_THROWS_AS(parse_grid("1 2\n1 2 3 4\n"), ValidationError);
    CHECK_THROWS_AS(parse_grid("1 x\n"), ValidationError);

    const auto path = std::filesystem::temp_directory_path() / "feqstab_grid_roundtrip.txt";
    const auto grid = default_grid(2, 1.5, 40);
    write_grid(path, grid);
    CHECK(read_grid(path) == grid);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_grid("/nonexistent/grid.txt"), Error);
}

TEST_CASE("oscillator names") {
    CHECK(parse_oscillator("hash") == OscillatorKind::hash);
    CHECK(to_string(OscillatorKind::resonant) == "resonant");
    CHECK_THROWS_AS(parse_oscillator("sine"), ValidationError);
}
