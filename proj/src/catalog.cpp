#include "feqstab/catalog.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace feqstab {

namespace {

std::string num(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

Value sub(Value a, const Value& b) {
    for (std::size_t j = 0; j < a.size(); ++j)
        a[j] -= b[j];
    return a;
}

Value add(Value a, const Value& b) {
    for (std::size_t j = 0; j < a.size(); ++j)
        a[j] += b[j];
    return a;
}

Value times(double s, Value a) {
    for (double& x : a)
        x *= s;
    return a;
}

Value fe_combination(const Evaluatable& f, const VectorElement& x, const VectorElement& y, const VectorElement& z,
                     const VectorElement& w) {
    Value out = add(f(PairPoint(x + y, z - w)), f(PairPoint(x - y, z + w)));
    out = sub(out, times(2.0, f(PairPoint(x, z))));
    return add(out, times(2.0, f(PairPoint(y, w))));
}

} // namespace

double thm31_factor(double p) { return 3.0 * std::pow(3.0 / 5.0, 2.0 * p) + 2.0 * std::pow(4.0 / 5.0, 2.0 * p); }

double thm32_factor(double r) { return 4.0 / std::pow(2.0, r); }

CatalogEntry thm31(double p) {
    if (!(p > 0.0) || !std::isfinite(p))
        throw ValidationError("thm31 needs p > 0");
    OperatorSpec spec({
        {2.0, ArgMap::diagonal(Rational(2, 5), 2)},
        {-1.0, ArgMap::diagonal(Rational(-1, 5), 3)},
        {-2.0, ArgMap::diagonal(Rational(3, 5), 1)},
    });
    // 12^p / 25^p is exact in both parts for small integer p, so the quotient is correctly rounded.
    double mu_coef = std::pow(12.0, p) / std::pow(25.0, p);
    if (!std::isfinite(mu_coef) || mu_coef == 0.0)
        mu_coef = std::pow(12.0 / 25.0, p);
    BoundSpec bound({{mu_coef, 2.0 * p, 2.0 * p}});
    const double c = *eigenfactor(spec, bound);

    CatalogEntry entry{"thm31", spec, bound, {{"p", p}}, {}, c, c < 1.0, 0.0, std::nullopt, false};
    entry.notes.push_back("sign correction: T f(x,y) = 2 f(2x/5,2y) - f(-x/5,3y) - 2 f(3x/5,y); the variant "
                          "-f(-x/5,3y) + 2 f(3x/5,y) - 2 f(2x/5,2y) does not fix bilinear maps, and this choice "
                          "reproduces the single-orbit inequality term for term");
    if (p <= 3.0)
        entry.notes.push_back("hypothesis p > 3 not met (p = " + num(p) + "); contraction factor " + num(c) +
                              " is what governs convergence");
    if (c >= 1.0) {
        entry.notes.push_back("not contractive: factor " + num(c) + " >= 1");
        entry.series_constant = std::numeric_limits<double>::infinity();
    } else {
        entry.series_constant = mu_coef / (1.0 - c);
    }
    entry.paper_constant = 1.0 / (1.0 - thm31_factor(p)) * mu_coef;
    entry.discrepancy = c < 1.0 && std::fabs(entry.series_constant - *entry.paper_constant) >
                                       1e-12 * std::fabs(*entry.paper_constant);
    entry.notes.push_back("symmetry hypothesis f(x,y) = f(y,x) is not consumed by the iteration; audited only on "
                          "request");
    return entry;
}

CatalogEntry thm32(double r, double rho) {
    if (!(std::fabs(rho) < 1.0))
        throw ValidationError("thm32 needs |rho| < 1");
    if (!(r >= 0.0) || !std::isfinite(r))
        throw ValidationError("thm32 needs a finite r >= 0");
    OperatorSpec spec({
        {2.0, ArgMap::diagonal(Rational(1, 2), Rational(1, 2))},
        {-2.0, ArgMap::diagonal(Rational(1, 2), Rational(-1, 2))},
    });
    const double coef = 2.0 * std::pow(0.5, r) / (1.0 - std::fabs(rho));
    BoundSpec bound({{coef, r, 0.0}, {coef, 0.0, r}});
    const double c = *eigenfactor(spec, bound);

    CatalogEntry entry{"thm32", spec, bound, {{"r", r}, {"rho", rho}}, {}, c, c < 1.0, 0.0, std::nullopt, false};
    if (r <= 2.0)
        entry.notes.push_back("hypothesis r > 2 not met (r = " + num(r) + ")");
    if (c >= 1.0) {
        entry.notes.push_back("not contractive: factor " + num(c) + " >= 1");
        entry.series_constant = std::numeric_limits<double>::infinity();
    } else {
        entry.series_constant = std::pow(2.0, r + 1.0) / (std::pow(2.0, r) - 4.0);
    }
    entry.paper_constant = std::pow(2.0, 3.0 + r) / (std::pow(2.0, r) - 1.0);
    entry.discrepancy = !(std::fabs(entry.series_constant - *entry.paper_constant) <=
                          1e-12 * std::fabs(*entry.paper_constant));
    if (entry.discrepancy)
        entry.notes.push_back("constant discrepancy: the series gives mu* = " + num(entry.series_constant) +
                              " (|x/2|^r + |z/2|^r)/(1-|rho|), i.e. 2^(r+1)/(2^r-4); the published figure "
                              "2^(3+r)/(2^r-1) = " +
                              num(*entry.paper_constant) + " is not the series sum; bounds use the series value");
    if (rho >= 0.4)
        entry.notes.push_back("rho = " + num(rho) + " is outside rho < 2/5 used for the biadditivity argument");
    entry.notes.push_back("the constraint 2 rho <= |1 + a| involves a, which drops out of the reduced operator; "
                          "a is only exercised by the rho-inequality residual");
    return entry;
}

CatalogEntry catalog_entry(const std::string& name, const std::map<std::string, double>& params) {
    auto get = [&](const char* key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "thm31")
        return thm31(get("p", 4.0));
    if (name == "thm32")
        return thm32(get("r", 3.0), get("rho", 0.0));
    throw ValidationError("unknown catalog entry '" + name + "' (expected thm31 or thm32)");
}

double verify_specialization(const Evaluatable& f, const VectorElement& X, const VectorElement& Y) {
    const VectorElement x = X.scaled(2.0 / 5.0);
    const VectorElement y = X.scaled(3.0 / 5.0);
    const VectorElement z = Y.scaled(2.0);
    const VectorElement w = Y;
    const Value four_point = fe_combination(f, x, y, z, w);
    // f(X,Y) + f(-X/5, 3Y) + 2 f(3X/5, Y) - 2 f(2X/5, 2Y), with the arguments
    // built exactly as the four-point form builds them.
    Value orbit = add(f(PairPoint(x + y, z - w)), f(PairPoint(x - y, z + w)));
    orbit = add(orbit, times(2.0, f(PairPoint(y, w))));
    orbit = sub(orbit, times(2.0, f(PairPoint(x, z))));
    return norm(sub(four_point, orbit));
}

double biadditivity_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y,
                             const VectorElement& w, Slot slot) {
    if (slot == Slot::first)
        return norm(sub(sub(f(PairPoint(x + y, w)), f(PairPoint(x, w))), f(PairPoint(y, w))));
    return norm(sub(sub(f(PairPoint(x, y + w)), f(PairPoint(x, y))), f(PairPoint(x, w))));
}

double fe_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y, const VectorElement& z,
                   const VectorElement& w) {
    return norm(fe_combination(f, x, y, z, w));
}

RhoSides rho_inequality_residual(const Evaluatable& f, double a, double rho, const VectorElement& x,
                                 const VectorElement& y, const VectorElement& z, const VectorElement& w) {
    if (a == 0.0 || !std::isfinite(a))
        throw ValidationError("rho inequality needs a finite a != 0");
    const Value common = sub(times(2.0, f(PairPoint(y, w))), times(2.0, f(PairPoint(x, z))));
    const Value first = f(PairPoint(x + y, z - w));
    Value lhs = add(first, times(a, f(PairPoint((x - y).scaled(1.0 / a), z + w))));
    lhs = add(lhs, common);
    const Value rhs = add(add(first, f(PairPoint(x - y, z + w))), common);
    return {norm(lhs), std::fabs(rho) * norm(rhs)};
}

double symmetry_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y) {
    return norm(sub(f(PairPoint(x, y)), f(PairPoint(y, x))));
}

std::vector<double> flatten(const Quadruple& q) {
    std::vector<double> out;
    for (const auto* e : {&q.x, &q.y, &q.z, &q.w})
        out.insert(out.end(), e->coords().begin(), e->coords().end());
    return out;
}

CheckReport fe312_bound_check(const Evaluatable& f, double r, std::span<const Quadruple> quadruples) {
    CheckReport report{"fe312_bound", Verdict::pass, quadruples.size(), std::numeric_limits<double>::infinity(),
                       std::nullopt, ""};
    for (const Quadruple& q : quadruples) {
        const double residual = fe_residual(f, q);
        const double bound = 2.0 * (std::pow(q.x.norm(), r) + std::pow(q.z.norm(), r)) + std::pow(q.y.norm(), r) +
                             std::pow(q.w.norm(), r);
        const double slack = bound - residual;
        if (slack < report.worst) {
            report.worst = slack;
            if (slack < 0.0) {
                report.verdict = Verdict::fail;
                report.witness = flatten(q);
            }
        }
    }
    if (quadruples.empty())
        report.worst = 0.0;
    report.detail = "min slack of 2(|x|^r+|z|^r)+|y|^r+|w|^r - FE residual, r = " + num(r);
    return report;
}

CheckReport fe312_bound_check(const FunctionModel& model, double r, std::span<const Quadruple> quadruples) {
    return fe312_bound_check([&model](const PairPoint& p) { return model.perturbation_value(p); }, r, quadruples);
}

} // namespace feqstab
