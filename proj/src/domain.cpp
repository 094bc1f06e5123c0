#include "feqstab/domain.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace feqstab {

double norm(std::span<const double> value) {
    if (value.size() == 1)
        return std::fabs(value[0]);
    double sum = 0.0;
    for (double x : value)
        sum += x * x;
    return std::sqrt(sum);
}

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::skipped: return "SKIPPED";
    }
    return "SKIPPED";
}

Verdict parse_verdict(std::string_view text) {
    if (text == "PASS") return Verdict::pass;
    if (text == "FAIL") return Verdict::fail;
    if (text == "SKIPPED") return Verdict::skipped;
    throw ValidationError("unknown verdict '" + std::string(text) + "'");
}

// --- VectorElement -----------------------------------------------------------

VectorElement::VectorElement(std::vector<double> coords) : coords_(std::move(coords)) {
    if (coords_.empty())
        throw ValidationError("vector element needs dimension >= 1");
    for (double x : coords_)
        if (!std::isfinite(x))
            throw ValidationError("vector element has a non-finite coordinate");
}

VectorElement VectorElement::zero(std::size_t dim) { return VectorElement(std::vector<double>(dim, 0.0)); }

double VectorElement::norm() const { return feqstab::norm(coords_); }

VectorElement VectorElement::operator+(const VectorElement& rhs) const {
    if (rhs.dim() != dim())
        throw ValidationError("vector dimension mismatch");
    std::vector<double> out(coords_);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += rhs.coords_[i];
    return VectorElement(std::move(out));
}

VectorElement VectorElement::operator-(const VectorElement& rhs) const { return *this + (-rhs); }

VectorElement VectorElement::operator-() const { return scaled(-1.0); }

VectorElement VectorElement::scaled(double factor) const {
    std::vector<double> out(coords_);
    for (double& x : out)
        x *= factor;
    return VectorElement(std::move(out));
}

// --- PairPoint ---------------------------------------------------------------

PairPoint::PairPoint(VectorElement first, VectorElement second)
    : first_(std::move(first)), second_(std::move(second)) {
    if (first_.dim() != second_.dim())
        throw ValidationError("pair point slots have different dimensions");
}

PairPoint PairPoint::scalar(double u, double v) { return PairPoint(VectorElement::scalar(u), VectorElement::scalar(v)); }

std::vector<std::uint64_t> PairPoint::key() const {
    std::vector<std::uint64_t> out;
    out.reserve(2 * dim());
    for (const auto* slot : {&first_, &second_})
        for (double x : slot->coords())
            out.push_back(std::bit_cast<std::uint64_t>(x == 0.0 ? 0.0 : x));
    return out;
}

std::vector<double> PairPoint::flat() const {
    std::vector<double> out(first_.coords().begin(), first_.coords().end());
    out.insert(out.end(), second_.coords().begin(), second_.coords().end());
    return out;
}

PairPoint PairPoint::from_flat(std::span<const double> coords) {
    if (coords.empty() || coords.size() % 2 != 0)
        throw ValidationError("flat pair point needs an even, nonzero number of coordinates");
    const std::size_t d = coords.size() / 2;
    return PairPoint(VectorElement({coords.begin(), coords.begin() + d}),
                     VectorElement({coords.begin() + d, coords.end()}));
}

std::string PairPoint::to_string() const {
    std::ostringstream os;
    os.precision(17);
    auto put = [&os](const VectorElement& e) {
        os << '(';
        for (std::size_t i = 0; i < e.dim(); ++i)
            os << (i ? ", " : "") << e[i];
        os << ')';
    };
    os << '(';
    put(first_);
    os << ", ";
    put(second_);
    os << ')';
    return os.str();
}

// --- ArgMap ------------------------------------------------------------------

ArgMap::ArgMap(Rational a, Rational b, Rational c, Rational d)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
    rounded_ = {a_.convert_to<double>(), b_.convert_to<double>(), c_.convert_to<double>(),
                d_.convert_to<double>()};
    diagonal_ = b_ == 0 && c_ == 0;
}

ArgMap ArgMap::identity() { return ArgMap(1, 0, 0, 1); }

PairPoint apply_entries(const std::array<double, 4>& m, bool diagonal, const PairPoint& point) {
    const auto u = point.first().coords();
    const auto v = point.second().coords();
    std::vector<double> nu(u.size()), nv(v.size());
    if (diagonal) {
        for (std::size_t i = 0; i < u.size(); ++i) {
            nu[i] = m[0] * u[i];
            nv[i] = m[3] * v[i];
        }
    } else {
        for (std::size_t i = 0; i < u.size(); ++i) {
            nu[i] = m[0] * u[i] + m[1] * v[i];
            nv[i] = m[2] * u[i] + m[3] * v[i];
        }
    }
    return PairPoint(VectorElement(std::move(nu)), VectorElement(std::move(nv)));
}

PairPoint ArgMap::apply(const PairPoint& point) const { return apply_entries(rounded_, diagonal_, point); }

ArgMap operator*(const ArgMap& l, const ArgMap& r) {
    return ArgMap(l.a_ * r.a_ + l.b_ * r.c_, l.a_ * r.b_ + l.b_ * r.d_, l.c_ * r.a_ + l.d_ * r.c_,
                  l.c_ * r.b_ + l.d_ * r.d_);
}

bool operator==(const ArgMap& l, const ArgMap& r) {
    return l.a_ == r.a_ && l.b_ == r.b_ && l.c_ == r.c_ && l.d_ == r.d_;
}

bool operator<(const ArgMap& l, const ArgMap& r) {
    if (l.a_ != r.a_) return l.a_ < r.a_;
    if (l.b_ != r.b_) return l.b_ < r.b_;
    if (l.c_ != r.c_) return l.c_ < r.c_;
    return l.d_ < r.d_;
}

std::string ArgMap::to_string() const {
    return "(" + format_rational(a_) + ", " + format_rational(b_) + ", " + format_rational(c_) + ", " +
           format_rational(d_) + ")";
}

PairPoint apply_map(const ArgMap& map, const PairPoint& point) { return map.apply(point); }

ArgMap compose_maps(std::span<const std::pair<ArgMap, unsigned>> maps) {
    ArgMap out = ArgMap::identity();
    for (const auto& [map, multiplicity] : maps)
        for (unsigned k = 0; k < multiplicity; ++k)
            out = out * map;
    return out;
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string format_rational(const Rational& value) {
    const auto num = boost::multiprecision::numerator(value);
    const auto den = boost::multiprecision::denominator(value);
    if (den == 1)
        return num.str();
    return num.str() + "/" + den.str();
}

// --- OperatorSpec / BoundSpec --------------------------------------------------

OperatorSpec::OperatorSpec(std::vector<OperatorTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty())
        throw ValidationError("operator needs at least one term");
    for (const auto& t : terms_) {
        if (!std::isfinite(t.coef) || t.coef == 0.0)
            throw ValidationError("operator coefficients must be finite and nonzero");
        abs_coef_sum_ += std::fabs(t.coef);
        diagonal_ = diagonal_ && t.map.is_diagonal();
    }
    std::stable_sort(terms_.begin(), terms_.end(), [](const OperatorTerm& l, const OperatorTerm& r) {
        if (l.map == r.map)
            return l.coef < r.coef;
        return l.map < r.map;
    });
}

BoundSpec::BoundSpec(std::vector<BoundTerm> terms) : terms_(std::move(terms)) {
    for (const auto& t : terms_) {
        if (!std::isfinite(t.coef) || t.coef < 0.0)
            throw ValidationError("bound coefficients must be finite and nonnegative");
        if (!std::isfinite(t.exp_first) || !std::isfinite(t.exp_second) || t.exp_first < 0.0 ||
            t.exp_second < 0.0)
            throw ValidationError("bound exponents must be finite and nonnegative");
    }
    std::stable_sort(terms_.begin(), terms_.end(), [](const BoundTerm& l, const BoundTerm& r) {
        if (l.exp_first != r.exp_first) return l.exp_first < r.exp_first;
        if (l.exp_second != r.exp_second) return l.exp_second < r.exp_second;
        return l.coef < r.coef;
    });
}

double BoundSpec::operator()(const PairPoint& point) const {
    return at_norms(point.first().norm(), point.second().norm());
}

double BoundSpec::at_norms(double nu, double nv) const {
    double sum = 0.0;
    for (const auto& t : terms_)
        sum += t.coef * std::pow(nu, t.exp_first) * std::pow(nv, t.exp_second);
    return sum;
}

BoundSpec BoundSpec::scaled(double factor) const {
    std::vector<BoundTerm> out(terms_);
    for (auto& t : out)
        t.coef *= factor;
    return BoundSpec(std::move(out));
}

// --- BilinearCore ------------------------------------------------------------

BilinearCore::BilinearCore(std::size_t dim, std::vector<std::vector<double>> matrices)
    : dim_(dim), matrices_(std::move(matrices)) {
    if (dim_ == 0 || matrices_.empty())
        throw ValidationError("bilinear core needs dimension >= 1 and codomain >= 1");
    for (const auto& m : matrices_) {
        if (m.size() != dim_ * dim_)
            throw ValidationError("bilinear core matrix must have d*d entries");
        for (double x : m)
            if (!std::isfinite(x))
                throw ValidationError("bilinear core has a non-finite entry");
    }
}

BilinearCore BilinearCore::identity(std::size_t dim, std::size_t codomain) {
    std::vector<double> eye(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
        eye[i * dim + i] = 1.0;
    return BilinearCore(dim, std::vector<std::vector<double>>(codomain, eye));
}

double BilinearCore::form(std::size_t j, std::span<const double> left, std::span<const double> right) const {
    const auto& m = matrices_[j];
    double sum = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < dim_; ++c)
            row += m[r * dim_ + c] * right[c];
        sum += left[r] * row;
    }
    return sum;
}

Value BilinearCore::evaluate(const PairPoint& point) const {
    Value out(codomain());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = form(j, point.first().coords(), point.second().coords());
    return out;
}

std::array<Value, 4> BilinearCore::forms(const PairPoint& point) const {
    const auto u = point.first().coords();
    const auto v = point.second().coords();
    std::array<Value, 4> out;
    for (auto& f : out)
        f.resize(codomain());
    for (std::size_t j = 0; j < codomain(); ++j) {
        out[0][j] = form(j, u, u);
        out[1][j] = form(j, u, v);
        out[2][j] = form(j, v, u);
        out[3][j] = form(j, v, v);
    }
    return out;
}

// --- PerturbationSpec ----------------------------------------------------------

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

PerturbationSpec::PerturbationSpec(BoundSpec envelope, double eta, std::uint64_t seed, std::size_t codomain,
                                   std::optional<Resonance> resonance)
    : envelope_(std::move(envelope)), eta_(eta), seed_(seed), resonance_(resonance) {
    if (!(eta_ >= 0.0 && std::isfinite(eta_)))
        throw ValidationError("perturbation amplitude eta must be finite and >= 0");
    if (codomain == 0)
        throw ValidationError("perturbation codomain must be >= 1");
    std::uint64_t h = mix64(seed_ ^ 0x6a09e667f3bcc909ULL);
    phase_ = 2.0 * std::numbers::pi * unit_interval(h);
    direction_.assign(codomain, 1.0);
    if (codomain > 1) {
        for (std::size_t j = 0; j < codomain; ++j) {
            h = mix64(h);
            direction_[j] = 2.0 * unit_interval(h) - 1.0;
        }
        const double n = norm(direction_);
        if (n == 0.0)
            direction_.assign(codomain, 1.0 / std::sqrt(static_cast<double>(codomain)));
        else
            for (double& x : direction_)
                x /= n;
    }
}

double PerturbationSpec::oscillate_hash(const PairPoint& point, std::size_t component) const {
    std::uint64_t h = mix64(seed_);
    for (std::uint64_t bits : point.key())
        h = mix64(h ^ bits);
    h = mix64(h + 0x9e3779b97f4a7c15ULL * (component + 1));
    double osc = 2.0 * unit_interval(h) - 1.0;
    if (codomain() > 1)
        osc /= std::sqrt(static_cast<double>(codomain()));
    return osc;
}

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

double PerturbationSpec::oscillate_resonant(const PairPoint& point) const {
    const Resonance& r = *resonance_;
    double s = 1.0;
    if (r.sign_first)
        s *= sign_of(point.first()[0]);
    if (r.sign_second)
        s *= sign_of(point.second()[0]);
    if (s == 0.0)
        return 0.0;
    const double nu = point.first().norm();
    const double nv = point.second().norm();
    double turns = 0.0;
    if (r.turns_first != 0.0) {
        if (nu == 0.0)
            return 0.0;
        turns += r.turns_first * std::log(nu);
    }
    if (r.turns_second != 0.0) {
        if (nv == 0.0)
            return 0.0;
        turns += r.turns_second * std::log(nv);
    }
    return s * std::cos(2.0 * std::numbers::pi * turns + phase_);
}

Value PerturbationSpec::evaluate(const PairPoint& point) const {
    Value out(codomain(), 0.0);
    const double amplitude = eta_ * envelope_(point);
    if (amplitude == 0.0)
        return out;
    if (resonance_) {
        const double osc = oscillate_resonant(point);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = amplitude * osc * direction_[j];
    } else {
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = amplitude * oscillate_hash(point, j);
    }
    return out;
}

// --- FunctionModel -----------------------------------------------------------

FunctionModel::FunctionModel(BilinearCore core, std::optional<PerturbationSpec> perturbation)
    : core_(std::move(core)), perturbation_(std::move(perturbation)) {
    if (perturbation_ && perturbation_->codomain() != core_.codomain())
        throw ValidationError("perturbation codomain differs from the core's");
}

void FunctionModel::check_dim(const PairPoint& point) const {
    if (point.dim() != dim())
        throw ValidationError("point dimension " + std::to_string(point.dim()) + " does not match model dimension " +
                              std::to_string(dim()));
}

Value FunctionModel::evaluate(const PairPoint& point) const {
    check_dim(point);
    Value out = core_.evaluate(point);
    if (perturbation_) {
        const Value g = perturbation_->evaluate(point);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] += g[j];
    }
    return out;
}

Value FunctionModel::perturbation_value(const PairPoint& point) const {
    check_dim(point);
    if (!perturbation_)
        return Value(codomain(), 0.0);
    return perturbation_->evaluate(point);
}

Value evaluate_model(const FunctionModel& model, const PairPoint& point) { return model.evaluate(point); }

} // namespace feqstab
