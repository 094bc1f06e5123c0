#pragma once

#include "feqstab/catalog.hpp"
#include "feqstab/domain.hpp"
#include "feqstab/engine.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testing {

using namespace feqstab;

inline Value uv(const PairPoint& p) { return {p.first()[0] * p.second()[0]}; }

inline double distance(const Value& a, const Value& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum);
}

inline double rel_diff(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
    return std::fabs(a - b) / scale;
}

// Straight recursion T^n f(p) = sum_i coef_i T^(n-1) f(M_i p), maps applied one at a time.
inline Value naive_power(const OperatorSpec& spec, const Evaluatable& f, const PairPoint& p, int n) {
    if (n == 0)
        return f(p);
    Value acc;
    for (const auto& t : spec.terms()) {
        const auto& e = t.map.entries();
        std::vector<double> flat = p.flat();
        const std::size_t d = p.dim();
        std::vector<double> out(flat.size());
        for (std::size_t k = 0; k < d; ++k) {
            out[k] = e[0] * flat[k] + e[1] * flat[d + k];
            out[d + k] = e[2] * flat[k] + e[3] * flat[d + k];
        }
        const Value v = naive_power(spec, f, PairPoint::from_flat(out), n - 1);
        if (acc.empty())
            acc.assign(v.size(), 0.0);
        for (std::size_t j = 0; j < v.size(); ++j)
            acc[j] += t.coef * v[j];
    }
    return acc;
}

// (Lambda^n mu)(p) by the same recursion with |coef_i|.
inline double naive_lambda(const OperatorSpec& spec, const BoundSpec& mu, const PairPoint& p, int n) {
    if (n == 0)
        return mu(p);
    double sum = 0.0;
    for (const auto& t : spec.terms())
        sum += std::fabs(t.coef) * naive_lambda(spec, mu, t.map.apply(p), n - 1);
    return sum;
}

inline std::vector<PairPoint> sample_points(std::size_t count, double box, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-box, box);
    std::vector<PairPoint> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(PairPoint::scalar(u(rng), u(rng)));
    return out;
}

} // namespace testing
