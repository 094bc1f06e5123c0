#pragma once

#include "feqstab/domain.hpp"
#include "feqstab/engine.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace feqstab {

/// A prebuilt operator/bound pair for one of the biadditive equations.
struct CatalogEntry {
    std::string name;
    OperatorSpec spec;
    BoundSpec bound;
    std::map<std::string, double> params;
    std::vector<std::string> notes; ///< hypothesis warnings and derivation notes
    double factor;                  ///< eigenfactor of (spec, bound)
    bool contractive;               ///< factor < 1

    /// mu* / (the bound's shape): coefficient of the final stability estimate.
    double series_constant;
    /// The corresponding published figure, when one is recorded.
    std::optional<double> paper_constant;
    bool discrepancy = false;
};

/// Closed-form contraction factor 3(3/5)^(2p) + 2(4/5)^(2p).
double thm31_factor(double p);

/// Closed-form contraction factor 4 / 2^r.
double thm32_factor(double r);

/// Four-point biadditive inequality with power bound |x|^p|y|^p|z|^p|w|^p,
/// reduced to the single-orbit operator
///   T f(x, y) = 2 f(2x/5, 2y) - f(-x/5, 3y) - 2 f(3x/5, y)
/// with mu(x, y) = (12/25)^p |x|^(2p) |y|^(2p).
CatalogEntry thm31(double p);

/// rho-inequality with power perturbation, reduced to
///   T f(x, z) = 2 f(x/2, z/2) - 2 f(x/2, -z/2)
/// with mu(x, z) = (2|x/2|^r + 2|z/2|^r) / (1 - |rho|).
CatalogEntry thm32(double r, double rho);

/// Builds a catalog entry by name ("thm31" uses params p, "thm32" uses r and rho).
CatalogEntry catalog_entry(const std::string& name, const std::map<std::string, double>& params);

struct Quadruple {
    VectorElement x, y, z, w;
};

/// Residual of the substitution (x, y, z, w) = (2X/5, 3X/5, 2Y, Y): the
/// four-point left side minus the single-orbit left side. Zero for every f.
double verify_specialization(const Evaluatable& f, const VectorElement& X, const VectorElement& Y);

enum class Slot { first, second };

/// |f(x+y, w) - f(x, w) - f(y, w)| (first) or |f(x, y+w) - f(x, y) - f(x, w)| (second).
double biadditivity_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y,
                             const VectorElement& w, Slot slot);

/// |f(x+y, z-w) + f(x-y, z+w) - 2 f(x, z) + 2 f(y, w)|.
double fe_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y, const VectorElement& z,
                   const VectorElement& w);

inline double fe_residual(const Evaluatable& f, const Quadruple& q) { return fe_residual(f, q.x, q.y, q.z, q.w); }

struct RhoSides {
    double lhs;
    double rhs;
};

/// Both sides of the rho-inequality:
///   lhs = |f(x+y, z-w) + a f((x-y)/a, z+w) - 2 f(x, z) + 2 f(y, w)|
///   rhs = |rho| |f(x+y, z-w) + f(x-y, z+w) - 2 f(x, z) + 2 f(y, w)|
RhoSides rho_inequality_residual(const Evaluatable& f, double a, double rho, const VectorElement& x,
                                 const VectorElement& y, const VectorElement& z, const VectorElement& w);

/// |f(x, y) - f(y, x)|; optional audit of the symmetry hypothesis.
double symmetry_residual(const Evaluatable& f, const VectorElement& x, const VectorElement& y);

struct CheckReport {
    std::string name;
    Verdict verdict = Verdict::skipped;
    std::size_t samples = 0;
    double worst = 0.0; ///< worst residual, ratio or slack, per check
    std::optional<std::vector<double>> witness;
    std::string detail;

    friend bool operator==(const CheckReport&, const CheckReport&) = default;
};

/// FE residual <= 2(|x|^r + |z|^r) + |y|^r + |w|^r at every quadruple; worst = min slack.
CheckReport fe312_bound_check(const Evaluatable& f, double r, std::span<const Quadruple> quadruples);

/// Same check for a model: the bilinear core contributes exactly zero, only the perturbation is evaluated.
CheckReport fe312_bound_check(const FunctionModel& model, double r, std::span<const Quadruple> quadruples);

std::vector<double> flatten(const Quadruple& q);

} // namespace feqstab
