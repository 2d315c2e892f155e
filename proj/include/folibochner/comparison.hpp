#pragma once

// Comparison-geometry evaluators built on top of the curvature-dimension
// machinery: the radial Laplacian comparison function, the diameter bound,
// spectral-gap lower bounds derived from curvature-dimension constants, and a
// direct numerical verification of the radial bound on the flat product model,
// where the distance function is available in closed form.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "folibochner/bochner.hpp"
#include "folibochner/errors.hpp"
#include "folibochner/expression.hpp"
#include "folibochner/models.hpp"
#include "folibochner/tensors.hpp"

namespace folib {

/// Effective dimension N = n (1 + lambda) / lambda attached to a horizontal
/// dimension n and a vertical weight lambda.  The distinguished weight
/// lambda = +infinity gives the pure horizontal dimension N = n.  Finite
/// weights must be strictly positive: at lambda = 0 the effective dimension
/// diverges and no finite comparison statement remains.
inline double dimension_parameter(int n, double lambda) {
    if (n <= 0) throw ConfigError("dimension_parameter: horizontal dimension must be positive");
    if (std::isinf(lambda) && lambda > 0.0) return static_cast<double>(n);
    if (!(lambda > 0.0) || std::isnan(lambda))
        throw ConfigError("dimension_parameter: weight must be positive or +infinity");
    return static_cast<double>(n) * (1.0 + lambda) / lambda;
}

/// Value of the radial comparison function at radius r: the upper bound for
/// the horizontal Laplacian of the distance from a fixed point, under the
/// curvature lower bound K with effective dimension N.
///
///   K > 0 : sqrt(N K)  cot( sqrt(K / N) r ),   defined for r < pi sqrt(N / K)
///   K = 0 : N / r
///   K < 0 : sqrt(N |K|) coth( sqrt(|K| / N) r )
inline double comparison_bound(double K, double N, double r) {
    if (!(N > 0.0)) throw ConfigError("comparison_bound: effective dimension must be positive");
    if (!(r > 0.0)) throw ConfigError("comparison_bound: radius must be positive");
    if (K > 0.0) {
        const double conjugate = std::acos(-1.0) * std::sqrt(N / K);
        if (r >= conjugate)
            throw RadiusBeyondConjugate("comparison_bound: radius " + std::to_string(r) +
                                        " is at or beyond the conjugate radius " +
                                        std::to_string(conjugate));
        const double x = std::sqrt(K / N) * r;
        return std::sqrt(N * K) * std::cos(x) / std::sin(x);
    }
    if (K == 0.0) return N / r;
    // coth through tanh stays finite for arbitrarily large arguments.
    return std::sqrt(N * -K) / std::tanh(std::sqrt(-K / N) * r);
}

/// Largest radius the positive-curvature comparison function is defined for:
/// pi sqrt(N / K).  Under the curvature lower bound K > 0 no point is farther
/// than this from any other.
inline double diameter_bound(double K, double N) {
    if (!(N > 0.0)) throw ConfigError("diameter_bound: effective dimension must be positive");
    if (!(K > 0.0)) throw NonpositiveK("diameter_bound: requires a positive curvature constant");
    return std::acos(-1.0) * std::sqrt(N / K);
}

/// Spectral-gap lower bounds computed from curvature-dimension constants.
struct EigenvalueBounds {
    /// Bound from the plain curvature constant: lambda_1 >= K.
    double simple = 0.0;

    /// Bound from the two-parameter criterion,
    ///   (rho1 rho2 - kappa (rho3 + sqrt(rho2 rho4))) / (((N-1)/N) rho2 + kappa),
    /// present only when the product hypothesis
    ///   rho1 rho2 > kappa (rho3 + sqrt(rho2 rho4))
    /// holds with a positive denominator.
    std::optional<double> cd;

    /// kappa (rho3 + sqrt(rho2 rho4)) - rho1 rho2.  The product hypothesis
    /// holds exactly when this is negative; a nonnegative value is the amount
    /// by which it fails.
    double deficit = 0.0;
};

inline EigenvalueBounds eigenvalue_bounds(const CDParams& params) {
    if (!(params.N > 0.0))
        throw ConfigError("eigenvalue_bounds: effective dimension must be positive");
    const double cross = params.rho2 * params.rho4;
    if (cross < 0.0)
        throw ConfigError("eigenvalue_bounds: rho2 * rho4 must be nonnegative");

    EigenvalueBounds out;
    out.simple = params.K;

    const double obstruction = params.kappa * (params.rho3 + std::sqrt(cross));
    out.deficit = obstruction - params.rho1 * params.rho2;

    const double denom = ((params.N - 1.0) / params.N) * params.rho2 + params.kappa;
    if (out.deficit < 0.0 && denom > 0.0) out.cd = -out.deficit / denom;
    return out;
}

/// Direct check of the radial comparison bound on the flat product model,
/// where the distance from the origin is r(x) = |x| and the bound reads
///
///   Laplacian_H r = n / r - |x_H|^2 / r^3  <=  n / r.
///
/// Evaluates the horizontal Laplacian of r through the jet pipeline at each
/// sample and returns the largest value of (Laplacian_H r - n / r), which
/// should never be positive.  Samples must stay away from the origin, where r
/// is not differentiable.
inline double flat_product_check(int n, int m, const std::vector<std::vector<double>>& samples) {
    if (n < 1 || m < 1) throw ConfigError("flat_product_check: need n >= 1 and m >= 1");
    if (samples.empty()) throw EmptySampleSet("flat_product_check: no sample points given");
    const ModelSpec spec = flat_product(n, m);
    const int d = spec.dim();

    Expr r2 = Expr::c(0.0);
    for (int a = 0; a < d; ++a) r2 = r2 + Expr::var(a) * Expr::var(a);
    const Expr radial = Expr::fun(Expr::Fn::Sqrt, r2);

    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& pt : samples) {
        if (static_cast<int>(pt.size()) != d)
            throw ConfigError("flat_product_check: sample has wrong dimension");
        double norm2 = 0.0;
        for (double c : pt) norm2 += c * c;
        if (norm2 <= 1e-24)
            throw SampleAtOrigin("flat_product_check: the distance function is singular at the origin");
        const double lap = horizontal_laplacian(spec, radial, pt, 3).frame;
        const double violation = lap - static_cast<double>(n) / std::sqrt(norm2);
        if (violation > worst) worst = violation;
    }
    return worst;
}

} // namespace folib
