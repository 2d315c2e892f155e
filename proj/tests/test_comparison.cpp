// Comparison-geometry evaluators: the radial comparison function, the
// diameter bound, spectral-gap bounds from curvature-dimension constants, and
// the flat-model radial check. Example values are computed by hand from the
// closed forms and frozen here as oracles.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "folibochner/comparison.hpp"

using namespace folib;

namespace {

const double kPi = std::acos(-1.0);
const double kInf = std::numeric_limits<double>::infinity();

} // namespace

TEST_CASE("radial comparison function reproduces pinned values") {
    // Zero curvature: the bound is the Euclidean value N / r.
    CHECK(comparison_bound(0.0, 2.0, 1.0) == Catch::Approx(2.0).margin(1e-12));
    CHECK(comparison_bound(0.0, 3.0, 0.5) == Catch::Approx(6.0).margin(1e-12));

    // Positive curvature: the cotangent vanishes halfway to the conjugate
    // radius.
    CHECK(comparison_bound(1.0, 1.0, kPi / 2.0) == Catch::Approx(0.0).margin(1e-12));

    // Negative curvature: the bound approaches sqrt(N |K|) from above as the
    // radius grows. At r = 10 the hyperbolic cotangent still carries a ~2e-6
    // correction; pin the exact value and the asymptote separately.
    const double x = std::sqrt(0.5) * 10.0;
    const double exact = std::sqrt(2.0) * std::cosh(x) / std::sinh(x);
    CHECK(comparison_bound(-1.0, 2.0, 10.0) == Catch::Approx(exact).margin(1e-12));
    CHECK(comparison_bound(-1.0, 2.0, 10.0) == Catch::Approx(std::sqrt(2.0)).margin(1e-4));
    CHECK(comparison_bound(-1.0, 2.0, 700.0) == Catch::Approx(std::sqrt(2.0)).margin(1e-15));
}

TEST_CASE("radial comparison function decreases in the radius") {
    // Lowering curvature raises the bound at any fixed radius.
    CHECK(comparison_bound(1.0, 2.0, 1.0) < comparison_bound(0.0, 2.0, 1.0));
    CHECK(comparison_bound(0.0, 2.0, 1.0) < comparison_bound(-1.0, 2.0, 1.0));

    for (double K : {-1.0, 0.0, 1.0}) {
        const double N = 3.0;
        // Stay inside the conjugate radius pi sqrt(3) ~ 5.44 when K = 1.
        double prev = kInf;
        for (double r = 0.25; r <= 5.3; r += 0.25) {
            const double b = comparison_bound(K, N, r);
            INFO("K=" << K << " r=" << r);
            CHECK(b < prev);
            prev = b;
        }
        // The negative-curvature bound stays above its large-radius asymptote.
        if (K < 0.0) CHECK(prev > std::sqrt(N * -K));
    }
}

TEST_CASE("radial comparison function is continuous through vanishing curvature") {
    for (double N : {1.0, 2.0, 5.0}) {
        for (double r : {0.1, 1.0, 5.0, 10.0}) {
            const double flat = N / r;
            INFO("N=" << N << " r=" << r);
            CHECK(std::abs(comparison_bound(1e-8, N, r) - flat) <= 1e-6);
            CHECK(std::abs(comparison_bound(-1e-8, N, r) - flat) <= 1e-6);
        }
    }
}

TEST_CASE("conjugate radius guard and argument validation") {
    // r = pi sqrt(N / K) is already out of range; just inside is fine and the
    // cotangent has gone negative there.
    CHECK_THROWS_AS(comparison_bound(1.0, 1.0, kPi), RadiusBeyondConjugate);
    CHECK_THROWS_AS(comparison_bound(4.0, 1.0, kPi / 2.0), RadiusBeyondConjugate);
    CHECK_THROWS_AS(comparison_bound(1.0, 1.0, 100.0), RadiusBeyondConjugate);
    CHECK(comparison_bound(1.0, 1.0, kPi - 0.01) < -99.0);

    CHECK_THROWS_AS(comparison_bound(0.0, 2.0, 0.0), ConfigError);
    CHECK_THROWS_AS(comparison_bound(0.0, 2.0, -1.0), ConfigError);
    CHECK_THROWS_AS(comparison_bound(0.0, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(comparison_bound(0.0, -2.0, 1.0), ConfigError);
}

TEST_CASE("diameter bound reproduces pinned values") {
    CHECK(diameter_bound(1.0, 1.0) == Catch::Approx(kPi).margin(1e-12));
    CHECK(diameter_bound(4.0, 1.0) == Catch::Approx(kPi / 2.0).margin(1e-12));

    // Two horizontal directions with unit vertical weight give effective
    // dimension 4 and diameter 2 pi at unit curvature.
    const double N = dimension_parameter(2, 1.0);
    CHECK(N == Catch::Approx(4.0).margin(1e-15));
    CHECK(diameter_bound(1.0, N) == Catch::Approx(2.0 * kPi).margin(1e-12));

    CHECK_THROWS_AS(diameter_bound(0.0, 2.0), NonpositiveK);
    CHECK_THROWS_AS(diameter_bound(-1.0, 2.0), NonpositiveK);
    CHECK_THROWS_AS(diameter_bound(1.0, 0.0), ConfigError);
}

TEST_CASE("effective dimension from the vertical weight") {
    CHECK(dimension_parameter(2, 1.0) == Catch::Approx(4.0).margin(1e-15));
    CHECK(dimension_parameter(2, 0.5) == Catch::Approx(6.0).margin(1e-15));
    CHECK(dimension_parameter(1, 1.0) == Catch::Approx(2.0).margin(1e-15));

    // The distinguished infinite weight collapses to the horizontal dimension.
    CHECK(dimension_parameter(1, kInf) == Catch::Approx(1.0).margin(1e-15));
    CHECK(dimension_parameter(3, kInf) == Catch::Approx(3.0).margin(1e-15));

    // The weight must be positive: at lambda = 0 the effective dimension
    // diverges, so the evaluator rejects it instead of returning infinity.
    CHECK_THROWS_AS(dimension_parameter(2, 0.0), ConfigError);
    CHECK_THROWS_AS(dimension_parameter(2, -1.0), ConfigError);
    CHECK_THROWS_AS(dimension_parameter(2, -kInf), ConfigError);
    CHECK_THROWS_AS(dimension_parameter(2, std::nan("")), ConfigError);
    CHECK_THROWS_AS(dimension_parameter(0, 1.0), ConfigError);
}

TEST_CASE("spectral-gap bounds from curvature-dimension constants") {
    // rho1 = rho2 = 1, kappa = rho3 = rho4 = 0, N = 2: the two-parameter
    // bound is 1 / ((1/2) * 1) = 2.
    CDParams clean;
    clean.rho1 = 1.0;
    clean.rho2 = 1.0;
    clean.N = 2.0;
    clean.K = 1.0;
    EigenvalueBounds eb = eigenvalue_bounds(clean);
    CHECK(eb.simple == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(eb.cd.has_value());
    CHECK(*eb.cd == Catch::Approx(2.0).margin(1e-12));
    CHECK(eb.deficit == Catch::Approx(-1.0).margin(1e-15));

    // The step-two group constants (rho1 = 0, kappa = 1) fail the product
    // hypothesis with zero margin: no bound, deficit exactly zero.
    CDParams heis;
    heis.rho1 = 0.0;
    heis.rho2 = 0.5;
    heis.kappa = 1.0;
    heis.N = 2.0;
    heis.K = -1.0;
    eb = eigenvalue_bounds(heis);
    CHECK_FALSE(eb.cd.has_value());
    CHECK(eb.deficit == Catch::Approx(0.0).margin(1e-15));
    CHECK(eb.simple == Catch::Approx(-1.0).margin(1e-15));

    // The step-three constants (rho2 = 0, rho3 = 1, kappa = 1) fail with a
    // positive deficit.
    CDParams engel;
    engel.rho3 = 1.0;
    engel.kappa = 1.0;
    engel.N = 2.0;
    eb = eigenvalue_bounds(engel);
    CHECK_FALSE(eb.cd.has_value());
    CHECK(eb.deficit == Catch::Approx(1.0).margin(1e-15));

    // The simple bound is a passthrough of the curvature constant.
    CDParams half;
    half.K = 0.5;
    half.N = 3.0;
    CHECK(eigenvalue_bounds(half).simple == Catch::Approx(0.5).margin(1e-15));

    // A mixed case exercising every constant at once:
    // obstruction = 0.5 (0.5 + sqrt(1)) = 0.75, margin = 2 - 0.75 = 1.25,
    // denominator = (3/4) * 1 + 0.5 = 1.25, bound = 1.
    CDParams mixed;
    mixed.rho1 = 2.0;
    mixed.rho2 = 1.0;
    mixed.rho3 = 0.5;
    mixed.rho4 = 1.0;
    mixed.kappa = 0.5;
    mixed.N = 4.0;
    eb = eigenvalue_bounds(mixed);
    REQUIRE(eb.cd.has_value());
    CHECK(*eb.cd == Catch::Approx(1.0).margin(1e-12));

    CDParams bad;
    bad.N = 0.0;
    CHECK_THROWS_AS(eigenvalue_bounds(bad), ConfigError);
    CDParams negcross;
    negcross.rho2 = 1.0;
    negcross.rho4 = -1.0;
    negcross.N = 2.0;
    CHECK_THROWS_AS(eigenvalue_bounds(negcross), ConfigError);
}

TEST_CASE("bundle-like constants reduce the spectral-gap bound to the clean form") {
    // With rho3 = rho4 = 0 the bound collapses to
    // rho1 rho2 / (((N-1)/N) rho2 + kappa).
    for (double rho1 : {0.5, 1.0, 2.0}) {
        for (double rho2 : {0.5, 1.0, 3.0}) {
            for (double kappa : {0.1, 1.0}) {
                for (double N : {2.0, 5.0}) {
                    CDParams p;
                    p.rho1 = rho1;
                    p.rho2 = rho2;
                    p.kappa = kappa;
                    p.N = N;
                    EigenvalueBounds eb = eigenvalue_bounds(p);
                    INFO("rho1=" << rho1 << " rho2=" << rho2 << " kappa=" << kappa << " N=" << N);
                    REQUIRE(eb.cd.has_value());
                    const double clean = rho1 * rho2 / (((N - 1.0) / N) * rho2 + kappa);
                    CHECK(*eb.cd == Catch::Approx(clean).margin(1e-12));
                }
            }
        }
    }
}

TEST_CASE("flat model radial bound is verified at sample points") {
    // Hand values on the 2+1 product: at (1,0,0) the horizontal Laplacian of
    // r is 2/1 - 1/1 = 1, one below the bound 2; at the purely vertical point
    // (0,0,1) it is exactly the bound.
    CHECK(flat_product_check(2, 1, {{1.0, 0.0, 0.0}}) == Catch::Approx(-1.0).margin(1e-10));
    CHECK(flat_product_check(2, 1, {{0.0, 0.0, 1.0}}) == Catch::Approx(0.0).margin(1e-10));

    // Random samples away from the origin: the violation never exceeds the
    // jet-arithmetic noise floor, and each Laplacian value matches the closed
    // form n/r - |x_H|^2 / r^3.
    std::mt19937_64 rng(0xC0FFEEu);
    std::uniform_real_distribution<double> box(-2.0, 2.0);
    std::vector<std::vector<double>> pts;
    while (pts.size() < 25) {
        std::vector<double> p = {box(rng), box(rng), box(rng), box(rng)};
        double norm2 = 0.0;
        for (double c : p) norm2 += c * c;
        if (norm2 < 0.25) continue;
        pts.push_back(p);
    }
    CHECK(flat_product_check(3, 1, pts) <= 1e-10);

    ModelSpec spec = flat_product(3, 1);
    Expr r2 = Expr::c(0.0);
    for (int a = 0; a < 4; ++a) r2 = r2 + Expr::var(a) * Expr::var(a);
    Expr radial = Expr::fun(Expr::Fn::Sqrt, r2);
    for (const auto& p : pts) {
        const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]);
        const double horiz2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        const double closed = 3.0 / r - horiz2 / (r * r * r);
        const double lap = horizontal_laplacian(spec, radial, p, 3).frame;
        INFO("point (" << p[0] << ", " << p[1] << ", " << p[2] << ", " << p[3] << ")");
        CHECK(lap == Catch::Approx(closed).margin(1e-10));
    }

    CHECK_THROWS_AS(flat_product_check(2, 1, {{0.0, 0.0, 0.0}}), SampleAtOrigin);
    CHECK_THROWS_AS(flat_product_check(2, 1, {}), EmptySampleSet);
    CHECK_THROWS_AS(flat_product_check(2, 1, {{1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(flat_product_check(0, 1, {{1.0}}), ConfigError);
    CHECK_THROWS_AS(flat_product_check(2, 0, {{1.0, 0.0}}), ConfigError);
}
