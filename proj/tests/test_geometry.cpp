#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "folibochner/geometry.hpp"

using namespace folib;
using fixtures::flat3;
using fixtures::max_jet_coeff;
using fixtures::nilpotent_frame;
using fixtures::nilpotent_metric;
using fixtures::parse_matrix;
using fixtures::twisted_flat;

namespace {

double frame_orthonormality_defect(const Frames& fr) {
    auto fields = fr.all_fields();
    double worst = 0.0;
    for (std::size_t i = 0; i < fields.size(); ++i)
        for (std::size_t j = 0; j < fields.size(); ++j) {
            Jet dot = metric_dot(fr.g, fields[i], fields[j]);
            if (i == j) dot -= 1.0;
            worst = std::max(worst, max_jet_coeff(dot));
        }
    return worst;
}

double projection_defects(const Frames& fr) {
    const int d = fr.dim();
    double worst = 0.0;
    // PH + PV = identity.
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            Jet s = fr.PH[a][b] + fr.PV[a][b];
            if (a == b) s -= 1.0;
            worst = std::max(worst, max_jet_coeff(s));
        }
    // PV fixes the vertical frame, PH annihilates it, and vice versa.
    for (const JetVector& z : fr.Z) {
        JetVector pv = mat_apply(fr.PV, z), ph = mat_apply(fr.PH, z);
        for (int a = 0; a < d; ++a) {
            worst = std::max(worst, max_jet_coeff(pv[a] - z[a]));
            worst = std::max(worst, max_jet_coeff(ph[a]));
        }
    }
    for (const JetVector& x : fr.X) {
        JetVector ph = mat_apply(fr.PH, x), pv = mat_apply(fr.PV, x);
        for (int a = 0; a < d; ++a) {
            worst = std::max(worst, max_jet_coeff(ph[a] - x[a]));
            worst = std::max(worst, max_jet_coeff(pv[a]));
        }
    }
    return worst;
}

double completeness_defect(const Frames& fr) {
    const int d = fr.dim();
    auto fields = fr.all_fields();
    double worst = 0.0;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            Jet s = -fr.ginv[a][b];
            for (const JetVector& e : fields) s += e[a] * e[b];
            worst = std::max(worst, max_jet_coeff(s));
        }
    return worst;
}

} // namespace

TEST_CASE("flat model produces coordinate frames") {
    ModelSpec s = flat3();
    Frames fr = build_frames(s, {0.2, -0.4, 0.9});
    REQUIRE(fr.X.size() == 2);
    REQUIRE(fr.Z.size() == 1);
    CHECK(fr.X[0][0].value() == Catch::Approx(1.0));
    CHECK(fr.X[1][1].value() == Catch::Approx(1.0));
    CHECK(fr.Z[0][2].value() == Catch::Approx(1.0));
    CHECK(fr.sqrt_det_g.value() == Catch::Approx(1.0));
    CHECK(frame_orthonormality_defect(fr) < 1e-12);
    CHECK(projection_defects(fr) < 1e-12);
    CHECK_FALSE(fr.condition_warning);
}

TEST_CASE("metric-only nilpotent chart recovers the adapted frame") {
    ModelSpec s = nilpotent_metric();
    std::vector<double> pt = {0.7, -1.1, 0.4};
    Frames fr = build_frames(s, pt);

    // Gram-Schmidt against the vertical direction should reproduce
    // X = d/dx0 - (x1/2) d/dx2 and Y = d/dx1 + (x0/2) d/dx2 exactly.
    CHECK(fr.X[0][0].value() == Catch::Approx(1.0).margin(1e-11));
    CHECK(fr.X[0][1].value() == Catch::Approx(0.0).margin(1e-11));
    CHECK(fr.X[0][2].value() == Catch::Approx(-pt[1] / 2).margin(1e-11));
    CHECK(fr.X[1][0].value() == Catch::Approx(0.0).margin(1e-11));
    CHECK(fr.X[1][1].value() == Catch::Approx(1.0).margin(1e-11));
    CHECK(fr.X[1][2].value() == Catch::Approx(pt[0] / 2).margin(1e-11));
    CHECK(fr.Z[0][2].value() == Catch::Approx(1.0).margin(1e-11));

    // The frame recovery holds as functions, not just at the point.
    CHECK(max_jet_coeff(fr.X[0][2] + fr.vars[1] * 0.5) < 1e-11);
    CHECK(max_jet_coeff(fr.X[1][2] - fr.vars[0] * 0.5) < 1e-11);

    CHECK(fr.sqrt_det_g.value() == Catch::Approx(1.0).margin(1e-11));
    CHECK(frame_orthonormality_defect(fr) < 1e-10);
    CHECK(projection_defects(fr) < 1e-10);
    CHECK(completeness_defect(fr) < 1e-10);
}

TEST_CASE("declared frame model induces the matching metric") {
    ModelSpec sm = nilpotent_metric(), sf = nilpotent_frame();
    std::vector<double> pt = {-0.6, 0.8, 1.3};
    Frames fm = build_frames(sm, pt), ff = build_frames(sf, pt);

    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            CHECK(max_jet_coeff(fm.g[a][b] - ff.g[a][b]) < 1e-12);

    // The declared fields come back unchanged.
    CHECK(max_jet_coeff(ff.X[0][2] + ff.vars[1] * 0.5) < 1e-12);
    CHECK(max_jet_coeff(ff.X[1][2] - ff.vars[0] * 0.5) < 1e-12);
    CHECK(frame_orthonormality_defect(ff) < 1e-11);
    CHECK(completeness_defect(ff) < 1e-11);
}

TEST_CASE("point-dependent vertical planes orthonormalize correctly") {
    ModelSpec s = twisted_flat();
    std::vector<double> pt = {0.3, -0.2, 0.5, 0.7};
    Frames fr = build_frames(s, pt);
    const double s2 = std::sqrt(1.0 + pt[2] * pt[2]);

    CHECK(fr.Z[0][2].value() == Catch::Approx(std::exp(-pt[0])));
    CHECK(fr.Z[1][0].value() == Catch::Approx(pt[2] / s2));
    CHECK(fr.Z[1][3].value() == Catch::Approx(1.0 / s2));
    CHECK(fr.X[0][0].value() == Catch::Approx(1.0 / s2));
    CHECK(fr.X[0][3].value() == Catch::Approx(-pt[2] / s2));
    CHECK(fr.X[1][1].value() == Catch::Approx(1.0));
    CHECK(fr.sqrt_det_g.value() == Catch::Approx(std::exp(pt[0])));

    CHECK(frame_orthonormality_defect(fr) < 1e-10);
    CHECK(projection_defects(fr) < 1e-10);
    CHECK(completeness_defect(fr) < 1e-10);
}

TEST_CASE("lie bracket and directional derivative behave") {
    ModelSpec s = nilpotent_metric();
    Frames fr = build_frames(s, {0.7, -1.1, 0.4});
    // [X, Y] = d/dx2 for the recovered adapted frame.
    JetVector br = lie_bracket(fr.X[0], fr.X[1]);
    CHECK(max_jet_coeff(br[0]) < 1e-11);
    CHECK(max_jet_coeff(br[1]) < 1e-11);
    CHECK(max_jet_coeff(br[2] - Jet::constant(3, br[2].order(), 1.0)) < 1e-11);
    CHECK(br[2].order() == fr.order - 1);

    // X(f) for f = x0^2 * x2.
    Jet f = Expr::parse("x0^2 * x2").eval_jet(fr.vars);
    Jet xf = apply_field(fr.X[0], f);
    // X(f) = 2 x0 x2 - (x1/2) x0^2.
    double expect = 2 * 0.7 * 0.4 - (-1.1 / 2) * 0.49;
    CHECK(xf.value() == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("geometry error taxonomy") {
    SECTION("non-positive metric") {
        ModelSpec s = flat3();
        s.metric[1][1] = Expr::parse("-1");
        CHECK_THROWS_AS(build_frames(s, {0, 0, 0}), MetricNotSPD);
    }
    SECTION("dependent vertical fields") {
        ModelSpec s = flat3();
        s.n = 1;
        s.m = 2;
        s.vertical = parse_matrix({{"0", "0", "1"}, {"0", "0", "2"}});
        CHECK_THROWS_AS(build_frames(s, {0, 0, 0}), DegenerateVerticalSpan);
    }
    SECTION("asymmetric metric") {
        ModelSpec s = flat3();
        s.metric[0][1] = Expr::parse("x2");
        CHECK_THROWS_AS(build_frames(s, {0, 0, 0.5}), ModelError);
    }
    SECTION("shape violations") {
        ModelSpec s = flat3();
        s.vertical.clear();
        CHECK_THROWS_AS(s.validate(), ModelError);

        ModelSpec s2 = flat3();
        s2.frame = s2.metric;
        CHECK_THROWS_AS(s2.validate(), ModelError);

        ModelSpec s3 = flat3();
        s3.sample_box.pop_back();
        CHECK_THROWS_AS(s3.validate(), ModelError);
    }
    SECTION("order too low") {
        CHECK_THROWS_AS(build_frames(flat3(), {0, 0, 0}, 2), OrderError);
    }
    SECTION("wrong point dimension") {
        CHECK_THROWS_AS(build_frames(flat3(), {0, 0}), ModelError);
    }
}

TEST_CASE("sample points are deterministic and inside the box") {
    ModelSpec s = twisted_flat();
    auto a = sample_points(s, 12, 99);
    auto b = sample_points(s, 12, 99);
    auto c = sample_points(s, 12, 100);
    REQUIRE(a.size() == 12);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& p : a)
        for (int i = 0; i < 4; ++i) {
            CHECK(p[i] >= s.sample_box[i].first);
            CHECK(p[i] <= s.sample_box[i].second);
        }
}
