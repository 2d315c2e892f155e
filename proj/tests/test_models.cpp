#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "folibochner/models.hpp"

using namespace folib;
using fixtures::max_jet_coeff;
using fixtures::vec_diff;

namespace {

// Worst deviation of [X_i, X_j] from sum_k c_k X_k over all frame pairs.
double left_invariance_defect(const Frames& fr,
                              const std::vector<std::vector<std::vector<double>>>& c) {
    auto fields = fr.all_fields();
    const int d = fr.dim();
    double worst = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            JetVector br = lie_bracket(fields[i], fields[j]);
            JetVector expect = jet_vector(d, d, fr.order - 1);
            for (int k = 0; k < d; ++k)
                if (c[i][j][k] != 0.0)
                    for (int a = 0; a < d; ++a) expect[a] += c[i][j][k] * fields[k][a];
            worst = std::max(worst, max_jet_coeff(vec_diff(br, expect)));
        }
    return worst;
}

} // namespace

TEST_CASE("step-two frame matches its closed form") {
    ModelSpec s = heisenberg();
    REQUIRE(s.n == 2);
    REQUIRE(s.m == 1);
    std::vector<double> pt = {0.6, -0.8, 0.3};
    Frames fr = build_frames(s, pt);
    CHECK(max_jet_coeff(fr.X[0][2] + fr.vars[1] * 0.5) < 1e-13);
    CHECK(max_jet_coeff(fr.X[1][2] - fr.vars[0] * 0.5) < 1e-13);
    CHECK(fr.X[0][0].value() == Catch::Approx(1.0));
    CHECK(fr.Z[0][2].value() == Catch::Approx(1.0));

    // Same geometry as the hand-written metric fixture.
    Frames fm = build_frames(fixtures::nilpotent_metric(), pt);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(max_jet_coeff(fr.g[a][b] - fm.g[a][b]) < 1e-12);
}

TEST_CASE("higher step-two model pairs generators correctly") {
    ModelSpec s = heisenberg(2);
    REQUIRE(s.dim() == 5);
    REQUIRE(s.n == 4);
    std::vector<double> pt = {0.1, 0.2, 0.3, 0.4, 0.5};
    Frames fr = build_frames(s, pt);
    CHECK(fr.X[0][4].value() == Catch::Approx(-pt[2] / 2));
    CHECK(fr.X[1][4].value() == Catch::Approx(-pt[3] / 2));
    CHECK(fr.X[2][4].value() == Catch::Approx(pt[0] / 2));
    CHECK(fr.X[3][4].value() == Catch::Approx(pt[1] / 2));
    CHECK(left_invariance_defect(fr, s.group->c) < 1e-11);
}

TEST_CASE("step-three frame matches its closed form") {
    ModelSpec s = engel();
    std::vector<double> pt = {0.7, -0.4, 0.2, -0.9};
    Frames fr = build_frames(s, pt);
    const auto& v = fr.vars;
    // X0 = d0 - (x1/2) d2 - (x2/2 + x0 x1/12) d3
    CHECK(max_jet_coeff(fr.X[0][2] + v[1] * 0.5) < 1e-12);
    CHECK(max_jet_coeff(fr.X[0][3] + v[2] * 0.5 + v[0] * v[1] * (1.0 / 12.0)) < 1e-12);
    // X1 = d1 + (x0/2) d2 + (x0^2/12) d3
    CHECK(max_jet_coeff(fr.X[1][2] - v[0] * 0.5) < 1e-12);
    CHECK(max_jet_coeff(fr.X[1][3] - v[0] * v[0] * (1.0 / 12.0)) < 1e-12);
    // Z0 = d2 + (x0/2) d3, Z1 = d3
    CHECK(max_jet_coeff(fr.Z[0][3] - v[0] * 0.5) < 1e-12);
    CHECK(fr.Z[1][3].value() == Catch::Approx(1.0));
}

TEST_CASE("group frames satisfy left invariance") {
    for (ModelSpec s : {heisenberg(), heisenberg(2), engel(), filiform_step4()}) {
        Frames fr = build_frames(s, sample_points(s, 1, 31)[0]);
        INFO(s.name);
        CHECK(left_invariance_defect(fr, s.group->c) < 1e-10);
    }
}

TEST_CASE("compact group frame closes under brackets") {
    ModelSpec s = su2_round();
    Frames fr = build_frames(s, {0.25, 0.3, 0.4});
    // [e_i, e_j] = 2 eps_{ijk} e_k
    std::vector<std::vector<std::vector<double>>> c(
        3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
    c[0][1][2] = 2;
    c[1][0][2] = -2;
    c[1][2][0] = 2;
    c[2][1][0] = -2;
    c[2][0][1] = 2;
    c[0][2][1] = -2;
    CHECK(left_invariance_defect(fr, c) < 1e-9);

    // Near the identity the frame approaches the coordinate fields.
    Frames near = build_frames(s, {1e-4, -2e-4, 1.5e-4});
    for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a)
            CHECK(near.all_fields()[i][a].value() == Catch::Approx(i == a ? 1.0 : 0.0).margin(1e-3));
}

TEST_CASE("structure constant validation rejects bad input") {
    SECTION("antisymmetry") {
        CarnotStructure cs;
        cs.layer = {1, 1, 2};
        cs.c.assign(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
        cs.c[0][1][2] = 1.0;
        cs.c[1][0][2] = 1.0; // should be -1
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
    SECTION("grading") {
        CarnotStructure cs;
        cs.layer = {1, 1, 2};
        cs.c.assign(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
        cs.c[0][1][0] = 1.0; // lands in layer 1
        cs.c[1][0][0] = -1.0;
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
    SECTION("Jacobi") {
        CarnotStructure cs;
        cs.layer = {1, 1, 2, 3, 4};
        cs.c.assign(5, std::vector<std::vector<double>>(5, std::vector<double>(5, 0.0)));
        auto setc = [&](int i, int j, int k) {
            cs.c[i][j][k] = 1.0;
            cs.c[j][i][k] = -1.0;
        };
        setc(0, 1, 2);
        setc(0, 2, 3);
        setc(0, 3, 4);
        setc(1, 2, 3); // grading-legal but breaks Jacobi without [e1, e3] = e4
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
    SECTION("first layer must generate") {
        CarnotStructure cs;
        cs.layer = {1, 2};
        cs.c.assign(2, std::vector<std::vector<double>>(2, std::vector<double>(2, 0.0)));
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
    SECTION("step cap") {
        CarnotStructure cs;
        cs.layer = {1, 1, 2, 3, 4, 5};
        cs.c.assign(6, std::vector<std::vector<double>>(6, std::vector<double>(6, 0.0)));
        auto setc = [&](int i, int j, int k) {
            cs.c[i][j][k] = 1.0;
            cs.c[j][i][k] = -1.0;
        };
        for (int i = 1; i <= 4; ++i) setc(0, i, i + 1);
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
    SECTION("layer ordering") {
        CarnotStructure cs;
        cs.layer = {2, 1, 1};
        cs.c.assign(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
        CHECK_THROWS_AS(carnot_model("bad", cs), BadStructureConstants);
    }
}

TEST_CASE("vertically warped model: frozen curvature data") {
    ModelSpec s = warped_heisenberg_vertical();
    std::vector<double> pt = {0.4, -0.7, 0.2};
    Connection cn = build_connection(s, pt);
    const Frames& F = cn.fr;

    // Mean curvature equals minus the first horizontal field.
    CHECK(max_jet_coeff(vec_diff(cn.H, {-F.X[0][0], -F.X[0][1], -F.X[0][2]})) < 1e-10);

    // <C_X Z, Z> = 1 and Tor(X, Z) = Z.
    CHECK(metric_dot(F.g, c_apply(cn, F.X[0], F.Z[0]), F.Z[0]).value() == Catch::Approx(1.0).margin(1e-10));
    CHECK(max_jet_coeff(vec_diff(torsion_of(cn, F.X[0], F.Z[0]), F.Z[0])) < 1e-10);
    CHECK(max_jet_coeff(torsion_of(cn, F.X[1], F.Z[0]))  < 1e-10);
}

TEST_CASE("horizontally warped model rescales the horizontal frame") {
    ModelSpec s = warped_heisenberg_horizontal();
    std::vector<double> pt = {0.5, -0.3, 0.6};
    Frames fr = build_frames(s, pt);
    const double w = std::exp(-pt[2]);
    CHECK(fr.X[0][0].value() == Catch::Approx(w));
    CHECK(fr.X[0][2].value() == Catch::Approx(-w * pt[1] / 2));
    CHECK(fr.X[1][1].value() == Catch::Approx(w));
    CHECK(fr.X[1][2].value() == Catch::Approx(w * pt[0] / 2));
}

TEST_CASE("classification flags") {
    struct Row {
        ModelSpec spec;
        bool bundle_like, totally_geodesic, minimal, integrable;
        int step;
    };
    std::vector<Row> rows;
    rows.push_back({flat_product(), true, true, true, true, 0});
    rows.push_back({heisenberg(), true, true, true, true, 2});
    // Step >= 3 groups: the commutator leaves are minimal but not totally
    // geodesic (the second fundamental form pairs layer 2 with layer 3).
    rows.push_back({engel(), true, false, true, true, 3});
    rows.push_back({filiform_step4(), true, false, true, true, 4});
    rows.push_back({su2_round(), true, true, true, true, 2});
    rows.push_back({warped_heisenberg_vertical(), true, false, false, true, 2});
    rows.push_back({warped_heisenberg_horizontal(), false, true, true, true, 2});
    rows.push_back({twisted_flat(), true, false, false, false, 0});

    for (const Row& row : rows) {
        Classification cl = classify(row.spec);
        INFO(row.spec.name);
        CHECK(cl.bundle_like == row.bundle_like);
        CHECK(cl.totally_geodesic == row.totally_geodesic);
        CHECK(cl.minimal == row.minimal);
        CHECK(cl.vertically_integrable == row.integrable);
        CHECK(cl.step == row.step);
        CHECK(cl.bracket_generating == (row.step > 0));
    }
}

TEST_CASE("classification routes and flag implications") {
    // The metric-variation and torsion-projection characterizations of the
    // bundle-like and totally-geodesic properties must reach the same verdict
    // on every builtin model, and a totally geodesic foliation is minimal.
    const double tol = 1e-10;
    for (const std::string& name : builtin_names()) {
        ModelSpec spec = build_builtin(name);
        Classification cl = classify(spec);
        INFO(name);
        CHECK((cl.bundle_like_residual < tol) == (cl.bundle_like_torsion_residual < tol));
        CHECK((cl.totally_geodesic_residual < tol) ==
              (cl.totally_geodesic_torsion_residual < tol));
        if (cl.totally_geodesic) CHECK(cl.minimal);
    }
}

TEST_CASE("builtin registry") {
    CHECK(build_builtin("heisenberg", {{"k", 2}}).dim() == 5);
    CHECK(build_builtin("flat_product", {{"n", 3}, {"m", 2}}).dim() == 5);
    CHECK(build_builtin("engel").name == "engel");
    CHECK_THROWS_AS(build_builtin("nope"), ModelError);
    for (const std::string& name : builtin_names()) {
        ModelSpec s = build_builtin(name);
        s.validate();
        CHECK(!s.sample_box.empty());
    }
}
