#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "folibochner/connection.hpp"

using namespace folib;
using fixtures::generic_fields;
using fixtures::max_jet_coeff;
using fixtures::parse_matrix;
using fixtures::vec_diff;

namespace {

// Surface of revolution metric diag(1, sin(x0)^2): the classic closed-form
// Christoffel symbols make a sharp oracle for the Koszul assembly.
ModelSpec revolution_surface() {
    ModelSpec s;
    s.name = "revolution";
    s.n = 1;
    s.m = 1;
    s.metric = parse_matrix({{"1", "0"}, {"0", "sin(x0)^2"}});
    s.vertical = parse_matrix({{"0", "1"}});
    s.sample_box = {{0.5, 2.5}, {-3, 3}};
    return s;
}

} // namespace

TEST_CASE("Koszul formula reproduces closed-form Christoffel symbols") {
    std::vector<double> pt = {1.1, 0.4};
    Connection cn = build_connection(revolution_surface(), pt);
    const double s = std::sin(pt[0]), c = std::cos(pt[0]);
    CHECK(cn.Gamma[0][1][1].value() == Catch::Approx(-s * c).margin(1e-12));
    CHECK(cn.Gamma[1][0][1].value() == Catch::Approx(c / s).margin(1e-12));
    CHECK(cn.Gamma[1][1][0].value() == Catch::Approx(c / s).margin(1e-12));
    CHECK(cn.Gamma[0][0][0].value() == Catch::Approx(0.0).margin(1e-12));
    CHECK(cn.Gamma[1][0][0].value() == Catch::Approx(0.0).margin(1e-12));
    CHECK(cn.Gamma[0][0][1].value() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("flat product has a trivial connection package") {
    Connection cn = build_connection(fixtures::flat3(), {0.3, -0.2, 0.8});
    const int d = 3;
    double worst = 0.0;
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                worst = std::max(worst, max_jet_coeff(cn.Gamma[c][a][b]));
                worst = std::max(worst, max_jet_coeff(cn.A[c][a][b]));
                worst = std::max(worst, max_jet_coeff(cn.T[c][a][b]));
                worst = std::max(worst, max_jet_coeff(cn.C[c][a][b]));
                worst = std::max(worst, max_jet_coeff(cn.J[c][a][b]));
            }
    CHECK(worst < 1e-13);
    CHECK(max_jet_coeff(cn.H) < 1e-13);
}

TEST_CASE("step-two nilpotent chart: frozen connection values") {
    Connection cn = build_connection(fixtures::nilpotent_metric(), {0.7, -1.1, 0.4});
    const Frames& F = cn.fr;
    const JetVector &X = F.X[0], &Y = F.X[1], &Z = F.Z[0];

    SECTION("the adapted derivative annihilates the whole adapted frame") {
        double worst = 0.0;
        for (const JetVector& U : F.all_fields())
            for (const JetVector& V : F.all_fields())
                worst = std::max(worst, max_jet_coeff(adapted_derivative(cn, U, V)));
        CHECK(worst < 1e-11);
    }
    SECTION("torsion of the generator pair is minus the bracket direction") {
        JetVector t = torsion_of(cn, X, Y);
        CHECK(max_jet_coeff(t[0]) < 1e-11);
        CHECK(max_jet_coeff(t[1]) < 1e-11);
        CHECK(max_jet_coeff(t[2] + Jet::constant(3, t[2].order(), 1.0)) < 1e-11);
        CHECK(max_jet_coeff(vec_diff(torsion_of(cn, X, Z), jet_vector(3, 3, 3))) < 1e-11);
        CHECK(max_jet_coeff(vec_diff(torsion_of(cn, Y, Z), jet_vector(3, 3, 3))) < 1e-11);
    }
    SECTION("compatibility tensor and mean curvature vanish") {
        double worst = max_jet_coeff(cn.H);
        for (int c = 0; c < 3; ++c)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) worst = std::max(worst, max_jet_coeff(cn.C[c][a][b]));
        CHECK(worst < 1e-11);
    }
    SECTION("torsion dual rotates the horizontal plane") {
        CHECK(max_jet_coeff(vec_diff(j_apply(cn, Z, X), {-Y[0], -Y[1], -Y[2]})) < 1e-11);
        CHECK(max_jet_coeff(vec_diff(j_apply(cn, Z, Y), X)) < 1e-11);
        CHECK(max_jet_coeff(j_apply(cn, X, Y)) < 1e-11);
    }
    SECTION("the adapted connection is flat here") {
        double worst = 0.0;
        for (int dd = 0; dd < 3; ++dd)
            for (int c = 0; c < 3; ++c)
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b)
                        worst = std::max(worst, max_jet_coeff(cn.Riem[dd][c][a][b]));
        CHECK(worst < 1e-11);
    }
}

TEST_CASE("connection axioms hold on generic fields") {
    for (const ModelSpec& spec : {fixtures::nilpotent_metric(), fixtures::twisted_flat()}) {
        Connection cn = build_connection(spec, sample_points(spec, 1, 7)[0]);
        AxiomResiduals res = connection_axiom_residuals(cn, generic_fields(cn.fr.vars));
        INFO(spec.name);
        CHECK(res.metricity < 1e-9);
        CHECK(res.splitting < 1e-9);
        CHECK(res.torsion_match < 1e-9);
        CHECK(res.torsion_cases < 1e-9);
        CHECK(res.levi_civita_relation < 1e-9);
        CHECK(res.c_symmetry < 1e-9);
        CHECK(res.j_antisymmetry < 1e-9);
    }
}

TEST_CASE("curvature tensor matches the nested-derivative route") {
    ModelSpec spec = fixtures::twisted_flat();
    Connection cn = build_connection(spec, {0.25, -0.4, 0.6, 0.1});
    auto fields = generic_fields(cn.fr.vars);
    const int d = 4;
    for (std::size_t iu = 0; iu < fields.size(); ++iu)
        for (std::size_t iv = iu + 1; iv < fields.size(); ++iv) {
            const JetVector &U = fields[iu], &V = fields[iv], &W = fields[(iv + 1) % fields.size()];
            // Contraction route: R^d_{cab} U^a V^b W^c.
            JetVector lhs = jet_vector(d, d, cn.fr.order - 2);
            for (int dd = 0; dd < d; ++dd)
                for (int c = 0; c < d; ++c)
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b)
                            lhs[dd] += cn.Riem[dd][c][a][b] * U[a] * V[b] * W[c];
            // Operator route.
            JetVector rhs = vec_diff(adapted_derivative(cn, U, adapted_derivative(cn, V, W)),
                                     adapted_derivative(cn, V, adapted_derivative(cn, U, W)));
            rhs = vec_diff(rhs, adapted_derivative(cn, lie_bracket(U, V), W));
            CHECK(max_jet_coeff(vec_diff(lhs, rhs)) < 1e-10);
        }
}

TEST_CASE("torsion derivative satisfies the Leibniz rule") {
    ModelSpec spec = fixtures::twisted_flat();
    Connection cn = build_connection(spec, {0.15, 0.3, -0.45, 0.2});
    auto fields = generic_fields(cn.fr.vars);
    const int d = 4;
    const JetVector &U = fields[0], &V = fields[1], &W = fields[2];

    JetVector lhs = jet_vector(d, d, cn.fr.order - 2);
    for (int dd = 0; dd < d; ++dd)
        for (int c = 0; c < d; ++c)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) lhs[c] += cn.dT[dd][c][a][b] * U[dd] * V[a] * W[b];

    JetVector rhs = adapted_derivative(cn, U, torsion_of(cn, V, W));
    rhs = vec_diff(rhs, torsion_of(cn, adapted_derivative(cn, U, V), W));
    rhs = vec_diff(rhs, torsion_of(cn, V, adapted_derivative(cn, U, W)));
    CHECK(max_jet_coeff(vec_diff(lhs, rhs)) < 1e-10);
}

TEST_CASE("mean curvature agrees with its torsion-trace expression") {
    for (const ModelSpec& spec :
         {fixtures::flat3(), fixtures::nilpotent_metric(), fixtures::twisted_flat()}) {
        Connection cn = build_connection(spec, sample_points(spec, 1, 11)[0]);
        JetVector trace = jet_vector(cn.fr.dim(), cn.fr.dim(), cn.fr.order - 1);
        for (const JetVector& Zl : cn.fr.Z) {
            JetVector jz = j_apply(cn, Zl, Zl);
            for (std::size_t c = 0; c < trace.size(); ++c) trace[c] += jz[c];
        }
        INFO(spec.name);
        CHECK(max_jet_coeff(vec_diff(cn.H, trace)) < 1e-10);
        // The mean curvature is horizontal by construction.
        CHECK(max_jet_coeff(mat_apply(cn.fr.PV, cn.H)) < 1e-10);
    }
}

TEST_CASE("twisted model has nonzero torsion on its vertical pair") {
    // The two vertical planes do not close under brackets here, so the
    // vertical/vertical torsion must pick up a horizontal component.
    Connection cn = build_connection(fixtures::twisted_flat(), {0.15, 0.3, -0.45, 0.2});
    JetVector t = torsion_of(cn, cn.fr.Z[0], cn.fr.Z[1]);
    CHECK(max_jet_coeff(mat_apply(cn.fr.PH, t)) > 1e-3);
    CHECK(max_jet_coeff(cn.H) > 1e-3);
}
