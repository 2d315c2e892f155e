#pragma once

// Pointwise verification of the curvature identities satisfied by the
// horizontal Laplacian of a foliated chart, and of the curvature-dimension
// inequalities driven by the extracted constants.
//
// Every check evaluates both sides of an identity through jets at a single
// point, so residuals measure genuine algebraic cancellation rather than
// discretization error.  Tolerances are relative to a term-magnitude scale
// (the sum of the absolute values of all assembled terms) because the
// identities suffer heavy cancellation between ~10 terms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "connection.hpp"
#include "errors.hpp"
#include "expression.hpp"
#include "models.hpp"
#include "rng.hpp"
#include "tensors.hpp"

namespace folib {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// A scalar test function together with report bookkeeping.
struct TestFunction {
    Expr f;
    std::string label;
    int degree = 0; // polynomial degree hint; 0 for transcendental entries
};

/// One identity (or one-sided bound) evaluated at a point.
///
/// For identities, pass means |residual| <= tol * max(scale, 1).
/// For lower bounds (lower_bound == true), residual is the slack LHS - RHS
/// and pass means residual >= -tol * max(scale, 1).
struct IdentityResult {
    std::string identity;
    std::string model;
    std::string function;
    std::vector<double> point;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double scale = 1.0;
    double tol = 1e-8;
    bool lower_bound = false;
    bool pass = false;

    void finish(double tolerance) {
        tol = tolerance;
        residual = lhs - rhs;
        const double budget = tol * std::max(scale, 1.0);
        pass = lower_bound ? residual >= -budget : std::abs(residual) <= budget;
    }
};

/// Frame-formula and divergence-form values of the horizontal Laplacian.
struct LaplacianPair {
    double frame = 0.0;
    double divergence = 0.0;
};

/// The two iterated carre-du-champ forms.
struct Gamma2 {
    double h = 0.0;
    double v = 0.0;
};

/// Slack records for the three curvature-dimension inequalities.
struct CDCheckResult {
    IdentityResult gradient_bound;  // Gamma2 sum vs trace square plus curvature
    IdentityResult dimensional;     // lambda-weighted bound with constant K
    IdentityResult two_parameter;   // nu-weighted bound from extracted constants
};

// ---------------------------------------------------------------------------
// Evaluation core
// ---------------------------------------------------------------------------

namespace detail {

// All derived fields of one (connection, function) pair, built once.  Members
// are jets over the chart, so any scalar can still be differentiated as a
// field before taking its value.
struct BochnerEval {
    const Connection& cn;
    const Frames& F;
    int d, n, m;

    Jet fj;                     // the function as an order-4 jet field
    std::vector<Jet> u;         // u[i] = X_i f
    std::vector<Jet> w;         // w[l] = Z_l f
    JetVector gradH, gradV, grad;
    Jet e_h, e_v, e_full;       // |grad_H f|^2, |grad_V f|^2, |grad f|^2
    JetVector drift;            // sum (D_{X_i} X_i)_H + H
    Jet lap;                    // Delta_H f as a jet field
    Jet hf;                     // H f as a jet field

    std::vector<JetVector> DH;  // nabla_{X_i} grad_H f
    std::vector<JetVector> DV;  // nabla_{X_i} grad_V f
    std::vector<std::vector<Jet>> Hmat; // <nabla_{X_i} grad_H f, X_j>
    std::vector<std::vector<Jet>> S;    // symmetrized Hessian entries
    std::vector<JetVector> torHX;       // Tor(grad_H f, X_i)
    std::vector<JetVector> torVX;       // Tor(grad_V f, X_i)

    BochnerEval(const Connection& c, const Expr& f)
        : cn(c), F(c.fr), d(F.dim()), n(F.n), m(F.m),
          fj(f.eval_jet(F.vars)),
          gradH(jet_vector(d, d, F.order)),
          gradV(jet_vector(d, d, F.order)),
          grad(jet_vector(d, d, F.order)),
          e_h(Jet::constant(d, F.order, 0.0)),
          e_v(Jet::constant(d, F.order, 0.0)),
          e_full(Jet::constant(d, F.order, 0.0)),
          drift(jet_vector(d, d, F.order)),
          lap(Jet::constant(d, F.order, 0.0)),
          hf(Jet::constant(d, F.order, 0.0)) {
        u.reserve(n);
        w.reserve(m);
        for (int i = 0; i < n; ++i) u.push_back(apply_field(F.X[i], fj));
        for (int l = 0; l < m; ++l) w.push_back(apply_field(F.Z[l], fj));
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < d; ++a) gradH[a] += u[i] * F.X[i][a];
        for (int l = 0; l < m; ++l)
            for (int a = 0; a < d; ++a) gradV[a] += w[l] * F.Z[l][a];
        for (int a = 0; a < d; ++a) grad[a] = gradH[a] + gradV[a];
        for (int i = 0; i < n; ++i) e_h += u[i] * u[i];
        for (int l = 0; l < m; ++l) e_v += w[l] * w[l];
        e_full = e_h + e_v;

        for (int i = 0; i < n; ++i) {
            JetVector corr = mat_apply(F.PH, lc_derivative(cn, F.X[i], F.X[i]));
            for (int a = 0; a < d; ++a) drift[a] += corr[a];
        }
        for (int a = 0; a < d; ++a) drift[a] += cn.H[a];

        lap = hlap(fj);
        hf = apply_field(cn.H, fj);

        DH.reserve(n);
        DV.reserve(n);
        torHX.reserve(n);
        torVX.reserve(n);
        for (int i = 0; i < n; ++i) {
            DH.push_back(adapted_derivative(cn, F.X[i], gradH));
            DV.push_back(adapted_derivative(cn, F.X[i], gradV));
            torHX.push_back(torsion_of(cn, gradH, F.X[i]));
            torVX.push_back(torsion_of(cn, gradV, F.X[i]));
        }
        Hmat.assign(n, std::vector<Jet>());
        for (int i = 0; i < n; ++i) {
            Hmat[i].reserve(n);
            for (int j = 0; j < n; ++j) Hmat[i].push_back(metric_dot(F.g, DH[i], F.X[j]));
        }
        S.assign(n, std::vector<Jet>());
        for (int i = 0; i < n; ++i) {
            S[i].reserve(n);
            for (int j = 0; j < n; ++j) S[i].push_back(0.5 * (Hmat[i][j] + Hmat[j][i]));
        }
    }

    /// Horizontal Laplacian applied to an arbitrary scalar jet field.
    Jet hlap(const Jet& g) const {
        Jet s = Jet::constant(d, g.order(), 0.0);
        for (int i = 0; i < n; ++i) s += apply_field(F.X[i], apply_field(F.X[i], g));
        s -= apply_field(drift, g);
        return s;
    }

    /// nabla_{X_i} grad f (sum of the two split derivatives).
    JetVector dfull(int i) const {
        JetVector r = jet_vector(d, d, F.order);
        for (int a = 0; a < d; ++a) r[a] = DH[i][a] + DV[i][a];
        return r;
    }

    Jet dot(const JetVector& a, const JetVector& b) const { return metric_dot(F.g, a, b); }

    /// delta_H Tor(U) = sum_i (nabla_{X_i} Tor)(X_i, U), contracted from the
    /// stored covariant torsion derivative.
    JetVector delta_tor(const JetVector& U) const {
        JetVector r = jet_vector(d, d, F.order);
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < d; ++s)
                for (int p = 0; p < d; ++p) {
                    Jet pref = F.X[i][s] * F.X[i][p];
                    for (int c = 0; c < d; ++c)
                        for (int q = 0; q < d; ++q) r[c] += pref * cn.dT[s][c][p][q] * U[q];
                }
        return r;
    }

    /// Horizontal Ricci pairing Ric_H(U, V) = sum_i <Riem(U, X_i) X_i, V>.
    Jet ric_h(const JetVector& U, const JetVector& V) const {
        JetVector vec = jet_vector(d, d, F.order);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c)
                for (int q = 0; q < d; ++q) {
                    Jet pref = F.X[i][c] * F.X[i][q];
                    for (int e = 0; e < d; ++e)
                        for (int p = 0; p < d; ++p) vec[e] += pref * cn.Riem[e][c][p][q] * U[p];
                }
        return dot(vec, V);
    }

    /// Torsion pairing (Tor(U), Tor(V))_H: horizontal trace of the paired
    /// vertical torsion parts.  The torsion is treated as vertical-valued
    /// here; the horizontal component a non-bundle-like metric produces does
    /// not take part in the pairing.
    Jet tor_pair(const JetVector& U, const JetVector& V) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i)
            s += dot(mat_apply(F.PV, torsion_of(cn, U, F.X[i])),
                     mat_apply(F.PV, torsion_of(cn, V, F.X[i])));
        return s;
    }

    /// (J_U, J_V)_H with horizontally projected legs.
    Jet jj_h(const JetVector& U, const JetVector& V) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i)
            s += dot(mat_apply(F.PH, j_apply(cn, U, F.X[i])),
                     mat_apply(F.PH, j_apply(cn, V, F.X[i])));
        return s;
    }

    /// tau(U, V) = sum_i <Tor(X_i, Tor(X_i, U)), V>.
    Jet tau(const JetVector& U, const JetVector& V) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i)
            s += dot(torsion_of(cn, F.X[i], torsion_of(cn, F.X[i], U)), V);
        return s;
    }

    /// Horizontally projected counterpart of tor_pair: pairs the horizontal
    /// parts of the torsion values (nonzero only off bundle-like metrics).
    Jet tor_pair_horizontal(const JetVector& U, const JetVector& V) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i)
            s += dot(mat_apply(F.PH, torsion_of(cn, U, F.X[i])),
                     mat_apply(F.PH, torsion_of(cn, V, F.X[i])));
        return s;
    }

    /// Horizontal trace pairing the torsion dual against the horizontal
    /// torsion part: sum_i <(J_U X_i)_H, (Tor(V, X_i))_H>.
    Jet j_tor_pair_horizontal(const JetVector& U, const JetVector& V) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i)
            s += dot(mat_apply(F.PH, j_apply(cn, U, F.X[i])),
                     mat_apply(F.PH, torsion_of(cn, V, F.X[i])));
        return s;
    }

    /// Symmetrized derivative of the mean curvature field.
    Jet nsym_h(const JetVector& U, const JetVector& V) const {
        return 0.5 * (dot(adapted_derivative(cn, U, cn.H), V) +
                      dot(adapted_derivative(cn, V, cn.H), U));
    }

    /// Combined curvature form r(U, U): the exact first-order leftover of the
    /// completed-square regrouping of the two split identities.  The last
    /// three terms vanish on bundle-like metrics, where the torsion has no
    /// horizontal part.
    Jet combined_r(const JetVector& U) const {
        JetVector UH = mat_apply(F.PH, U), UV = mat_apply(F.PV, U);
        Jet s = -1.0 * dot(U, delta_tor(U));
        s -= 2.0 * tor_pair(U, UV);
        s -= tor_pair(U, UH);
        s -= tau(U, UH);
        s += ric_h(U, UH);
        s += nsym_h(U, U);
        s += dot(torsion_of(cn, cn.H, U), U);
        s += dot(UH, delta_tor(UH));
        s -= tor_pair_horizontal(UV, UV);
        s -= j_tor_pair_horizontal(UV, UV);
        return s;
    }

    /// iota(U) = sum_i <Tor(U, X_i), X_i>.
    Jet iota(const JetVector& U) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i) s += dot(torsion_of(cn, U, F.X[i]), F.X[i]);
        return s;
    }

    /// <grad_H f, grad_H phi> for a scalar jet field phi.
    Jet h_pair(const Jet& phi) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int i = 0; i < n; ++i) s += u[i] * apply_field(F.X[i], phi);
        return s;
    }

    /// <grad_V f, grad_V phi> for a scalar jet field phi.
    Jet v_pair(const Jet& phi) const {
        Jet s = Jet::constant(d, F.order, 0.0);
        for (int l = 0; l < m; ++l) s += w[l] * apply_field(F.Z[l], phi);
        return s;
    }
};

inline void accumulate(IdentityResult& r, double term, double sign, double& acc) {
    acc += sign * term;
    r.scale += std::abs(term);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Horizontal Laplacian by the frame formula together with the independent
/// divergence-form value (1/sqrt(det g)) sum_a d_a(sqrt(det g) (grad_H f)^a).
inline LaplacianPair horizontal_laplacian(const Connection& cn, const Expr& f) {
    detail::BochnerEval ev(cn, f);
    LaplacianPair out;
    out.frame = ev.lap.value();
    const int d = ev.d;
    Jet s = Jet::constant(d, cn.fr.order, 0.0);
    for (int a = 0; a < d; ++a) s += (cn.fr.sqrt_det_g * ev.gradH[a]).partial(a);
    out.divergence = (s / cn.fr.sqrt_det_g).value();
    return out;
}

inline LaplacianPair horizontal_laplacian(const ModelSpec& spec, const Expr& f,
                                          const std::vector<double>& pt, int order = 4) {
    return horizontal_laplacian(build_connection(spec, pt, order), f);
}

/// Iterated carre-du-champ forms, each built by re-applying the horizontal
/// Laplacian to the derived scalar fields.
inline Gamma2 gamma2(const Connection& cn, const Expr& f) {
    detail::BochnerEval ev(cn, f);
    Gamma2 g2;
    g2.h = 0.5 * ev.hlap(ev.e_h).value() - ev.h_pair(ev.lap).value();
    g2.v = 0.5 * ev.hlap(ev.e_v).value() - ev.v_pair(ev.lap).value();
    return g2;
}

inline Gamma2 gamma2(const ModelSpec& spec, const Expr& f, const std::vector<double>& pt,
                     int order = 4) {
    return gamma2(build_connection(spec, pt, order), f);
}

/// The three curvature identities for the horizontal Laplacian: the
/// horizontal-gradient identity, the vertical-gradient identity, and the
/// full-gradient identity in completed-square form.  Residual = LHS - RHS.
inline std::vector<IdentityResult> bochner_residuals(const Connection& cn,
                                                     const TestFunction& tf,
                                                     double tol = 1e-8) {
    detail::BochnerEval ev(cn, tf.f);
    const Frames& F = ev.F;
    const int n = ev.n, m = ev.m;

    auto base = [&](const char* name) {
        IdentityResult r;
        r.identity = name;
        r.point = F.pt;
        r.function = tf.label;
        r.scale = 0.0;
        return r;
    };

    std::vector<IdentityResult> out;

    // Horizontal identity.
    {
        IdentityResult r = base("horizontal");
        r.lhs = 0.5 * ev.hlap(ev.e_h).value();
        r.scale += std::abs(r.lhs);
        double rhs = 0.0;
        detail::accumulate(r, ev.h_pair(ev.lap).value(), 1.0, rhs);
        double mixed = 0.0;
        for (int i = 0; i < n; ++i) mixed += ev.dot(ev.DV[i], ev.torHX[i]).value();
        detail::accumulate(r, 2.0 * mixed, 1.0, rhs);
        double hess2 = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) hess2 += ev.S[i][j].value() * ev.S[i][j].value();
        detail::accumulate(r, hess2, 1.0, rhs);
        detail::accumulate(r, ev.dot(ev.gradV, ev.delta_tor(ev.gradH)).value(), -1.0, rhs);
        detail::accumulate(r, ev.ric_h(ev.gradH, ev.gradH).value(), 1.0, rhs);
        detail::accumulate(r, ev.tor_pair(ev.gradH, ev.gradV).value(), -1.0, rhs);
        detail::accumulate(r, 0.25 * ev.jj_h(ev.gradV, ev.gradV).value(), 1.0, rhs);
        detail::accumulate(r, ev.nsym_h(ev.gradH, ev.gradH).value(), 1.0, rhs);
        detail::accumulate(r, ev.dot(torsion_of(cn, cn.H, ev.gradH), ev.grad).value(), 1.0,
                           rhs);
        detail::accumulate(r, ev.tau(ev.gradH, ev.gradH).value(), -1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }

    // Vertical identity.
    {
        IdentityResult r = base("vertical");
        r.lhs = 0.5 * ev.hlap(ev.e_v).value();
        r.scale += std::abs(r.lhs);
        double rhs = 0.0;
        detail::accumulate(r, ev.v_pair(ev.lap).value(), 1.0, rhs);
        double mixed = 0.0;
        for (int i = 0; i < n; ++i) mixed += ev.dot(ev.dfull(i), ev.torVX[i]).value();
        detail::accumulate(r, 2.0 * mixed, 1.0, rhs);
        double hv2 = 0.0;
        for (int i = 0; i < n; ++i) hv2 += ev.dot(ev.DV[i], ev.DV[i]).value();
        detail::accumulate(r, hv2, 1.0, rhs);
        detail::accumulate(r, ev.dot(ev.grad, ev.delta_tor(ev.gradV)).value(), -1.0, rhs);
        detail::accumulate(r, ev.tor_pair(ev.gradV, ev.gradV).value(), -1.0, rhs);
        detail::accumulate(r, ev.ric_h(ev.gradV, ev.gradH).value(), 1.0, rhs);
        detail::accumulate(r, 2.0 * ev.nsym_h(ev.gradH, ev.gradV).value(), 1.0, rhs);
        detail::accumulate(r, ev.dot(torsion_of(cn, cn.H, ev.gradV), ev.grad).value(), 1.0,
                           rhs);
        detail::accumulate(r, ev.tau(ev.gradV, ev.gradH).value(), -1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }

    // Full-gradient identity, completed-square form.  The vertical pairing
    // term (J_{grad_V f}, J_{grad_V f})_H / 4 is part of the exact identity:
    // dropping it leaves a nonzero residual (see full_gradient_term_necessity).
    {
        IdentityResult r = base("full_gradient");
        r.lhs = 0.5 * ev.hlap(ev.e_full).value();
        r.scale += std::abs(r.lhs);
        double rhs = 0.0;
        detail::accumulate(r, ev.h_pair(ev.lap).value() + ev.v_pair(ev.lap).value(), 1.0,
                           rhs);
        double sq1 = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double t = ev.S[i][j].value() + ev.dot(ev.torVX[i], F.X[j]).value();
                sq1 += t * t;
            }
        detail::accumulate(r, sq1, 1.0, rhs);
        double sq2 = 0.0;
        for (int i = 0; i < n; ++i) {
            JetVector tv = mat_apply(F.PV, torsion_of(cn, F.X[i], ev.grad));
            JetVector diff = jet_vector(ev.d, ev.d, F.order);
            for (int a = 0; a < ev.d; ++a) diff[a] = ev.DV[i][a] - tv[a];
            sq2 += ev.dot(diff, diff).value();
        }
        detail::accumulate(r, sq2, 1.0, rhs);
        detail::accumulate(r, ev.combined_r(ev.grad).value(), 1.0, rhs);
        detail::accumulate(r, 0.25 * ev.jj_h(ev.gradV, ev.gradV).value(), 1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<IdentityResult> bochner_residuals(const ModelSpec& spec,
                                                     const TestFunction& tf,
                                                     const std::vector<double>& pt,
                                                     double tol = 1e-8, int order = 4) {
    Connection cn = build_connection(spec, pt, order);
    auto out = bochner_residuals(cn, tf, tol);
    for (auto& r : out) r.model = spec.name;
    return out;
}

/// The full-gradient identity with the vertical pairing term deliberately
/// dropped.  Its residual equals that term, demonstrating the term is
/// required; the result is informational and uses the identity pass rule.
inline IdentityResult full_gradient_term_necessity(const Connection& cn,
                                                   const TestFunction& tf,
                                                   double tol = 1e-8) {
    detail::BochnerEval ev(cn, tf.f);
    std::vector<IdentityResult> all = bochner_residuals(cn, tf, tol);
    IdentityResult r = all[2];
    r.identity = "full_gradient_without_vertical_pairing";
    const double jterm = 0.25 * ev.jj_h(ev.gradV, ev.gradV).value();
    r.rhs -= jterm;
    r.finish(tol);
    return r;
}

/// Structural lemma identities: the Hessian symmetrization split, the
/// trace/drift split of the horizontal Laplacian, the two mean-curvature
/// drift identities, and the vertical-trace expression for the mean
/// curvature field.
inline std::vector<IdentityResult> lemma_checks(const Connection& cn, const TestFunction& tf,
                                                double tol = 1e-8) {
    detail::BochnerEval ev(cn, tf.f);
    const Frames& F = ev.F;
    const int n = ev.n, m = ev.m, d = ev.d;

    std::vector<IdentityResult> out;
    auto base = [&](const char* name) {
        IdentityResult r;
        r.identity = name;
        r.point = F.pt;
        r.function = tf.label;
        r.scale = 0.0;
        return r;
    };

    {
        // |nabla_H nabla_H f|^2 = |Hess_sym|^2 + (J,J)/4.
        IdentityResult r = base("hessian_symmetrization");
        double lhs = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) lhs += ev.Hmat[i][j].value() * ev.Hmat[i][j].value();
        r.lhs = lhs;
        r.scale += std::abs(lhs);
        double hess2 = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) hess2 += ev.S[i][j].value() * ev.S[i][j].value();
        double rhs = 0.0;
        detail::accumulate(r, hess2, 1.0, rhs);
        detail::accumulate(r, 0.25 * ev.jj_h(ev.gradV, ev.gradV).value(), 1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    {
        // Delta_H f = (trace of the adapted Hessian) - H f.
        IdentityResult r = base("laplacian_trace_split");
        r.lhs = ev.lap.value();
        r.scale += std::abs(r.lhs);
        double ring = 0.0;
        for (int i = 0; i < n; ++i) ring += ev.Hmat[i][i].value();
        double rhs = 0.0;
        detail::accumulate(r, ring, 1.0, rhs);
        detail::accumulate(r, ev.hf.value(), -1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    {
        // (H |grad_H f|^2)/2 - <grad_H f, grad_H (H f)> =
        //   -nsym(grad_H, grad_H) - <Tor(H, grad_H f), grad f>.
        IdentityResult r = base("mean_curvature_horizontal_drift");
        r.lhs = 0.5 * apply_field(cn.H, ev.e_h).value() - ev.h_pair(ev.hf).value();
        r.scale += std::abs(0.5 * apply_field(cn.H, ev.e_h).value()) +
                   std::abs(ev.h_pair(ev.hf).value());
        double rhs = 0.0;
        detail::accumulate(r, ev.nsym_h(ev.gradH, ev.gradH).value(), -1.0, rhs);
        detail::accumulate(r, ev.dot(torsion_of(cn, cn.H, ev.gradH), ev.grad).value(), -1.0,
                           rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    {
        IdentityResult r = base("mean_curvature_vertical_drift");
        r.lhs = 0.5 * apply_field(cn.H, ev.e_v).value() - ev.v_pair(ev.hf).value();
        r.scale += std::abs(0.5 * apply_field(cn.H, ev.e_v).value()) +
                   std::abs(ev.v_pair(ev.hf).value());
        double rhs = 0.0;
        detail::accumulate(r, 2.0 * ev.nsym_h(ev.gradV, ev.gradH).value(), -1.0, rhs);
        detail::accumulate(r, ev.dot(torsion_of(cn, cn.H, ev.gradV), ev.grad).value(), -1.0,
                           rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    {
        // H = sum_l J_{Z_l} Z_l, componentwise at the point.
        IdentityResult r = base("mean_curvature_vertical_trace");
        JetVector sum = jet_vector(d, d, F.order);
        for (int l = 0; l < m; ++l) {
            JetVector jz = j_apply(cn, F.Z[l], F.Z[l]);
            for (int a = 0; a < d; ++a) sum[a] += jz[a];
        }
        double worst = 0.0, mag = 0.0;
        for (int a = 0; a < d; ++a) {
            worst = std::max(worst, std::abs(cn.H[a].value() - sum[a].value()));
            mag += std::abs(cn.H[a].value()) + std::abs(sum[a].value());
        }
        r.lhs = worst;
        r.rhs = 0.0;
        r.scale = mag;
        r.finish(tol);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<IdentityResult> lemma_checks(const ModelSpec& spec, const TestFunction& tf,
                                                const std::vector<double>& pt,
                                                double tol = 1e-8, int order = 4) {
    Connection cn = build_connection(spec, pt, order);
    auto out = lemma_checks(cn, tf, tol);
    for (auto& r : out) r.model = spec.name;
    return out;
}

/// Slacks of the three curvature-dimension inequalities at one point.
///
/// - gradient_bound: Gamma2^H + Gamma2^V >= (1/n)(Delta_H f + iota(grad_V f))^2
///   + r(grad f, grad f).  Exact on models with vanishing mean curvature;
///   computed (and reported) everywhere.
/// - dimensional: Gamma2^H + Gamma2^V >= lambda/(n(1+lambda)) (Delta_H f)^2
///   + K |grad f|^2, using params.K and params.lambda (lambda = +inf uses 1/n).
/// - two_parameter: Gamma2^H + nu Gamma2^V >= (1/N)(Delta_H f)^2
///   + (rho1 - kappa/nu)|grad_H f|^2 + (rho2 - rho3 nu - rho4 nu^2)|grad_V f|^2.
namespace detail {

// The point values every curvature-dimension slack is assembled from; one
// BochnerEval suffices for any number of weights nu.
struct CDNumbers {
    std::vector<double> point;
    std::string function;
    int n = 0;
    double g2h = 0.0, g2v = 0.0;
    double lap = 0.0, eh = 0.0, evv = 0.0;
    double iota_v = 0.0;  // iota(grad_V f)
    double r_full = 0.0;  // combined curvature form on the full gradient
};

inline CDNumbers cd_numbers(const Connection& cn, const TestFunction& tf) {
    BochnerEval ev(cn, tf.f);
    CDNumbers q;
    q.point = ev.F.pt;
    q.function = tf.label;
    q.n = ev.n;
    q.g2h = 0.5 * ev.hlap(ev.e_h).value() - ev.h_pair(ev.lap).value();
    q.g2v = 0.5 * ev.hlap(ev.e_v).value() - ev.v_pair(ev.lap).value();
    q.lap = ev.lap.value();
    q.eh = ev.e_h.value();
    q.evv = ev.e_v.value();
    q.iota_v = ev.iota(ev.gradV).value();
    q.r_full = ev.combined_r(ev.grad).value();
    return q;
}

inline CDCheckResult cd_slacks(const CDNumbers& q, const CDParams& params, double nu,
                               double tol) {
    const int n = q.n;
    const double g2h = q.g2h, g2v = q.g2v;
    const double lap = q.lap, eh = q.eh, evv = q.evv;

    CDCheckResult out;
    auto base = [&](const char* name) {
        IdentityResult r;
        r.identity = name;
        r.point = q.point;
        r.function = q.function;
        r.lower_bound = true;
        r.scale = 0.0;
        return r;
    };

    {
        IdentityResult r = base("gradient_bound");
        r.lhs = g2h + g2v;
        r.scale += std::abs(g2h) + std::abs(g2v);
        const double trace = lap + q.iota_v;
        double rhs = 0.0;
        detail::accumulate(r, trace * trace / n, 1.0, rhs);
        detail::accumulate(r, q.r_full, 1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.gradient_bound = std::move(r);
    }
    {
        IdentityResult r = base("dimensional");
        r.lhs = g2h + g2v;
        r.scale += std::abs(g2h) + std::abs(g2v);
        const bool inf_lambda = std::isinf(params.lambda);
        const double coeff = inf_lambda
                                 ? 1.0 / n
                                 : params.lambda / (n * (1.0 + params.lambda));
        double rhs = 0.0;
        detail::accumulate(r, coeff * lap * lap, 1.0, rhs);
        detail::accumulate(r, params.K * (eh + evv), 1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.dimensional = std::move(r);
    }
    {
        IdentityResult r = base("two_parameter");
        r.lhs = g2h + nu * g2v;
        r.scale += std::abs(g2h) + std::abs(nu * g2v);
        double rhs = 0.0;
        detail::accumulate(r, lap * lap / params.N, 1.0, rhs);
        detail::accumulate(r, (params.rho1 - params.kappa / nu) * eh, 1.0, rhs);
        detail::accumulate(r, (params.rho2 - params.rho3 * nu - params.rho4 * nu * nu) * evv,
                           1.0, rhs);
        r.rhs = rhs;
        r.finish(tol);
        out.two_parameter = std::move(r);
    }
    return out;
}

} // namespace detail

inline CDCheckResult cd_check(const Connection& cn, const TestFunction& tf,
                              const CDParams& params, double nu, double tol = 1e-8) {
    if (!(nu > 0.0)) throw ConfigError("cd_check requires nu > 0");
    if (!(params.N > 0.0)) throw ConfigError("cd_check requires a dimension parameter N > 0");
    return detail::cd_slacks(detail::cd_numbers(cn, tf), params, nu, tol);
}

/// Slacks for several weights nu from a single jet evaluation.
inline std::vector<CDCheckResult> cd_check_grid(const Connection& cn, const TestFunction& tf,
                                                const CDParams& params,
                                                const std::vector<double>& nus,
                                                double tol = 1e-8) {
    for (double nu : nus)
        if (!(nu > 0.0)) throw ConfigError("cd_check requires nu > 0");
    if (!(params.N > 0.0)) throw ConfigError("cd_check requires a dimension parameter N > 0");
    detail::CDNumbers q = detail::cd_numbers(cn, tf);
    std::vector<CDCheckResult> out;
    out.reserve(nus.size());
    for (double nu : nus) out.push_back(detail::cd_slacks(q, params, nu, tol));
    return out;
}

inline CDCheckResult cd_check(const ModelSpec& spec, const TestFunction& tf,
                              const std::vector<double>& pt, const CDParams& params,
                              double nu, double tol = 1e-8, int order = 4) {
    Connection cn = build_connection(spec, pt, order);
    CDCheckResult out = cd_check(cn, tf, params, nu, tol);
    out.gradient_bound.model = spec.name;
    out.dimensional.model = spec.name;
    out.two_parameter.model = spec.name;
    return out;
}

// ---------------------------------------------------------------------------
// Test-function corpus
// ---------------------------------------------------------------------------

/// Deterministic corpus: a curated list that activates vertical gradients,
/// followed by seeded random polynomials of total degree <= 4 whose
/// coefficients are uniform in [-1, 1].
inline std::vector<TestFunction> test_functions(int dim, int count, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("test_functions requires dim >= 1");
    std::vector<TestFunction> out;
    const int last = dim - 1;
    out.push_back({Expr::var(0), "x0", 1});
    out.push_back({Expr::var(last), "x" + std::to_string(last), 1});
    out.push_back({Expr::var(0) * Expr::var(0), "x0^2", 2});
    out.push_back({Expr::var(0) * Expr::var(last), "x0*x" + std::to_string(last), 2});
    if (dim >= 2)
        out.push_back({Expr::fun(Expr::Fn::Exp, Expr::var(0)) *
                           Expr::fun(Expr::Fn::Sin, Expr::var(1)),
                       "exp(x0)*sin(x1)", 0});

    // Enumerate the monomial exponents of total degree <= 4 in graded order.
    std::vector<std::vector<int>> expos;
    struct Rec {
        int dim;
        std::vector<std::vector<int>>& out;
        void walk(std::vector<int>& e, int pos, int left) {
            if (pos == dim - 1) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[pos] = k;
                walk(e, pos + 1, left - k);
            }
        }
    };
    for (int total = 1; total <= 4; ++total) {
        Rec rec{dim, expos};
        std::vector<int> e(dim, 0);
        rec.walk(e, 0, total);
    }

    for (int made = 0; made < count; ++made) {
        std::mt19937_64 rng(derive_seed(seed, "testfn", static_cast<std::uint64_t>(made)));
        std::uniform_real_distribution<double> coeff(-1.0, 1.0);
        Expr poly = Expr::c(0.0);
        for (const auto& e : expos) {
            Expr mono = Expr::c(coeff(rng));
            for (int v = 0; v < dim; ++v)
                for (int rep = 0; rep < e[v]; ++rep) mono = mono * Expr::var(v);
            poly = poly + mono;
        }
        out.push_back({poly, "poly" + std::to_string(made), 4});
    }
    return out;
}

} // namespace folib
