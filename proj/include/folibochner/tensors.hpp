// Derived curvature quantities of the adapted connection, evaluated on the
// orthonormal adapted frame at a point: horizontal Ricci, torsion divergence
// and torsion pairings, the effective-Ricci tensor controlling the
// full-gradient identity, and extraction of pointwise curvature-dimension
// constants by small symmetric eigenproblems.
//
// Frame index convention: 0..n-1 are the horizontal fields X_i, n..n+m-1 the
// vertical fields Z_l, in the order produced by build_frames.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "connection.hpp"
#include "errors.hpp"
#include "models.hpp"

namespace folib {

/// Frame-basis values of the curvature quantities entering the horizontal
/// Bochner identities. Bilinear entries are stored as matrices over the full
/// adapted frame unless noted otherwise.
struct TensorReport {
    std::vector<double> point;
    int n = 0, m = 0;

    Eigen::MatrixXd ric_h;          // Ric(E_a, E_b): horizontal Ricci, d x d
    Eigen::MatrixXd delta_tor;      // <E_a, div_H Tor(E_b)>, d x d
    Eigen::MatrixXd tor_pair_h;     // (Tor(E_a), Tor(E_b))_H, d x d
    Eigen::MatrixXd tau;            // tau(E_a, E_b), d x d
    Eigen::VectorXd iota;           // iota(E_a), length d
    Eigen::MatrixXd jj_h;           // (J_{Z_k}, J_{Z_l})_H, m x m
    Eigen::MatrixXd sym_grad_h;     // sym'd <grad H, .>, d x d
    Eigen::MatrixXd tor_mean;       // <Tor(H, E_a), E_b>, d x d
    Eigen::MatrixXd tor_v_pair_v;   // sum_i <Tor(Z_k,X_i)_V, Tor(Z_l,X_i)_V>, m x m
    Eigen::MatrixXd tor_v_pair_h;   // sum_i <Tor(Z_k,X_i)_H, Tor(Z_l,X_i)_H>, m x m
    Eigen::MatrixXd effective_ricci; // the combined tensor, d x d, non-symmetric in general
    Eigen::VectorXd mean_curvature; // <H, E_a>, length d

    int dim() const { return n + m; }
};

namespace detail {

inline Eigen::MatrixXd symm(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

inline double lambda_min(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symm(M));
    return es.eigenvalues().minCoeff();
}

inline double lambda_max(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symm(M));
    return es.eigenvalues().maxCoeff();
}

} // namespace detail

/// Evaluate every report entry by pointwise contraction of the stored
/// connection tensors against the orthonormal frame.
inline TensorReport tensor_report(const Connection& cn) {
    const Frames& fr = cn.fr;
    const int n = fr.n, m = fr.m, d = n + m;

    TensorReport rep;
    rep.point = fr.pt;
    rep.n = n;
    rep.m = m;

    // Pointwise values of the ingredients.
    Eigen::MatrixXd g(d, d), PH(d, d), PV(d, d);
    for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q) {
            g(p, q) = fr.g[p][q].value();
            PH(p, q) = fr.PH[p][q].value();
            PV(p, q) = fr.PV[p][q].value();
        }
    std::vector<Eigen::VectorXd> E(d, Eigen::VectorXd(d));
    for (int a = 0; a < d; ++a)
        for (int p = 0; p < d; ++p)
            E[a](p) = (a < n ? fr.X[a][p] : fr.Z[a - n][p]).value();

    std::vector<std::vector<std::vector<double>>> T(
        d, std::vector<std::vector<double>>(d, std::vector<double>(d)));
    for (int c = 0; c < d; ++c)
        for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q) T[c][p][q] = cn.T[c][p][q].value();

    auto dot = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) { return u.dot(g * v); };
    auto tor = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(d);
        for (int c = 0; c < d; ++c)
            for (int p = 0; p < d; ++p)
                for (int q = 0; q < d; ++q) r(c) += T[c][p][q] * u(p) * v(q);
        return r;
    };

    // Torsion on all frame pairs.
    std::vector<std::vector<Eigen::VectorXd>> torF(d, std::vector<Eigen::VectorXd>(d));
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) torF[a][b] = tor(E[a], E[b]);

    // Horizontal Ricci: Ric(E_a, E_b) = sum_i <Riem(E_a, X_i) X_i, E_b>.
    rep.ric_h = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double s = 0;
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd rv = Eigen::VectorXd::Zero(d);
                for (int e = 0; e < d; ++e)
                    for (int c = 0; c < d; ++c)
                        for (int p = 0; p < d; ++p)
                            for (int q = 0; q < d; ++q)
                                rv(e) += cn.Riem[e][c][p][q].value() * E[i](c) * E[a](p) * E[i](q);
                s += dot(rv, E[b]);
            }
            rep.ric_h(a, b) = s;
        }

    // Divergence of the torsion: div_H Tor(E_b)^c = sum_i X_i^s X_i^p E_b^q dT[s][c][p][q].
    rep.delta_tor = Eigen::MatrixXd::Zero(d, d);
    for (int b = 0; b < d; ++b) {
        Eigen::VectorXd dv = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < d; ++s)
                for (int c = 0; c < d; ++c)
                    for (int p = 0; p < d; ++p)
                        for (int q = 0; q < d; ++q)
                            dv(c) += cn.dT[s][c][p][q].value() * E[i](s) * E[i](p) * E[b](q);
        for (int a = 0; a < d; ++a) rep.delta_tor(a, b) = dot(E[a], dv);
    }

    // Torsion pairings traced over the horizontal frame.
    rep.tor_pair_h = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += dot(torF[a][i], torF[b][i]);
            rep.tor_pair_h(a, b) = s;
        }

    rep.tau = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += dot(tor(E[i], torF[i][a]), E[b]);
            rep.tau(a, b) = s;
        }

    rep.iota = Eigen::VectorXd::Zero(d);
    for (int a = 0; a < d; ++a) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += dot(torF[a][i], E[i]);
        rep.iota(a) = s;
    }

    // (J_{Z_k}, J_{Z_l})_H pairs the horizontal parts of J_{Z} X_i.
    rep.jj_h = Eigen::MatrixXd::Zero(m, m);
    {
        std::vector<std::vector<Eigen::VectorXd>> JF(m, std::vector<Eigen::VectorXd>(n));
        for (int k = 0; k < m; ++k)
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd jv = Eigen::VectorXd::Zero(d);
                for (int c = 0; c < d; ++c)
                    for (int p = 0; p < d; ++p)
                        for (int q = 0; q < d; ++q)
                            jv(c) += cn.J[c][p][q].value() * E[n + k](p) * E[i](q);
                JF[k][i] = PH * jv;
            }
        for (int k = 0; k < m; ++k)
            for (int l = 0; l < m; ++l) {
                double s = 0;
                for (int i = 0; i < n; ++i) s += dot(JF[k][i], JF[l][i]);
                rep.jj_h(k, l) = s;
            }
    }

    // Mean curvature terms.
    Eigen::VectorXd Hv(d);
    for (int p = 0; p < d; ++p) Hv(p) = cn.H[p].value();
    rep.mean_curvature = Eigen::VectorXd(d);
    for (int a = 0; a < d; ++a) rep.mean_curvature(a) = dot(Hv, E[a]);

    Eigen::MatrixXd nablaH(d, d); // (grad H)^c_a = d_a H^c + A^c_{ab} H^b
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a) {
            double s = cn.H[c].partial(a).value();
            for (int b = 0; b < d; ++b) s += cn.A[c][a][b].value() * Hv(b);
            nablaH(c, a) = s;
        }
    rep.sym_grad_h = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            Eigen::VectorXd da = nablaH * E[a], db = nablaH * E[b];
            rep.sym_grad_h(a, b) = 0.5 * (dot(da, E[b]) + dot(db, E[a]));
        }

    rep.tor_mean = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) rep.tor_mean(a, b) = dot(tor(Hv, E[a]), E[b]);

    // Vertical/horizontal parts of Tor(Z_k, X_i), paired over the trace.
    rep.tor_v_pair_v = Eigen::MatrixXd::Zero(m, m);
    rep.tor_v_pair_h = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            double sv = 0, sh = 0;
            for (int i = 0; i < n; ++i) {
                sv += dot(PV * torF[n + k][i], PV * torF[n + l][i]);
                sh += dot(PH * torF[n + k][i], PH * torF[n + l][i]);
            }
            rep.tor_v_pair_v(k, l) = sv;
            rep.tor_v_pair_h(k, l) = sh;
        }

    // Combined effective-Ricci tensor. Because the frame is adapted, the
    // horizontal/vertical part of the second argument is resolved by the
    // column index alone.
    rep.effective_ricci = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double s = -rep.delta_tor(a, b) + rep.sym_grad_h(a, b) + rep.tor_mean(a, b);
            if (b < n)
                s += -rep.tor_pair_h(a, b) - rep.tau(a, b) + rep.ric_h(a, b);
            else
                s += -2.0 * rep.tor_pair_h(a, b);
            rep.effective_ricci(a, b) = s;
        }

    return rep;
}

inline TensorReport tensor_report(const ModelSpec& spec, const std::vector<double>& pt,
                                  int order = 4) {
    return tensor_report(build_connection(spec, pt, order));
}

/// Independent assembly of the effective-Ricci tensor on a pair of fields,
/// using covariant calculus only: torsion is recomputed from the defining
/// formula of the connection, its divergence from the Leibniz rule, and the
/// curvature from nested derivatives. Shares no contraction code with
/// tensor_report.
inline double effective_ricci_on_fields(const Connection& cn, const JetVector& U,
                                        const JetVector& V) {
    const Frames& fr = cn.fr;
    const int n = fr.n;

    auto nab = [&](const JetVector& A, const JetVector& B) { return adapted_derivative(cn, A, B); };
    auto tor = [&](const JetVector& A, const JetVector& B) {
        return detail::vec_sub(detail::vec_sub(nab(A, B), nab(B, A)), lie_bracket(A, B));
    };
    auto dotg = [&](const JetVector& A, const JetVector& B) { return metric_dot(fr.g, A, B); };

    const JetVector Vh = mat_apply(fr.PH, V), Vv = mat_apply(fr.PV, V);

    Jet s = dotg(tor(cn.H, U), V) + 0.5 * (dotg(nab(U, cn.H), V) + dotg(nab(V, cn.H), U));
    for (int i = 0; i < n; ++i) {
        const JetVector& Xi = fr.X[i];
        // (nabla_{X_i} Tor)(X_i, V) by the Leibniz rule.
        JetVector dtor = detail::vec_sub(detail::vec_sub(nab(Xi, tor(Xi, V)), tor(nab(Xi, Xi), V)),
                                 tor(Xi, nab(Xi, V)));
        s -= dotg(U, dtor);
        s -= 2.0 * dotg(tor(U, Xi), tor(Vv, Xi));
        s -= dotg(tor(U, Xi), tor(Vh, Xi));
        s -= dotg(tor(Xi, tor(Xi, U)), Vh);
        // Curvature by nested derivatives.
        JetVector riem = detail::vec_sub(detail::vec_sub(nab(U, nab(Xi, Xi)), nab(Xi, nab(U, Xi))),
                                 nab(lie_bracket(U, Xi), Xi));
        s += dotg(riem, Vh);
    }
    return s.value();
}

/// Largest discrepancy between the stored effective-Ricci matrix and the
/// field-level reassembly over the full frame basis.
inline double effective_ricci_reassembly_residual(const Connection& cn, const TensorReport& rep) {
    const std::vector<JetVector> E = cn.fr.all_fields();
    const int d = cn.fr.dim();
    double worst = 0;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            worst = std::max(worst,
                             std::abs(rep.effective_ricci(a, b) - effective_ricci_on_fields(cn, E[a], E[b])));
    return worst;
}

/// Pointwise curvature-dimension constants. Extracted values bound the
/// quadratic forms appearing in the curvature-dimension inequality at the
/// sample points; user-supplied values are taken as given.
struct CDParams {
    double rho1 = 0, rho2 = 0, rho3 = 0, rho4 = 0, kappa = 0;
    double N = 0;
    double lambda = 0;
    double K = 0;
    std::string provenance = "user-supplied";

    // Per-sample extremal values, in sample order; the headline constants
    // are the global extrema of these.
    std::vector<double> rho1_per_sample, rho2_per_sample, rho3_per_sample, rho4_per_sample,
        kappa_per_sample;
};

namespace detail {

/// The vertical quadratic form bounded above by rho3: trace of the squared
/// vertical torsion parts plus the symmetrized divergence, full-torsion, and
/// mean-curvature couplings.
inline Eigen::MatrixXd rho3_form(const TensorReport& rep) {
    const int n = rep.n, m = rep.m;
    Eigen::MatrixXd dv = rep.delta_tor.block(n, n, m, m);
    Eigen::MatrixXd tm = rep.tor_mean.block(n, n, m, m);
    return rep.tor_v_pair_v + symm(dv) + rep.tor_pair_h.block(n, n, m, m) + symm(tm);
}

} // namespace detail

/// Extract candidate curvature-dimension constants from sample points by
/// extremal eigenvalues of the frame-basis quadratic forms.
inline CDParams cd_constants_extract(const ModelSpec& spec,
                                     const std::vector<std::vector<double>>& samples,
                                     int order = 4) {
    if (samples.empty()) throw EmptySampleSet("cd_constants_extract: no sample points");
    CDParams cd;
    cd.provenance = "extracted";
    for (const auto& pt : samples) {
        TensorReport rep = tensor_report(spec, pt, order);
        const int n = rep.n;
        cd.N = n;
        cd.rho1_per_sample.push_back(
            detail::lambda_min((rep.ric_h + rep.sym_grad_h).block(0, 0, n, n)));
        cd.kappa_per_sample.push_back(detail::lambda_max(rep.tor_pair_h.block(0, 0, n, n)));
        cd.rho2_per_sample.push_back(0.25 * detail::lambda_min(rep.jj_h));
        cd.rho3_per_sample.push_back(detail::lambda_max(detail::rho3_form(rep)));
        cd.rho4_per_sample.push_back(detail::lambda_max(rep.tor_v_pair_h));
    }
    cd.rho1 = *std::min_element(cd.rho1_per_sample.begin(), cd.rho1_per_sample.end());
    cd.kappa = std::max(0.0, *std::max_element(cd.kappa_per_sample.begin(), cd.kappa_per_sample.end()));
    cd.rho2 = std::max(0.0, *std::min_element(cd.rho2_per_sample.begin(), cd.rho2_per_sample.end()));
    cd.rho3 = *std::max_element(cd.rho3_per_sample.begin(), cd.rho3_per_sample.end());
    cd.rho4 = std::max(0.0, *std::max_element(cd.rho4_per_sample.begin(), cd.rho4_per_sample.end()));
    return cd;
}

/// Slack of each extracted constraint against a report's quadratic forms;
/// nonnegative (up to roundoff) when the constants genuinely bound the forms.
struct CDSlack {
    double rho1_slack = 0, kappa_slack = 0, rho2_slack = 0, rho3_slack = 0, rho4_slack = 0;

    double worst() const {
        return std::min({rho1_slack, kappa_slack, rho2_slack, rho3_slack, rho4_slack});
    }
};

inline CDSlack cd_converse_slacks(const TensorReport& rep, const CDParams& cd) {
    const int n = rep.n;
    CDSlack s;
    s.rho1_slack = detail::lambda_min((rep.ric_h + rep.sym_grad_h).block(0, 0, n, n)) - cd.rho1;
    s.kappa_slack = cd.kappa - detail::lambda_max(rep.tor_pair_h.block(0, 0, n, n));
    s.rho2_slack = 0.25 * detail::lambda_min(rep.jj_h) - cd.rho2;
    s.rho3_slack = cd.rho3 - detail::lambda_max(detail::rho3_form(rep));
    s.rho4_slack = cd.rho4 - detail::lambda_max(rep.tor_v_pair_h);
    return s;
}

/// Best constant K with  sym(effective_ricci) - lambda * iota (x) iota >= K
/// over the samples. Pass lambda = +infinity to drop the iota term, which is
/// only legitimate when iota vanishes identically.
inline double effective_ricci_lower_bound(const ModelSpec& spec,
                                          const std::vector<std::vector<double>>& samples,
                                          double lambda, int order = 4) {
    if (samples.empty()) throw EmptySampleSet("effective_ricci_lower_bound: no sample points");
    if (lambda < 0) throw ConfigError("effective_ricci_lower_bound: lambda must be >= 0");
    const bool infinite = std::isinf(lambda);
    double K = std::numeric_limits<double>::infinity();
    for (const auto& pt : samples) {
        TensorReport rep = tensor_report(spec, pt, order);
        if (infinite && rep.iota.cwiseAbs().maxCoeff() > 1e-8)
            throw InfiniteLambdaWithNonzeroIota(
                "effective_ricci_lower_bound: iota does not vanish at " + spec.name);
        Eigen::MatrixXd M = detail::symm(rep.effective_ricci);
        if (!infinite) M -= lambda * (rep.iota * rep.iota.transpose());
        K = std::min(K, detail::lambda_min(M));
    }
    return K;
}

/// Dual route for the iota functional: half the horizontal trace of the
/// metric's Lie derivative along the vertical part of U.
inline double iota_via_metric_variation(const Connection& cn, const JetVector& U) {
    const Frames& fr = cn.fr;
    const JetVector Uv = mat_apply(fr.PV, U);
    Jet s = Jet::constant(fr.dim(), fr.order, 0.0);
    for (int i = 0; i < fr.n; ++i)
        s += detail::lie_derivative_metric(fr.g, Uv, fr.X[i], fr.X[i]);
    return 0.5 * s.value();
}

} // namespace folib
