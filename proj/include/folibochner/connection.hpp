#pragma once

// The adapted connection of a foliated Riemannian chart, together with its
// torsion, curvature and the auxiliary tensors the identity checks consume.
//
// Conventions (all chart-index tensors of jets):
//   Gamma[k][a][b] : Levi-Civita coefficients, D_{e_a} e_b = Gamma^k_{ab} e_k
//   A[c][a][b]     : adapted connection, nabla_{e_a} e_b = A^c_{ab} e_c
//   T[c][a][b]     : torsion of nabla
//   C[c][a][b]     : splitting-compatibility tensor (C_{e_a} e_b)^c
//   J[c][a][b]     : torsion dual, <J_{e_a} e_b, w> = <e_a, Tor(e_b, w)>
//   Riem[d][c][a][b]: curvature, (R(e_a, e_b) e_c)^d
//   dT[d][c][a][b] : covariant torsion derivative (nabla_{e_d} T)^c_{ab}
//
// The adapted connection is assembled from the standard four-case rule: on
// horizontal pairs it is the projected Levi-Civita derivative, on vertical
// pairs likewise; a vertical direction acting on a horizontal argument (and
// the mirrored case) differentiates along the foliation via the Lie bracket
// plus the compatibility tensor C, which restores metricity.

#include <vector>

#include "geometry.hpp"
#include "linalg.hpp"

namespace folib {

using Tensor3 = std::vector<JetMatrix>;
using Tensor4 = std::vector<Tensor3>;

inline Tensor3 jet_tensor3(int d, int dim, int order) {
    return Tensor3(d, jet_matrix(d, d, dim, order));
}

inline Tensor4 jet_tensor4(int d, int dim, int order) {
    return Tensor4(d, jet_tensor3(d, dim, order));
}

struct Connection {
    Frames fr;
    Tensor3 Gamma;
    Tensor3 A;
    Tensor3 T;
    Tensor3 C;
    Tensor3 J;
    JetVector H;   // mean curvature of the leaves, a horizontal field
    Tensor4 Riem;
    Tensor4 dT;
};

/// Levi-Civita derivative of a field: (D_U V)^c = U(V^c) + Gamma^c_{ab} U^a V^b.
inline JetVector lc_derivative(const Connection& cn, const JetVector& U, const JetVector& V) {
    const int d = cn.fr.dim();
    JetVector r;
    r.reserve(d);
    for (int c = 0; c < d; ++c) {
        Jet s = apply_field(U, V[c]);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) s += cn.Gamma[c][a][b] * U[a] * V[b];
        r.push_back(s);
    }
    return r;
}

/// Adapted-connection derivative of a field via the A coefficients.
inline JetVector adapted_derivative(const Connection& cn, const JetVector& U, const JetVector& V) {
    const int d = cn.fr.dim();
    JetVector r;
    r.reserve(d);
    for (int c = 0; c < d; ++c) {
        Jet s = apply_field(U, V[c]);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) s += cn.A[c][a][b] * U[a] * V[b];
        r.push_back(s);
    }
    return r;
}

/// Pointwise contraction of a (1,2) tensor with two vectors.
inline JetVector contract12(const Tensor3& t, const JetVector& U, const JetVector& V) {
    const int d = static_cast<int>(t.size());
    JetVector r = jet_vector(d, U[0].dim(), U[0].order());
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) r[c] += t[c][a][b] * U[a] * V[b];
    return r;
}

inline JetVector torsion_of(const Connection& cn, const JetVector& U, const JetVector& V) {
    return contract12(cn.T, U, V);
}

inline JetVector c_apply(const Connection& cn, const JetVector& U, const JetVector& V) {
    return contract12(cn.C, U, V);
}

inline JetVector j_apply(const Connection& cn, const JetVector& U, const JetVector& V) {
    return contract12(cn.J, U, V);
}

namespace detail {

// Column a of a projection matrix, viewed as a vector field.
inline JetVector projection_column(const JetMatrix& P, int a) {
    JetVector v;
    v.reserve(P.size());
    for (const auto& row : P) v.push_back(row[a]);
    return v;
}

// Lie derivative of the metric along W, evaluated on fields A and B:
// (L_W g)(A, B) = W<A, B> - <[W, A], B> - <A, [W, B]>.
inline Jet lie_derivative_metric(const JetMatrix& g, const JetVector& W, const JetVector& A,
                                 const JetVector& B) {
    return apply_field(W, metric_dot(g, A, B)) - metric_dot(g, lie_bracket(W, A), B) -
           metric_dot(g, A, lie_bracket(W, B));
}

} // namespace detail

/// Assemble the full connection package at one point.
inline Connection build_connection(Frames fr) {
    const int d = fr.dim(), dim = d, order = fr.order;
    Connection cn;
    cn.fr = std::move(fr);
    const Frames& F = cn.fr;

    // Levi-Civita coefficients from the Koszul formula.
    cn.Gamma = jet_tensor3(d, dim, order - 1);
    {
        // dg[c][a][b] = d g_bc / d x_a
        std::vector<Tensor3::value_type> dg(d, jet_matrix(d, d, dim, order - 1));
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                for (int c = 0; c < d; ++c) dg[c][a][b] = F.g[b][c].partial(a);
        for (int k = 0; k < d; ++k)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    Jet s = Jet::constant(dim, order - 1, 0.0);
                    for (int c = 0; c < d; ++c)
                        s += F.ginv[k][c] * (dg[c][a][b] + dg[c][b][a] - F.g[a][b].partial(c));
                    cn.Gamma[k][a][b] = 0.5 * s;
                }
    }

    // Projected coordinate fields, the raw material for C and the four cases.
    std::vector<JetVector> hcol, vcol;
    for (int a = 0; a < d; ++a) {
        hcol.push_back(detail::projection_column(F.PH, a));
        vcol.push_back(detail::projection_column(F.PV, a));
    }

    // Compatibility tensor.  The only nonzero blocks map horizontal to
    // horizontal along vertical directions and vertical to vertical along
    // horizontal ones; each is recovered from the metric's Lie derivative
    // through the orthonormal frame.
    cn.C = jet_tensor3(d, dim, order - 1);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            for (const JetVector& Xi : F.X) {
                Jet coeff = 0.5 * detail::lie_derivative_metric(F.g, vcol[a], hcol[b], Xi);
                for (int c = 0; c < d; ++c) cn.C[c][a][b] += coeff * Xi[c];
            }
            for (const JetVector& Zl : F.Z) {
                Jet coeff = 0.5 * detail::lie_derivative_metric(F.g, hcol[a], vcol[b], Zl);
                for (int c = 0; c < d; ++c) cn.C[c][a][b] += coeff * Zl[c];
            }
        }

    // Four-case assembly of the adapted connection coefficients.
    auto lc = [&](const JetVector& U, const JetVector& V) { return lc_derivative(cn, U, V); };
    cn.A = jet_tensor3(d, dim, order - 1);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            JetVector hh = mat_apply(F.PH, lc(hcol[a], hcol[b]));
            JetVector vv = mat_apply(F.PV, lc(vcol[a], vcol[b]));
            JetVector vh = mat_apply(F.PH, lie_bracket(vcol[a], hcol[b]));
            JetVector hv = mat_apply(F.PV, lie_bracket(hcol[a], vcol[b]));
            for (int c = 0; c < d; ++c)
                cn.A[c][a][b] = hh[c] + vv[c] + vh[c] + hv[c] + cn.C[c][a][b];
        }

    // Torsion: coordinate fields commute, so only the A-antisymmetry remains.
    cn.T = jet_tensor3(d, dim, order - 1);
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) cn.T[c][a][b] = cn.A[c][a][b] - cn.A[c][b][a];

    // Torsion dual: (J_{e_a} e_b)^c = g^{cw} g_{ad} T^d_{bw}.
    cn.J = jet_tensor3(d, dim, order - 1);
    for (int c = 0; c < d; ++c)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                for (int w = 0; w < d; ++w)
                    for (int dd = 0; dd < d; ++dd)
                        cn.J[c][a][b] += F.ginv[c][w] * F.g[a][dd] * cn.T[dd][b][w];

    // Mean curvature: horizontal trace of the leaves' second fundamental form.
    cn.H = jet_vector(d, dim, order - 1);
    for (const JetVector& Zl : F.Z) {
        JetVector h = mat_apply(F.PH, lc(Zl, Zl));
        for (int c = 0; c < d; ++c) cn.H[c] += h[c];
    }

    // Curvature of the adapted connection.
    cn.Riem = jet_tensor4(d, dim, order - 2);
    for (int dd = 0; dd < d; ++dd)
        for (int c = 0; c < d; ++c)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    Jet s = cn.A[dd][b][c].partial(a) - cn.A[dd][a][c].partial(b);
                    for (int e = 0; e < d; ++e)
                        s += cn.A[e][b][c] * cn.A[dd][a][e] - cn.A[e][a][c] * cn.A[dd][b][e];
                    cn.Riem[dd][c][a][b] = s;
                }

    // Covariant derivative of the torsion tensor.
    cn.dT = jet_tensor4(d, dim, order - 2);
    for (int dd = 0; dd < d; ++dd)
        for (int c = 0; c < d; ++c)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    Jet s = cn.T[c][a][b].partial(dd);
                    for (int e = 0; e < d; ++e)
                        s += cn.A[c][dd][e] * cn.T[e][a][b] - cn.A[e][dd][a] * cn.T[c][e][b] -
                             cn.A[e][dd][b] * cn.T[c][a][e];
                    cn.dT[dd][c][a][b] = s;
                }

    return cn;
}

inline Connection build_connection(const ModelSpec& spec, const std::vector<double>& pt,
                                   int order = 4) {
    return build_connection(build_frames(spec, pt, order));
}

// Residuals of the structural properties the adapted connection must satisfy,
// evaluated on a caller-supplied family of test fields.  All residuals are
// jet-coefficient magnitudes, so a pass certifies the property as an identity
// of functions near the point, not just a pointwise coincidence.
struct AxiomResiduals {
    double metricity = 0.0;            // U<V,W> = <nab_U V, W> + <V, nab_U W>
    double splitting = 0.0;            // nabla preserves the two distributions
    double torsion_match = 0.0;        // T = nab_U V - nab_V U - [U, V]
    double torsion_cases = 0.0;        // T agrees with the split case rules
    double levi_civita_relation = 0.0; // nab = D + (T - J - J^T)/2
    double c_symmetry = 0.0;           // <C_U V, W> = <C_U W, V>
    double j_antisymmetry = 0.0;       // <J_U V, W> = -<J_U W, V>

    double worst() const {
        double w = metricity;
        for (double v : {splitting, torsion_match, torsion_cases, levi_civita_relation,
                         c_symmetry, j_antisymmetry})
            w = std::max(w, v);
        return w;
    }
};

namespace detail {

inline double max_abs_coeff(const Jet& j) {
    double m = 0.0;
    for (const MultiIndex& alpha : j.table().alphas) m = std::max(m, std::abs(j.coeff(alpha)));
    return m;
}

inline double max_abs_coeff(const JetVector& v) {
    double m = 0.0;
    for (const Jet& j : v) m = std::max(m, max_abs_coeff(j));
    return m;
}

inline JetVector vec_sub(JetVector a, const JetVector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] - b[i];
    return a;
}

} // namespace detail

/// Evaluate the structural residuals over all pairs/triples drawn from
/// `fields` (a handful of test fields is plenty; cost grows cubically).
inline AxiomResiduals connection_axiom_residuals(const Connection& cn,
                                                 const std::vector<JetVector>& fields) {
    using detail::max_abs_coeff;
    using detail::vec_sub;
    const Frames& F = cn.fr;
    AxiomResiduals r;

    for (const JetVector& U : fields) {
        for (const JetVector& V : fields) {
            JetVector nUV = adapted_derivative(cn, U, V);

            // Splitting preservation: nabla of a projected field stays on its side.
            JetVector hv = adapted_derivative(cn, U, mat_apply(F.PH, V));
            JetVector vv = adapted_derivative(cn, U, mat_apply(F.PV, V));
            r.splitting = std::max(r.splitting, max_abs_coeff(mat_apply(F.PV, hv)));
            r.splitting = std::max(r.splitting, max_abs_coeff(mat_apply(F.PH, vv)));

            // Torsion against the defining combination of case rules:
            //   Tor(U, V) = -PV[U_H, V_H] - PH[U_V, V_V] + C_U V_H' ... built
            // directly from the definition Tor = nab_U V - nab_V U - [U, V].
            JetVector direct = vec_sub(vec_sub(nUV, adapted_derivative(cn, V, U)), lie_bracket(U, V));
            JetVector tUV = torsion_of(cn, U, V);
            r.torsion_match = std::max(r.torsion_match, max_abs_coeff(vec_sub(direct, tUV)));

            // Independent route: the horizontal/horizontal part is minus the
            // vertical bracket component, the vertical/vertical part minus
            // the horizontal one, and mixed parts come from C alone.
            JetVector uh = mat_apply(F.PH, U), uv = mat_apply(F.PV, U);
            JetVector vh = mat_apply(F.PH, V), vvp = mat_apply(F.PV, V);
            JetVector cases = mat_apply(F.PV, lie_bracket(uh, vh));
            JetVector hpart = mat_apply(F.PH, lie_bracket(uv, vvp));
            JetVector cuv = c_apply(cn, U, V), cvu = c_apply(cn, V, U);
            for (std::size_t c = 0; c < cases.size(); ++c)
                cases[c] = -cases[c] - hpart[c] + cuv[c] - cvu[c];
            r.torsion_cases = std::max(r.torsion_cases, max_abs_coeff(vec_sub(tUV, cases)));

            // Relation to the Levi-Civita derivative through T and J.
            JetVector lhs = lc_derivative(cn, U, V);
            JetVector tor = torsion_of(cn, U, V);
            JetVector ju = j_apply(cn, U, V);
            JetVector jv = j_apply(cn, V, U);
            JetVector rhs = nUV;
            for (std::size_t c = 0; c < rhs.size(); ++c)
                rhs[c] = rhs[c] - 0.5 * tor[c] + 0.5 * ju[c] + 0.5 * jv[c];
            r.levi_civita_relation = std::max(r.levi_civita_relation, max_abs_coeff(vec_sub(lhs, rhs)));

            for (const JetVector& W : fields) {
                // Metricity.
                Jet res = apply_field(U, metric_dot(F.g, V, W)) -
                          metric_dot(F.g, nUV, W) -
                          metric_dot(F.g, V, adapted_derivative(cn, U, W));
                r.metricity = std::max(r.metricity, max_abs_coeff(res));

                // Tensor symmetries.
                Jet cs = metric_dot(F.g, c_apply(cn, U, V), W) - metric_dot(F.g, c_apply(cn, U, W), V);
                r.c_symmetry = std::max(r.c_symmetry, max_abs_coeff(cs));
                Jet ja = metric_dot(F.g, j_apply(cn, U, V), W) + metric_dot(F.g, j_apply(cn, U, W), V);
                r.j_antisymmetry = std::max(r.j_antisymmetry, max_abs_coeff(ja));
            }
        }
    }
    return r;
}

} // namespace folib
