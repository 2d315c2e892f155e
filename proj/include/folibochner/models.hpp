#pragma once

// Built-in model catalog and structural classification.
//
// Group models are written in exponential coordinates of the first kind.
// For a stratified nilpotent algebra of step <= 4 the left-invariant frame
// field for basis vector v at the point with coordinates u is the Bernoulli
// series
//     X_v(u) = v + [u, v]/2 + [u, [u, v]]/12,
// exact because further terms either vanish by nilpotency or carry a zero
// Bernoulli number.  The special-unitary model is not nilpotent and uses the
// closed-form série instead: with rho = |u| and Ad_u w = 2 u x w,
//     F(u) = I + Ad_u/2 + beta(rho) Ad_u^2,   beta = (1 - rho cot rho)/(4 rho^2).

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "connection.hpp"
#include "errors.hpp"
#include "expression.hpp"
#include "geometry.hpp"

namespace folib {

// ---------------------------------------------------------------------------
// Structure-constant validation and frame generation
// ---------------------------------------------------------------------------

/// Check antisymmetry, the Jacobi identity, strict grading, and that the
/// first layer generates the rest.  Throws BadStructureConstants otherwise.
inline void validate_structure(const CarnotStructure& cs) {
    const int d = cs.dim();
    if (d < 2) throw BadStructureConstants("need at least two basis elements");
    if (static_cast<int>(cs.c.size()) != d)
        throw BadStructureConstants("structure tensor must be d x d x d");
    for (const auto& plane : cs.c) {
        if (static_cast<int>(plane.size()) != d)
            throw BadStructureConstants("structure tensor must be d x d x d");
        for (const auto& row : plane)
            if (static_cast<int>(row.size()) != d)
                throw BadStructureConstants("structure tensor must be d x d x d");
    }
    for (int i = 0; i < d; ++i)
        if (cs.layer[i] < 1 || (i > 0 && cs.layer[i] < cs.layer[i - 1]))
            throw BadStructureConstants("layers must be positive and ordered");
    if (cs.layer[0] != 1) throw BadStructureConstants("first layer must be layer 1");
    if (cs.step() > 4)
        throw BadStructureConstants("step " + std::to_string(cs.step()) +
                                    " exceeds the supported step-4 cap");

    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                if (std::abs(cs.c[i][j][k] + cs.c[j][i][k]) > 1e-14)
                    throw BadStructureConstants("structure constants are not antisymmetric");
                if (cs.c[i][j][k] != 0.0 && cs.layer[k] != cs.layer[i] + cs.layer[j])
                    throw BadStructureConstants("bracket of layers " + std::to_string(cs.layer[i]) +
                                                "+" + std::to_string(cs.layer[j]) +
                                                " lands outside its layer");
            }

    // Jacobi: sum over cyclic permutations of [e_i, [e_j, e_k]] vanishes.
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            for (int k = j + 1; k < d; ++k)
                for (int l = 0; l < d; ++l) {
                    double s = 0.0;
                    for (int mm = 0; mm < d; ++mm)
                        s += cs.c[j][k][mm] * cs.c[i][mm][l] + cs.c[k][i][mm] * cs.c[j][mm][l] +
                             cs.c[i][j][mm] * cs.c[k][mm][l];
                    if (std::abs(s) > 1e-12)
                        throw BadStructureConstants("Jacobi identity fails on basis triple " +
                                                    std::to_string(i) + "," + std::to_string(j) +
                                                    "," + std::to_string(k));
                }

    // Layer 1 must generate: each deeper layer is spanned by brackets of the
    // previous layers (for graded algebras, by layer-1 against the layer below).
    for (int lv = 2; lv <= cs.step(); ++lv) {
        std::vector<int> members;
        for (int k = 0; k < d; ++k)
            if (cs.layer[k] == lv) members.push_back(k);
        if (members.empty()) throw BadStructureConstants("empty layer " + std::to_string(lv));
        std::vector<Eigen::VectorXd> spanners;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                if (cs.layer[i] + cs.layer[j] != lv) continue;
                Eigen::VectorXd v(members.size());
                for (std::size_t t = 0; t < members.size(); ++t) v[t] = cs.c[i][j][members[t]];
                if (v.norm() > 0) spanners.push_back(v);
            }
        Eigen::MatrixXd Mx(members.size(), spanners.size());
        for (std::size_t t = 0; t < spanners.size(); ++t) Mx.col(t) = spanners[t];
        if (spanners.empty() ||
            Mx.fullPivLu().rank() < static_cast<Eigen::Index>(members.size()))
            throw BadStructureConstants("layer " + std::to_string(lv) +
                                        " is not generated by brackets");
    }
}

namespace detail {

// ad_u(w) as expressions: result_k = sum_{a,j} u_a w_j c[a][j][k].
inline std::vector<Expr> ad_u(const CarnotStructure& cs, const std::vector<Expr>& w) {
    const int d = cs.dim();
    std::vector<Expr> r(d); // zeros
    for (int a = 0; a < d; ++a)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                if (cs.c[a][j][k] != 0.0)
                    r[k] = r[k] + Expr::c(cs.c[a][j][k]) * Expr::var(a) * w[j];
    return r;
}

} // namespace detail

/// Left-invariant frame fields in first-kind exponential coordinates.
inline std::vector<std::vector<Expr>> carnot_frame(const CarnotStructure& cs) {
    const int d = cs.dim();
    std::vector<std::vector<Expr>> frame;
    for (int i = 0; i < d; ++i) {
        std::vector<Expr> v(d);
        v[i] = Expr::c(1.0);
        std::vector<Expr> ad1 = detail::ad_u(cs, v);
        std::vector<Expr> ad2 = detail::ad_u(cs, ad1);
        std::vector<Expr> field(d);
        for (int k = 0; k < d; ++k)
            field[k] = v[k] + Expr::c(0.5) * ad1[k] + Expr::c(1.0 / 12.0) * ad2[k];
        frame.push_back(std::move(field));
    }
    return frame;
}

/// Group model from structure constants: frame model with the group attached.
inline ModelSpec carnot_model(const std::string& name, CarnotStructure cs) {
    validate_structure(cs);
    ModelSpec s;
    s.name = name;
    s.n = 0;
    for (int l : cs.layer)
        if (l == 1) ++s.n;
    s.m = cs.dim() - s.n;
    s.frame = carnot_frame(cs);
    s.sample_box.assign(cs.dim(), {-1.0, 1.0});
    s.group = std::move(cs);
    s.metadata["family"] = "carnot";
    return s;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Flat product R^n x R^m: the degenerate baseline where every tensor in the
/// calculus vanishes.
inline ModelSpec flat_product(int n = 2, int m = 1) {
    ModelSpec s;
    s.name = "flat_product";
    s.n = n;
    s.m = m;
    const int d = n + m;
    s.metric.assign(d, std::vector<Expr>(d));
    for (int a = 0; a < d; ++a) s.metric[a][a] = Expr::c(1.0);
    for (int l = 0; l < m; ++l) {
        std::vector<Expr> z(d);
        z[n + l] = Expr::c(1.0);
        s.vertical.push_back(std::move(z));
    }
    s.sample_box.assign(d, {-1.0, 1.0});
    s.metadata["family"] = "flat";
    return s;
}

/// k-th step-two group: 2k generators, one center, [e_i, e_{k+i}] = e_{2k}.
inline ModelSpec heisenberg(int k = 1) {
    if (k < 1 || k > 3) throw ModelError("heisenberg index k must be 1, 2 or 3");
    const int d = 2 * k + 1;
    CarnotStructure cs;
    cs.layer.assign(d, 1);
    cs.layer[d - 1] = 2;
    cs.c.assign(d, std::vector<std::vector<double>>(d, std::vector<double>(d, 0.0)));
    for (int i = 0; i < k; ++i) {
        cs.c[i][k + i][d - 1] = 1.0;
        cs.c[k + i][i][d - 1] = -1.0;
    }
    ModelSpec s = carnot_model("heisenberg", cs);
    if (k > 1) s.name = "heisenberg" + std::to_string(k);
    return s;
}

/// Step-three group on four generators of layers (1,1,2,3):
/// [e0,e1] = e2, [e0,e2] = e3.
inline ModelSpec engel() {
    CarnotStructure cs;
    cs.layer = {1, 1, 2, 3};
    cs.c.assign(4, std::vector<std::vector<double>>(4, std::vector<double>(4, 0.0)));
    cs.c[0][1][2] = 1.0;
    cs.c[1][0][2] = -1.0;
    cs.c[0][2][3] = 1.0;
    cs.c[2][0][3] = -1.0;
    return carnot_model("engel", cs);
}

/// Step-four filiform group on five elements: [e0, e_i] = e_{i+1}, i = 1..3.
inline ModelSpec filiform_step4() {
    CarnotStructure cs;
    cs.layer = {1, 1, 2, 3, 4};
    cs.c.assign(5, std::vector<std::vector<double>>(5, std::vector<double>(5, 0.0)));
    for (int i = 1; i <= 3; ++i) {
        cs.c[0][i][i + 1] = 1.0;
        cs.c[i][0][i + 1] = -1.0;
    }
    return carnot_model("filiform_step4", cs);
}

/// Compact rank-one model: the special unitary group with its biinvariant
/// round metric, horizontal plane spanned by two of the three rotation
/// generators ([e_i, e_j] = 2 eps_{ijk} e_k).
inline ModelSpec su2_round() {
    ModelSpec s;
    s.name = "su2_round";
    s.n = 2;
    s.m = 1;
    Expr x = Expr::var(0), y = Expr::var(1), z = Expr::var(2);
    Expr r2 = x * x + y * y + z * z;
    Expr rho = Expr::fun(Expr::Fn::Sqrt, r2);
    // 4*beta = (1 - rho cot rho)/rho^2
    Expr fourbeta =
        (Expr::c(1.0) - rho * Expr::fun(Expr::Fn::Cos, rho) / Expr::fun(Expr::Fn::Sin, rho)) / r2;
    std::vector<Expr> u = {x, y, z};
    auto half_ad = [&](int a, int b) {
        // (u x .)_{ab}: matrix of w -> u x w, i.e. half of ad_u.
        const int idx[3][3] = {{-1, 2, 1}, {2, -1, 0}, {1, 0, -1}};
        const double sgn[3][3] = {{0, -1, 1}, {1, 0, -1}, {-1, 1, 0}};
        if (a == b) return Expr::c(0.0);
        return Expr::c(sgn[a][b]) * u[idx[a][b]];
    };
    s.frame.assign(3, std::vector<Expr>(3));
    for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a) {
            Expr entry = half_ad(a, i);
            if (a == i) entry = entry + Expr::c(1.0) - fourbeta * r2;
            entry = entry + fourbeta * u[a] * u[i];
            s.frame[i][a] = entry;
        }
    s.sample_box.assign(3, {0.2, 0.9});
    s.metadata["family"] = "su2";
    return s;
}

namespace detail {

// Common chassis for the two warped step-two models: the flat step-two
// coframe {dx, dy, theta} with theta = dz + (y/2)dx - (x/2)dy, assembled as
//   g = wH^2 (dx^2 + dy^2) + wV^2 theta^2
// for positive weight expressions wH, wV.
inline ModelSpec warped_step_two(const std::string& name, const Expr& wH2, const Expr& wV2) {
    ModelSpec s;
    s.name = name;
    s.n = 2;
    s.m = 1;
    Expr x = Expr::var(0), y = Expr::var(1);
    Expr tx = y / Expr::c(2.0);           // theta(d/dx)
    Expr ty = Expr::c(0.0) - x / Expr::c(2.0); // theta(d/dy)
    s.metric.assign(3, std::vector<Expr>(3));
    s.metric[0][0] = wH2 + wV2 * tx * tx;
    s.metric[0][1] = wV2 * tx * ty;
    s.metric[0][2] = wV2 * tx;
    s.metric[1][1] = wH2 + wV2 * ty * ty;
    s.metric[1][2] = wV2 * ty;
    s.metric[2][2] = wV2;
    s.metric[1][0] = s.metric[0][1];
    s.metric[2][0] = s.metric[0][2];
    s.metric[2][1] = s.metric[1][2];
    s.vertical = {{Expr::c(0.0), Expr::c(0.0), Expr::c(1.0)}};
    s.sample_box.assign(3, {-1.0, 1.0});
    s.metadata["family"] = "warped";
    return s;
}

} // namespace detail

/// Step-two chart with the vertical length rescaled by exp(x0): bundle-like
/// but no longer totally geodesic or minimal.
inline ModelSpec warped_heisenberg_vertical() {
    Expr w = Expr::fun(Expr::Fn::Exp, Expr::c(2.0) * Expr::var(0));
    return detail::warped_step_two("warped_heisenberg_vertical", Expr::c(1.0), w);
}

/// Step-two chart with the horizontal plane rescaled by exp(x2): the
/// rescaling depends on the leaf coordinate, so the metric is not bundle-like.
inline ModelSpec warped_heisenberg_horizontal() {
    Expr w = Expr::fun(Expr::Fn::Exp, Expr::c(2.0) * Expr::var(2));
    return detail::warped_step_two("warped_heisenberg_horizontal", w, Expr::c(1.0));
}

/// Flat metric with a tilted point-dependent vertical plane: exercises the
/// non-integrable regime (vertical torsion, nonzero mean curvature).
inline ModelSpec twisted_flat() {
    ModelSpec s;
    s.name = "twisted_flat";
    s.n = 2;
    s.m = 2;
    s.metric.assign(4, std::vector<Expr>(4));
    for (int a = 0; a < 4; ++a) s.metric[a][a] = Expr::c(1.0);
    s.metric[2][2] = Expr::parse("exp(2*x0)");
    s.vertical = {{Expr::c(0.0), Expr::c(0.0), Expr::c(1.0), Expr::c(0.0)},
                  {Expr::var(2), Expr::c(0.0), Expr::c(0.0), Expr::c(1.0)}};
    s.sample_box.assign(4, {-1.0, 1.0});
    s.metadata["family"] = "custom";
    return s;
}

/// Catalog lookup used by the command line and by file-described models.
inline ModelSpec build_builtin(const std::string& name,
                               const std::map<std::string, double>& params = {}) {
    auto get = [&](const std::string& key, double dflt) {
        auto it = params.find(key);
        return it == params.end() ? dflt : it->second;
    };
    if (name == "flat_product")
        return flat_product(static_cast<int>(get("n", 2)), static_cast<int>(get("m", 1)));
    if (name == "heisenberg") return heisenberg(static_cast<int>(get("k", 1)));
    if (name == "engel") return engel();
    if (name == "filiform_step4") return filiform_step4();
    if (name == "su2_round") return su2_round();
    if (name == "warped_heisenberg_vertical") return warped_heisenberg_vertical();
    if (name == "warped_heisenberg_horizontal") return warped_heisenberg_horizontal();
    if (name == "twisted_flat") return twisted_flat();
    throw ModelError("unknown builtin model '" + name + "'");
}

inline std::vector<std::string> builtin_names() {
    return {"flat_product",
            "heisenberg",
            "engel",
            "filiform_step4",
            "su2_round",
            "warped_heisenberg_vertical",
            "warped_heisenberg_horizontal",
            "twisted_flat"};
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

// Structural flags determined numerically by sampling.  The bundle-like and
// totally-geodesic properties are each measured along two independent routes —
// a metric-variation (Lie derivative) form and a torsion-projection form —
// and both worst residuals are kept so their agreement can be audited.
struct Classification {
    bool bundle_like = true;       // vertical Killing action on horizontal pairs
    bool totally_geodesic = true;  // leaves have no second fundamental form
    bool minimal = true;           // mean curvature vanishes
    bool vertically_integrable = true; // vertical planes close under brackets
    bool bracket_generating = false;   // iterated horizontal brackets span
    int step = 0;                      // bracket depth needed to span (0 if never)
    double bundle_like_residual = 0.0;          // sup |(L_Z g)(X, X')|
    double bundle_like_torsion_residual = 0.0;  // sup |Tor(X, Z)_H|
    double totally_geodesic_residual = 0.0;         // sup |(L_X g)(Z, W)|
    double totally_geodesic_torsion_residual = 0.0; // sup |Tor(X, Z)_V|
    double minimal_residual = 0.0;
    double integrability_residual = 0.0;
};

/// Maximum bracket depth probed when determining the generating step.
inline constexpr int kMaxBracketDepth = 6;

/// Classify by evaluating the relevant tensors at sampled points.
inline Classification classify(const ModelSpec& spec, int points = 5,
                               std::uint64_t seed = 0x5eedc1a55ULL, double tol = 1e-10) {
    Classification cl;
    for (const auto& pt : sample_points(spec, points, seed)) {
        Connection cn = build_connection(spec, pt);
        const Frames& F = cn.fr;
        for (const JetVector& Z : F.Z) {
            for (const JetVector& Xi : F.X) {
                // Metric route: (L_Z g)(Xi, Xj) measures the bundle-like defect.
                for (const JetVector& Xj : F.X)
                    cl.bundle_like_residual =
                        std::max(cl.bundle_like_residual,
                                 std::abs(detail::lie_derivative_metric(F.g, Z, Xi, Xj).value()));
                // Metric route: (L_Xi g)(Z, W) is (-2x) the second fundamental form.
                for (const JetVector& W : F.Z)
                    cl.totally_geodesic_residual =
                        std::max(cl.totally_geodesic_residual,
                                 std::abs(detail::lie_derivative_metric(F.g, Xi, Z, W).value()));
                // Torsion route: the same defects are the two projections of
                // the mixed torsion Tor(Xi, Z).
                JetVector t = torsion_of(cn, Xi, Z);
                for (const Jet& comp : mat_apply(F.PH, t))
                    cl.bundle_like_torsion_residual =
                        std::max(cl.bundle_like_torsion_residual, std::abs(comp.value()));
                for (const Jet& comp : mat_apply(F.PV, t))
                    cl.totally_geodesic_torsion_residual =
                        std::max(cl.totally_geodesic_torsion_residual, std::abs(comp.value()));
            }
            for (const JetVector& W : F.Z) {
                JetVector t = torsion_of(cn, Z, W);
                for (const Jet& comp : mat_apply(F.PH, t))
                    cl.integrability_residual =
                        std::max(cl.integrability_residual, std::abs(comp.value()));
            }
        }
        for (const Jet& comp : cn.H)
            cl.minimal_residual = std::max(cl.minimal_residual, std::abs(comp.value()));

        // Bracket-generation depth: iterate horizontal fields.  Deep brackets
        // consume one jet order per level, so probe with deeper jets.
        if (cl.step == 0) {
            Frames deep = build_frames(spec, pt, kMaxBracketDepth);
            const int d = deep.dim();
            std::vector<JetVector> layer = deep.X, all = deep.X;
            auto rank_of = [&](const std::vector<JetVector>& fs) {
                Eigen::MatrixXd M(d, fs.size());
                for (std::size_t c = 0; c < fs.size(); ++c)
                    for (int a = 0; a < d; ++a) M(a, c) = fs[c][a].value();
                return static_cast<int>(M.fullPivLu().rank());
            };
            for (int depth = 1; depth <= kMaxBracketDepth; ++depth) {
                if (rank_of(all) == d) {
                    cl.step = depth;
                    break;
                }
                if (layer.empty() || layer[0][0].order() == 0) break;
                std::vector<JetVector> next;
                for (const JetVector& Xi : deep.X)
                    for (const JetVector& L : layer) next.push_back(lie_bracket(Xi, L));
                all.insert(all.end(), next.begin(), next.end());
                layer = std::move(next);
            }
        }
    }
    const bool bl_metric = cl.bundle_like_residual < tol;
    const bool bl_torsion = cl.bundle_like_torsion_residual < tol;
    const bool tg_metric = cl.totally_geodesic_residual < tol;
    const bool tg_torsion = cl.totally_geodesic_torsion_residual < tol;
    cl.bundle_like = bl_metric && bl_torsion;
    cl.totally_geodesic = tg_metric && tg_torsion;
    cl.minimal = cl.minimal_residual < tol;
    cl.vertically_integrable = cl.integrability_residual < tol;
    cl.bracket_generating = cl.step > 0;
    return cl;
}

} // namespace folib
