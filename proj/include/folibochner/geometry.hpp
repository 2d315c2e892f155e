#pragma once

// Chart-level description of a foliated Riemannian model and the pointwise
// frame machinery built on it.
//
// A model lives on a coordinate box in R^d with d = n + m: an n-dimensional
// horizontal distribution (the complement of the foliation's tangent spaces)
// and an m-dimensional vertical distribution (tangent to the leaves).  The
// model supplies either a metric matrix or a claimed-orthonormal moving
// frame, plus a set of fields spanning the vertical distribution.  At each
// evaluation point build_frames() produces jet-valued orthonormal frames
// splitting into horizontal and vertical parts, the two orthogonal
// projections, and the volume density.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "expression.hpp"
#include "jet.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace folib {

// Nilpotent stratified Lie algebra data for group models: basis e_0..e_{d-1}
// with [e_i, e_j] = sum_k c[i][j][k] e_k and a layer number per element
// (layer 1 generates; brackets add layers).
struct CarnotStructure {
    std::vector<int> layer;
    std::vector<std::vector<std::vector<double>>> c;

    int dim() const { return static_cast<int>(layer.size()); }
    int step() const { return layer.empty() ? 0 : *std::max_element(layer.begin(), layer.end()); }
};

struct ModelSpec {
    std::string name;
    int n = 0; // horizontal rank
    int m = 0; // vertical rank

    // Exactly one of `metric` (d x d entries) and `frame` (d fields of d
    // components, horizontal fields first, vertical fields last) is set.
    std::vector<std::vector<Expr>> metric;
    std::vector<std::vector<Expr>> frame;

    // Fields spanning the vertical distribution; required for metric models,
    // must be left empty for frame models (the trailing frame fields serve).
    std::vector<std::vector<Expr>> vertical;

    std::optional<CarnotStructure> group;
    std::vector<std::pair<double, double>> sample_box;
    std::map<std::string, std::string> metadata;

    int dim() const { return n + m; }

    void validate() const {
        const int d = dim();
        if (n < 1 || m < 1 || d > 8)
            throw ModelError(name + ": need n >= 1, m >= 1 and n + m <= 8");
        const bool has_metric = !metric.empty(), has_frame = !frame.empty();
        if (has_metric == has_frame)
            throw ModelError(name + ": exactly one of metric and frame must be given");
        if (has_metric) {
            if (static_cast<int>(metric.size()) != d)
                throw ModelError(name + ": metric must be " + std::to_string(d) + " x " +
                                 std::to_string(d));
            for (const auto& row : metric)
                if (static_cast<int>(row.size()) != d)
                    throw ModelError(name + ": metric row has wrong length");
            if (static_cast<int>(vertical.size()) != m)
                throw ModelError(name + ": metric models need exactly m vertical fields");
        } else {
            if (static_cast<int>(frame.size()) != d)
                throw ModelError(name + ": frame must consist of " + std::to_string(d) + " fields");
            for (const auto& f : frame)
                if (static_cast<int>(f.size()) != d)
                    throw ModelError(name + ": frame field has wrong component count");
            if (!vertical.empty())
                throw ModelError(name + ": frame models derive the vertical span from the frame");
        }
        for (const auto& v : vertical)
            if (static_cast<int>(v.size()) != d)
                throw ModelError(name + ": vertical field has wrong component count");
        if (static_cast<int>(sample_box.size()) != d)
            throw ModelError(name + ": sample box must have one interval per coordinate");
        for (const auto& [lo, hi] : sample_box)
            if (!(lo < hi)) throw ModelError(name + ": empty sample box interval");
        if (group && group->dim() != d)
            throw ModelError(name + ": group structure dimension mismatch");
    }

    /// The fields spanning the vertical distribution (declared, or the
    /// trailing m frame fields).
    std::vector<std::vector<Expr>> vertical_fields() const {
        if (!vertical.empty()) return vertical;
        return {frame.begin() + n, frame.end()};
    }
};

/// Components of a vector field evaluated as jets.
inline JetVector eval_field(const std::vector<Expr>& field, const std::vector<Jet>& vars) {
    JetVector v;
    v.reserve(field.size());
    for (const Expr& comp : field) v.push_back(comp.eval_jet(vars));
    return v;
}

/// Coordinate field d/dx_a as constant jets.
inline JetVector coordinate_field(int a, int dim, int order) {
    JetVector v = jet_vector(dim, dim, order);
    v[a] = Jet::constant(dim, order, 1.0);
    return v;
}

/// Directional derivative A(f) = A^a df/dx_a; drops one jet order.
inline Jet apply_field(const JetVector& A, const Jet& f) {
    Jet r = A[0] * f.partial(0);
    for (std::size_t a = 1; a < A.size(); ++a) r += A[a] * f.partial(static_cast<int>(a));
    return r;
}

/// Lie bracket [A, B]^c = A^a dB^c/dx_a - B^a dA^c/dx_a; drops one jet order.
inline JetVector lie_bracket(const JetVector& A, const JetVector& B) {
    const int d = static_cast<int>(A.size());
    JetVector r;
    r.reserve(d);
    for (int c = 0; c < d; ++c) {
        Jet s = A[0] * B[c].partial(0) - B[0] * A[c].partial(0);
        for (int a = 1; a < d; ++a) s += A[a] * B[c].partial(a) - B[a] * A[c].partial(a);
        r.push_back(s);
    }
    return r;
}

// Pointwise frame data: metric and inverse, orthonormal split frame, and the
// two orthogonal projections, all as jets about the evaluation point.
struct Frames {
    std::vector<double> pt;
    int n = 0, m = 0, order = 0;
    std::vector<Jet> vars;        // coordinate jets
    JetMatrix g, ginv;
    Jet sqrt_det_g;
    std::vector<JetVector> X;     // horizontal orthonormal fields
    std::vector<JetVector> Z;     // vertical orthonormal fields
    JetMatrix PH, PV;             // projections as mixed-index matrices
    double condition = 1.0;       // spread of Gram-Schmidt pivot norms
    bool condition_warning = false;

    int dim() const { return n + m; }

    /// All frame fields, horizontal first.
    std::vector<JetVector> all_fields() const {
        std::vector<JetVector> out = X;
        out.insert(out.end(), Z.begin(), Z.end());
        return out;
    }
};

namespace detail {

// Metric Gram-Schmidt step: remove projections of v onto the (already
// orthonormal) fields in `basis`, then normalize.  Returns the squared-norm
// value of the residual before normalization through `pivot`.
inline JetVector gs_orthonormalize(const JetMatrix& g, JetVector v,
                                   const std::vector<JetVector>& basis, double& pivot) {
    for (const JetVector& b : basis) {
        Jet proj = metric_dot(g, v, b);
        for (std::size_t a = 0; a < v.size(); ++a) v[a] -= proj * b[a];
    }
    Jet norm2 = metric_dot(g, v, v);
    pivot = norm2.value();
    if (pivot < 1e-12) return v; // caller decides: skip or fail
    Jet inv_norm = 1.0 / sqrt(norm2);
    for (Jet& comp : v) comp = comp * inv_norm;
    return v;
}

} // namespace detail

/// Build the pointwise orthonormal frame machinery at `pt`, with metric data
/// expanded to the given jet order.
inline Frames build_frames(const ModelSpec& spec, const std::vector<double>& pt, int order = 4) {
    spec.validate();
    const int d = spec.dim();
    if (static_cast<int>(pt.size()) != d)
        throw ModelError(spec.name + ": evaluation point has wrong dimension");
    if (order < 3)
        throw OrderError("frame construction needs jet order >= 3, got " + std::to_string(order));

    Frames fr;
    fr.pt = pt;
    fr.n = spec.n;
    fr.m = spec.m;
    fr.order = order;
    fr.vars.reserve(d);
    for (int i = 0; i < d; ++i) fr.vars.push_back(Jet::variable(d, order, i, pt[i]));

    // Metric and inverse.
    if (!spec.metric.empty()) {
        fr.g = jet_matrix(d, d, d, order);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) fr.g[a][b] = spec.metric[a][b].eval_jet(fr.vars);
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b)
                if (std::abs(fr.g[a][b].value() - fr.g[b][a].value()) > 1e-10)
                    throw ModelError(spec.name + ": metric is not symmetric at the evaluation point");
        MetricFactorization fac = factorize_spd(fr.g);
        fr.ginv = fac.ginv;
        fr.sqrt_det_g = fac.sqrt_det;
    } else {
        // Claimed-orthonormal frame F: the induced metric is (sum_i F_i F_i^T)^{-1},
        // so factor the frame Gram matrix instead.
        JetMatrix M = jet_matrix(d, d, d, order);
        std::vector<JetVector> F;
        for (const auto& field : spec.frame) F.push_back(eval_field(field, fr.vars));
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                for (int i = 0; i < d; ++i) M[a][b] += F[i][a] * F[i][b];
        MetricFactorization fac = factorize_spd(M);
        fr.g = fac.ginv;
        fr.ginv = M;
        fr.sqrt_det_g = 1.0 / fac.sqrt_det;
    }

    // Vertical fields first: they define the split.
    double min_pivot = 1e300, max_pivot = 0.0;
    std::vector<JetVector> basis;
    for (const auto& vf : spec.vertical_fields()) {
        double pivot = 0.0;
        JetVector z = detail::gs_orthonormalize(fr.g, eval_field(vf, fr.vars), basis, pivot);
        if (pivot < 1e-12)
            throw DegenerateVerticalSpan(spec.name + ": vertical fields are dependent at the point (pivot " +
                                         std::to_string(pivot) + ")");
        min_pivot = std::min(min_pivot, pivot);
        max_pivot = std::max(max_pivot, pivot);
        basis.push_back(std::move(z));
    }
    fr.Z = basis;

    // Horizontal fields: orthonormalize candidates against everything kept so
    // far, skipping directions the vertical span already absorbed.
    std::vector<JetVector> candidates;
    if (!spec.frame.empty())
        for (int i = 0; i < spec.n; ++i) candidates.push_back(eval_field(spec.frame[i], fr.vars));
    else
        for (int a = 0; a < d; ++a) candidates.push_back(coordinate_field(a, d, order));
    for (JetVector& cand : candidates) {
        if (static_cast<int>(fr.X.size()) == spec.n) break;
        double pivot = 0.0;
        JetVector x = detail::gs_orthonormalize(fr.g, std::move(cand), basis, pivot);
        if (pivot < 1e-12) continue;
        min_pivot = std::min(min_pivot, pivot);
        max_pivot = std::max(max_pivot, pivot);
        fr.X.push_back(x);
        basis.push_back(std::move(x));
    }
    if (static_cast<int>(fr.X.size()) != spec.n)
        throw RankDeficientHorizontal(spec.name + ": only " + std::to_string(fr.X.size()) + " of " +
                                      std::to_string(spec.n) + " horizontal directions found");

    fr.condition = std::sqrt(max_pivot / min_pivot);
    fr.condition_warning = fr.condition > 1e8;

    // Projections P^a_b = sum_i E_i^a (g E_i)_b over each half of the frame.
    auto projection = [&](const std::vector<JetVector>& fields) {
        JetMatrix P = jet_matrix(d, d, d, order);
        for (const JetVector& e : fields) {
            JetVector ge = jet_vector(d, d, order);
            for (int b = 0; b < d; ++b)
                for (int c = 0; c < d; ++c) ge[b] += fr.g[b][c] * e[c];
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) P[a][b] += e[a] * ge[b];
        }
        return P;
    };
    fr.PH = projection(fr.X);
    fr.PV = projection(fr.Z);
    return fr;
}

/// Deterministic sample points, uniform in the model's box.
inline std::vector<std::vector<double>> sample_points(const ModelSpec& spec, int count,
                                                      std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "points/" + spec.name, 0));
    std::vector<std::vector<double>> pts;
    pts.reserve(count);
    for (int k = 0; k < count; ++k) {
        std::vector<double> p;
        p.reserve(spec.sample_box.size());
        for (const auto& [lo, hi] : spec.sample_box)
            p.push_back(std::uniform_real_distribution<double>(lo, hi)(rng));
        pts.push_back(std::move(p));
    }
    return pts;
}

} // namespace folib
