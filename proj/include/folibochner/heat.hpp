#pragma once

// Monte Carlo simulation of the horizontal diffusion on group models.
//
// Nilpotent models use exact group arithmetic: in exponential coordinates of
// the first kind the product is the Baker-Campbell-Hausdorff series, which
// terminates at the nilpotency step, so the only discretization error is the
// time discretization of the driving noise.  The special-unitary model uses
// exact axis-angle (quaternion) exponentials instead.
//
// Convention: one unit of simulation time uses Gaussian increments of
// variance t / steps per horizontal direction, so the simulated generator is
// half the horizontal Laplacian (the probabilist's convention).  Closed-form
// references below state this explicitly where it matters; inequalities
// derived for the semigroup of the full horizontal Laplacian at operator time
// s hold for the simulated semigroup at time t = 2s, which turns every
// exponent 2Ks into Kt.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "folibochner/connection.hpp"
#include "folibochner/errors.hpp"
#include "folibochner/expression.hpp"
#include "folibochner/geometry.hpp"
#include "folibochner/models.hpp"
#include "folibochner/rng.hpp"

namespace folib {

// ---------------------------------------------------------------------------
// Group elements and the truncated BCH product
// ---------------------------------------------------------------------------

/// A point of a nilpotent group in exponential coordinates of the first kind.
struct GroupElement {
    std::vector<double> u;
};

inline GroupElement identity_element(const CarnotStructure& cs) {
    return GroupElement{std::vector<double>(cs.dim(), 0.0)};
}

/// In first-kind exponential coordinates the inverse is exact negation.
inline GroupElement inverse_element(const GroupElement& a) {
    GroupElement r = a;
    for (double& c : r.u) c = -c;
    return r;
}

namespace detail {

/// Structure constants flattened to their nonzero entries, so that bracket
/// evaluation inside the path loop costs one pass over the nonzeros.
struct SparseBracket {
    struct Entry {
        int i, j, k;
        double c;
    };
    int d = 0;
    std::vector<Entry> nz;

    explicit SparseBracket(const CarnotStructure& cs) : d(cs.dim()) {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k)
                    if (cs.c[i][j][k] != 0.0) nz.push_back({i, j, k, cs.c[i][j][k]});
    }

    void bracket(const double* a, const double* b, double* out) const {
        for (int k = 0; k < d; ++k) out[k] = 0.0;
        for (const Entry& e : nz) out[e.k] += e.c * a[e.i] * b[e.j];
    }
};

// Coordinate cap shared with ModelSpec::validate (n + m <= 8).
using Coords = std::array<double, 8>;

/// BCH product through nesting depth 4:
///   a + b + [a,b]/2 + ([a,[a,b]] + [b,[b,a]])/12 - [b,[a,[a,b]]]/24.
/// Exact for nilpotent algebras of step <= 4; deeper terms vanish by grading.
inline void bch_product(const SparseBracket& sb, int step, const double* a, const double* b,
                        double* out) {
    const int d = sb.d;
    Coords br1, nested;
    sb.bracket(a, b, br1.data());
    for (int k = 0; k < d; ++k) out[k] = a[k] + b[k] + 0.5 * br1[k];
    if (step >= 3) {
        sb.bracket(a, br1.data(), nested.data());
        for (int k = 0; k < d; ++k) out[k] += nested[k] / 12.0;
        Coords tail;
        sb.bracket(b, br1.data(), tail.data()); // [b,[b,a]] = -[b,[a,b]]
        for (int k = 0; k < d; ++k) out[k] -= tail[k] / 12.0;
        if (step >= 4) {
            Coords deep;
            sb.bracket(b, nested.data(), deep.data());
            for (int k = 0; k < d; ++k) out[k] -= deep[k] / 24.0;
        }
    }
}

} // namespace detail

/// Exact group product in exponential coordinates of the first kind.
inline GroupElement bch_multiply(const CarnotStructure& cs, const GroupElement& a,
                                 const GroupElement& b) {
    const int d = cs.dim();
    if (static_cast<int>(a.u.size()) != d || static_cast<int>(b.u.size()) != d)
        throw StructureMismatch("bch_multiply: element dimension does not match the structure");
    detail::SparseBracket sb(cs);
    detail::Coords av{}, bv{}, out{};
    std::copy(a.u.begin(), a.u.end(), av.begin());
    std::copy(b.u.begin(), b.u.end(), bv.begin());
    detail::bch_product(sb, cs.step(), av.data(), bv.data(), out.data());
    return GroupElement{std::vector<double>(out.begin(), out.begin() + d)};
}

// ---------------------------------------------------------------------------
// Per-model group arithmetic for the path loop
// ---------------------------------------------------------------------------

namespace detail {

using Quat = std::array<double, 4>; // (w, x, y, z)

inline Quat quat_exp(const double* u) {
    const double r = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    if (r < 1e-300) return {1.0, 0.0, 0.0, 0.0};
    const double s = std::sin(r) / r;
    return {std::cos(r), s * u[0], s * u[1], s * u[2]};
}

inline Quat quat_mul(const Quat& a, const Quat& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

inline void quat_log(const Quat& q, double* u) {
    const double vn = std::sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (vn < 1e-300) {
        u[0] = u[1] = u[2] = 0.0;
        return;
    }
    const double th = std::atan2(vn, q[0]);
    u[0] = th * q[1] / vn;
    u[1] = th * q[2] / vn;
    u[2] = th * q[3] / vn;
}

/// Resolved group arithmetic for one model.  The walker state is the chart
/// coordinate vector for nilpotent models (including the abelian flat
/// product) and a unit quaternion for the special-unitary model, so the
/// simulation never leaves the group even where the chart degenerates.
struct GroupOps {
    enum class Kind { Nilpotent, SpecialUnitary } kind = Kind::Nilpotent;
    int dim = 0;    // chart dimension
    int n = 0;      // horizontal rank (noise directions)
    int step = 1;
    SparseBracket sb{CarnotStructure{}};

    int state_size() const { return kind == Kind::SpecialUnitary ? 4 : dim; }

    void identity(double* s) const {
        if (kind == Kind::SpecialUnitary) {
            s[0] = 1.0;
            s[1] = s[2] = s[3] = 0.0;
        } else {
            for (int k = 0; k < dim; ++k) s[k] = 0.0;
        }
    }

    void from_chart(const double* coords, double* s) const {
        if (kind == Kind::SpecialUnitary) {
            Quat q = quat_exp(coords);
            std::copy(q.begin(), q.end(), s);
        } else {
            std::copy(coords, coords + dim, s);
        }
    }

    void to_chart(const double* s, double* coords) const {
        if (kind == Kind::SpecialUnitary) {
            Quat q = {s[0], s[1], s[2], s[3]};
            quat_log(q, coords);
        } else {
            std::copy(s, s + dim, coords);
        }
    }

    void mul(const double* a, const double* b, double* out) const {
        if (kind == Kind::SpecialUnitary) {
            Quat qa = {a[0], a[1], a[2], a[3]}, qb = {b[0], b[1], b[2], b[3]};
            Quat q = quat_mul(qa, qb);
            std::copy(q.begin(), q.end(), out);
        } else {
            bch_product(sb, step, a, b, out);
        }
    }

    /// State of exp(c e_a) for a single basis direction.
    void exp_basis(int a, double c, double* s) const {
        Coords coords{};
        coords[a] = c;
        from_chart(coords.data(), s);
    }

    /// State of exp(sum_i v_i e_i) over the horizontal directions.
    void exp_horizontal(const double* v, double* s) const {
        Coords coords{};
        for (int i = 0; i < n; ++i) coords[i] = v[i];
        from_chart(coords.data(), s);
    }
};

inline GroupOps resolve_group_ops(const ModelSpec& spec) {
    GroupOps ops;
    ops.dim = spec.dim();
    ops.n = spec.n;
    if (spec.group) {
        ops.kind = GroupOps::Kind::Nilpotent;
        ops.step = spec.group->step();
        ops.sb = SparseBracket(*spec.group);
        return ops;
    }
    auto fam = spec.metadata.find("family");
    const std::string family = fam == spec.metadata.end() ? "" : fam->second;
    if (family == "flat") {
        // The flat product is the abelian group R^{n+m}; an empty bracket
        // list turns the BCH product into plain addition.
        CarnotStructure cs;
        cs.layer.assign(spec.dim(), 1);
        cs.c.assign(spec.dim(),
                    std::vector<std::vector<double>>(spec.dim(),
                                                     std::vector<double>(spec.dim(), 0.0)));
        ops.kind = GroupOps::Kind::Nilpotent;
        ops.step = 1;
        ops.sb = SparseBracket(cs);
        return ops;
    }
    if (family == "su2") {
        ops.kind = GroupOps::Kind::SpecialUnitary;
        return ops;
    }
    throw SchemeUnsupported("model '" + spec.name + "' has no exact group arithmetic");
}

/// The scheme simulates plain squared-field noise, so it is only the
/// horizontal diffusion when the first-order part of the horizontal Laplacian
/// vanishes: both the mean-curvature drift and the horizontal trace of the
/// frame derivatives must be zero.
inline void validate_scheme(const ModelSpec& spec) {
    for (const auto& pt : sample_points(spec, 3, 0x5c4e8eULL)) {
        Connection cn = build_connection(spec, pt, 3);
        const Frames& F = cn.fr;
        double worst_h = 0.0, worst_trace = 0.0;
        for (const Jet& c : cn.H) worst_h = std::max(worst_h, std::abs(c.value()));
        JetVector trace = jet_vector(F.dim(), F.dim(), F.order - 1);
        for (const JetVector& Xi : F.X) {
            JetVector der = lc_derivative(cn, Xi, Xi);
            for (int a = 0; a < F.dim(); ++a) trace[a] += der[a];
        }
        for (const Jet& c : mat_apply(F.PH, trace))
            worst_trace = std::max(worst_trace, std::abs(c.value()));
        if (worst_h > 1e-8)
            throw SchemeUnsupported("model '" + spec.name +
                                    "' has nonzero mean-curvature drift (|H| = " +
                                    std::to_string(worst_h) + ")");
        if (worst_trace > 1e-8)
            throw SchemeUnsupported("model '" + spec.name +
                                    "' has a nonzero horizontal frame-derivative trace (" +
                                    std::to_string(worst_trace) + ")");
    }
}

inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FOLIBOCHNER_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

/// Run the per-path body over path indices [0, paths), possibly on several
/// threads.  Each path derives its own generator from (seed, index), and the
/// body writes only to per-path slots, so the outcome is independent of the
/// worker count.  The body receives (path index, whole-path product state).
template <class Body>
void run_paths(const GroupOps& ops, double t, int steps, long paths, std::uint64_t seed,
               int workers, const Body& body) {
    if (!(t > 0.0)) throw NonpositiveTime("path simulation needs t > 0");
    if (steps < 1 || paths < 1) throw ConfigError("path simulation needs steps >= 1, paths >= 1");
    const double sd = std::sqrt(t / steps);
    auto run_range = [&](long lo, long hi) {
        const int ss = ops.state_size();
        Coords w{}, inc{}, next{};
        std::array<double, 8> noise{};
        for (long p = lo; p < hi; ++p) {
            std::mt19937_64 gen(derive_seed(seed, "heat-path", static_cast<std::uint64_t>(p)));
            std::normal_distribution<double> gauss(0.0, sd);
            ops.identity(w.data());
            for (int k = 0; k < steps; ++k) {
                for (int i = 0; i < ops.n; ++i) noise[i] = gauss(gen);
                ops.exp_horizontal(noise.data(), inc.data());
                ops.mul(w.data(), inc.data(), next.data());
                std::copy(next.begin(), next.begin() + ss, w.begin());
            }
            body(p, w.data());
        }
    };
    const int nw = std::min<long>(resolve_workers(workers), paths);
    if (nw <= 1) {
        run_range(0, paths);
        return;
    }
    std::vector<std::thread> pool;
    const long chunk = (paths + nw - 1) / nw;
    for (int w = 0; w < nw; ++w) {
        const long lo = w * chunk, hi = std::min<long>(paths, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
}

/// Mean and standard error accumulated in path-index order, so results are
/// bit-identical however the paths were distributed over workers.
inline std::pair<double, double> mean_stderr(const std::vector<double>& vals) {
    const double np = static_cast<double>(vals.size());
    double sum = 0.0;
    for (double v : vals) sum += v;
    const double mean = sum / np;
    if (vals.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (np - 1.0) / np)};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

/// Simulate the horizontal diffusion started at chart point x0: each step
/// multiplies by exp of a Gaussian horizontal algebra increment of variance
/// (t / steps) per direction.  Returns the endpoint of every path in chart
/// coordinates.
inline std::vector<GroupElement> simulate_paths(const ModelSpec& spec,
                                                const std::vector<double>& x0, double t,
                                                int steps, long n_paths, std::uint64_t seed,
                                                int workers = 0) {
    if (static_cast<int>(x0.size()) != spec.dim())
        throw ConfigError("simulate_paths: start point has wrong dimension");
    detail::GroupOps ops = detail::resolve_group_ops(spec);
    detail::validate_scheme(spec);
    detail::Coords start{}, end{};
    ops.from_chart(x0.data(), start.data());
    std::vector<GroupElement> out(static_cast<std::size_t>(n_paths));
    detail::run_paths(ops, t, steps, n_paths, seed, workers, [&](long p, const double* w) {
        detail::Coords es, coords{};
        ops.mul(start.data(), w, es.data());
        ops.to_chart(es.data(), coords.data());
        out[static_cast<std::size_t>(p)].u.assign(coords.begin(), coords.begin() + spec.dim());
    });
    return out;
}

// ---------------------------------------------------------------------------
// Semigroup estimates
// ---------------------------------------------------------------------------

/// One Monte Carlo estimate with its sampling error.
struct PathEstimate {
    std::string quantity;
    double mean = 0.0;
    double std_error = 0.0;
    long paths = 0;
    int steps = 0;
    std::uint64_t seed = 0;
};

struct HeatConfig {
    long paths = 20000;
    int steps = 200;
    std::uint64_t seed = 1;
    double displacement = 0.05; // frame-direction offset h for the differences
    int workers = 0;            // 0: FOLIBOCHNER_THREADS, else 1
};

namespace detail {

/// Per-path function values at the common-random-number starting points:
/// row 0 is the undisplaced start, then for each frame direction a the rows
/// x exp(+h e_a), x exp(-h e_a), x exp(+h/2 e_a), x exp(-h/2 e_a).  All rows
/// share the path's whole-path increment product, which is what makes the
/// differences low-variance.
struct SemigroupTable {
    std::vector<std::vector<double>> f; // [row][path]
    std::vector<double> grad_sq;        // |grad f|^2 at the undisplaced endpoint
    int d = 0;
};

/// Orthonormal-frame component expressions: the declared frame for frame
/// models, coordinate fields for the flat product.
inline std::vector<std::vector<Expr>> frame_exprs(const ModelSpec& spec) {
    if (!spec.frame.empty()) return spec.frame;
    std::vector<std::vector<Expr>> fr(spec.dim(), std::vector<Expr>(spec.dim()));
    for (int i = 0; i < spec.dim(); ++i) fr[i][i] = Expr::c(1.0);
    return fr;
}

inline SemigroupTable build_semigroup_table(const ModelSpec& spec, const Expr& f,
                                            const std::vector<double>& x, double t,
                                            const HeatConfig& cfg, bool with_grad_sq) {
    if (static_cast<int>(x.size()) != spec.dim())
        throw ConfigError("semigroup estimate: evaluation point has wrong dimension");
    if (!(cfg.displacement > 0.0)) throw ConfigError("semigroup estimate: displacement must be positive");
    GroupOps ops = resolve_group_ops(spec);
    validate_scheme(spec);
    const int d = spec.dim();
    const double h = cfg.displacement;

    // Starting states: center plus four displaced starts per direction.
    std::vector<Coords> starts(1 + 4 * d);
    ops.from_chart(x.data(), starts[0].data());
    for (int a = 0; a < d; ++a) {
        const double offs[4] = {h, -h, 0.5 * h, -0.5 * h};
        for (int o = 0; o < 4; ++o) {
            Coords e;
            ops.exp_basis(a, offs[o], e.data());
            ops.mul(starts[0].data(), e.data(), starts[1 + 4 * a + o].data());
        }
    }

    std::vector<std::vector<Expr>> frame;
    if (with_grad_sq) frame = frame_exprs(spec);

    SemigroupTable table;
    table.d = d;
    table.f.assign(starts.size(), std::vector<double>(static_cast<std::size_t>(cfg.paths)));
    if (with_grad_sq) table.grad_sq.assign(static_cast<std::size_t>(cfg.paths), 0.0);

    run_paths(ops, t, cfg.steps, cfg.paths, cfg.seed, cfg.workers, [&](long p, const double* w) {
        Coords es, coords{};
        std::vector<double> pt(d);
        for (std::size_t row = 0; row < starts.size(); ++row) {
            ops.mul(starts[row].data(), w, es.data());
            ops.to_chart(es.data(), coords.data());
            pt.assign(coords.begin(), coords.begin() + d);
            table.f[row][static_cast<std::size_t>(p)] = f.eval(pt);
            if (row == 0 && with_grad_sq) {
                // |grad f|^2 at the endpoint: sum of squared orthonormal
                // frame derivatives, horizontal and vertical alike.
                Jet fj = f.eval_jet(pt, 1);
                double total = 0.0;
                for (int i = 0; i < d; ++i) {
                    double der = 0.0;
                    for (int a = 0; a < d; ++a) {
                        const double comp = frame[i][a].eval(pt);
                        if (comp != 0.0) der += comp * fj.partial(a).value();
                    }
                    total += der * der;
                }
                table.grad_sq[static_cast<std::size_t>(p)] = total;
            }
        }
    });
    return table;
}

/// Mean directional-difference vector over a row pair, the covariance of the
/// per-path differences, and the delta-method error of sum of squared means.
struct GradientEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov; // sample covariance of the per-path differences
};

inline GradientEstimate directional_means(const SemigroupTable& table, double h, int half) {
    const int d = table.d;
    const long paths = static_cast<long>(table.f[0].size());
    // Row offsets within each direction block: full step (+h, -h) or the
    // Richardson half step (+h/2, -h/2).
    const int ofirst = half ? 3 : 1, osecond = half ? 4 : 2;
    const double denom = half ? h : 2.0 * h;
    GradientEstimate g;
    g.mean = Eigen::VectorXd::Zero(d);
    g.cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd diffs(d, paths);
    for (int a = 0; a < d; ++a) {
        const std::vector<double>& fp = table.f[1 + 4 * a + ofirst - 1];
        const std::vector<double>& fm = table.f[1 + 4 * a + osecond - 1];
        for (long p = 0; p < paths; ++p)
            diffs(a, p) = (fp[static_cast<std::size_t>(p)] - fm[static_cast<std::size_t>(p)]) / denom;
        double sum = 0.0;
        for (long p = 0; p < paths; ++p) sum += diffs(a, p);
        g.mean[a] = sum / static_cast<double>(paths);
    }
    if (paths > 1) {
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) {
                double s = 0.0;
                for (long p = 0; p < paths; ++p)
                    s += (diffs(a, p) - g.mean[a]) * (diffs(b, p) - g.mean[b]);
                g.cov(a, b) = g.cov(b, a) = s / static_cast<double>(paths - 1);
            }
    }
    return g;
}

/// Squared norm of a sub-range of the mean vector with its delta-method
/// standard error, using the covariance of the sample means.
inline std::pair<double, double> squared_norm_estimate(const GradientEstimate& g, int lo, int hi,
                                                       long paths) {
    double value = 0.0;
    for (int a = lo; a < hi; ++a) value += g.mean[a] * g.mean[a];
    double var = 0.0;
    for (int a = lo; a < hi; ++a)
        for (int b = lo; b < hi; ++b)
            var += 4.0 * g.mean[a] * g.mean[b] * g.cov(a, b) / static_cast<double>(paths);
    return {value, std::sqrt(std::max(var, 0.0))};
}

inline PathEstimate labelled(const std::string& quantity, double mean, double se,
                             const HeatConfig& cfg) {
    PathEstimate e;
    e.quantity = quantity;
    e.mean = mean;
    e.std_error = se;
    e.paths = cfg.paths;
    e.steps = cfg.steps;
    e.seed = cfg.seed;
    return e;
}

} // namespace detail

/// Semigroup quantities at (x, t): the value, squared horizontal and vertical
/// gradients, horizontal Laplacian — all of the evolved function — and the
/// variance.  Derivatives use common-random-number central differences along
/// left-invariant frame directions; the half-displacement values are the
/// Richardson cross-check.
struct SemigroupEstimate {
    PathEstimate value;       // Q_t f
    PathEstimate variance;    // Q_t(f^2) - (Q_t f)^2
    PathEstimate grad_h_sq;   // |grad_H Q_t f|^2
    PathEstimate grad_v_sq;   // |grad_V Q_t f|^2
    PathEstimate laplacian_h; // Delta_H Q_t f
    double displacement = 0.0;
    double grad_h_sq_half = 0.0; // same quantities from the h/2 differences
    double grad_v_sq_half = 0.0;
    double laplacian_h_half = 0.0;
};

inline SemigroupEstimate estimate_semigroup(const ModelSpec& spec, const Expr& f,
                                            const std::vector<double>& x, double t,
                                            const HeatConfig& cfg) {
    detail::SemigroupTable table = detail::build_semigroup_table(spec, f, x, t, cfg, false);
    const int d = table.d, n = spec.n;
    const double h = cfg.displacement;
    const long paths = cfg.paths;

    SemigroupEstimate out;
    out.displacement = h;
    auto [m1, se1] = detail::mean_stderr(table.f[0]);
    out.value = detail::labelled("value", m1, se1, cfg);

    std::vector<double> centered(table.f[0].size());
    for (std::size_t p = 0; p < centered.size(); ++p) {
        const double dlt = table.f[0][p] - m1;
        centered[p] = dlt * dlt;
    }
    auto [vmean, vse] = detail::mean_stderr(centered);
    out.variance = detail::labelled("variance", vmean, vse, cfg);

    detail::GradientEstimate full = detail::directional_means(table, h, 0);
    auto [gh, ghse] = detail::squared_norm_estimate(full, 0, n, paths);
    auto [gv, gvse] = detail::squared_norm_estimate(full, n, d, paths);
    out.grad_h_sq = detail::labelled("grad_h_sq", gh, ghse, cfg);
    out.grad_v_sq = detail::labelled("grad_v_sq", gv, gvse, cfg);

    std::vector<double> second(table.f[0].size());
    for (std::size_t p = 0; p < second.size(); ++p) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
            s += (table.f[1 + 4 * a][p] - 2.0 * table.f[0][p] + table.f[2 + 4 * a][p]) / (h * h);
        second[p] = s;
    }
    auto [lmean, lse] = detail::mean_stderr(second);
    out.laplacian_h = detail::labelled("laplacian_h", lmean, lse, cfg);

    detail::GradientEstimate halfg = detail::directional_means(table, h, 1);
    out.grad_h_sq_half = detail::squared_norm_estimate(halfg, 0, n, paths).first;
    out.grad_v_sq_half = detail::squared_norm_estimate(halfg, n, d, paths).first;
    const double hh = 0.5 * h;
    double lhalf = 0.0;
    for (std::size_t p = 0; p < table.f[0].size(); ++p) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
            s += (table.f[3 + 4 * a][p] - 2.0 * table.f[0][p] + table.f[4 + 4 * a][p]) / (hh * hh);
        lhalf += s;
    }
    out.laplacian_h_half = lhalf / static_cast<double>(paths);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient-bound check for the simulated semigroup
// ---------------------------------------------------------------------------

/// Slacks of the semigroup gradient bound. With the curvature constant K and
/// effective dimension N, the proof-derived inequality for the simulated
/// semigroup reads
///
///   |grad Q_t f|^2 + (1/N) (1 - e^{-Kt})/K (Delta_H Q_t f)^2
///       <= e^{-Kt} Q_t(|grad f|^2),
///
/// and the displayed variant carries e^{+Kt} on the right with coefficient
/// (e^{Kt} - 1)/K. (The simulated generator is half the horizontal Laplacian,
/// which turns the operator-time exponent 2Ks into Kt.)  Both slacks
/// (right side minus left side) are reported; the pass criterion keys on the
/// proof-derived form, and the displayed form's verdict is recorded.
struct BECheckResult {
    PathEstimate value;           // Q_t f, for reference
    double gradient_sq = 0.0;     // |grad Q_t f|^2 (full gradient)
    double gradient_sq_se = 0.0;
    double laplacian = 0.0;       // Delta_H Q_t f
    double laplacian_se = 0.0;
    PathEstimate rhs;             // Q_t(|grad f|^2)
    double proof_coefficient = 0.0;
    double displayed_coefficient = 0.0;
    double proof_slack = 0.0;
    double proof_std_error = 0.0;
    double displayed_slack = 0.0;
    double displayed_std_error = 0.0;
    bool proof_holds = false;     // slack >= -3 sigma
    bool displayed_holds = false; // recorded, not a pass criterion
    double K = 0.0, N = 0.0, t = 0.0;
};

inline BECheckResult be_check(const ModelSpec& spec, const Expr& f, const std::vector<double>& x,
                              double t, double K, double N, const HeatConfig& cfg) {
    if (!(N > 0.0)) throw ConfigError("be_check: effective dimension must be positive");
    detail::SemigroupTable table = detail::build_semigroup_table(spec, f, x, t, cfg, true);
    const int d = table.d, n = spec.n;
    const double h = cfg.displacement;
    const long paths = cfg.paths;

    BECheckResult out;
    out.K = K;
    out.N = N;
    out.t = t;
    auto [m1, se1] = detail::mean_stderr(table.f[0]);
    out.value = detail::labelled("value", m1, se1, cfg);

    detail::GradientEstimate g = detail::directional_means(table, h, 0);
    auto [gsq, gse] = detail::squared_norm_estimate(g, 0, d, paths);
    out.gradient_sq = gsq;
    out.gradient_sq_se = gse;

    std::vector<double> second(table.f[0].size());
    for (std::size_t p = 0; p < second.size(); ++p) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
            s += (table.f[1 + 4 * a][p] - 2.0 * table.f[0][p] + table.f[2 + 4 * a][p]) / (h * h);
        second[p] = s;
    }
    auto [lap, lapse] = detail::mean_stderr(second);
    out.laplacian = lap;
    out.laplacian_se = lapse;

    auto [rhs, rhsse] = detail::mean_stderr(table.grad_sq);
    out.rhs = detail::labelled("rhs_gradient_sq", rhs, rhsse, cfg);

    out.proof_coefficient = K == 0.0 ? t : -std::expm1(-K * t) / K;
    out.displayed_coefficient = K == 0.0 ? t : std::expm1(K * t) / K;

    auto slack_of = [&](double weight, double coeff, double* sigma) {
        const double s =
            weight * rhs - gsq - (coeff / N) * lap * lap;
        const double var = weight * weight * rhsse * rhsse + gse * gse +
                           (2.0 * coeff / N * lap) * (2.0 * coeff / N * lap) * lapse * lapse;
        *sigma = std::sqrt(var);
        return s;
    };
    out.proof_slack = slack_of(std::exp(-K * t), out.proof_coefficient, &out.proof_std_error);
    out.displayed_slack =
        slack_of(std::exp(K * t), out.displayed_coefficient, &out.displayed_std_error);
    out.proof_holds = out.proof_slack >= -3.0 * out.proof_std_error;
    out.displayed_holds = out.displayed_slack >= -3.0 * out.displayed_std_error;
    return out;
}

// ---------------------------------------------------------------------------
// Regularization-rate scan
// ---------------------------------------------------------------------------

/// Smallest eigenvalue, over sample points, of the vertical-by-vertical trace
/// form sum_i <J_{Z_l} X_i, J_{Z_k} X_i>.  A positive margin is the uniform
/// step-two generating condition; deeper models are degenerate here.
inline double uniform_step_two_margin(const ModelSpec& spec) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& pt : sample_points(spec, 3, 0x57e9ULL)) {
        Connection cn = build_connection(spec, pt, 3);
        const Frames& F = cn.fr;
        const int m = static_cast<int>(F.Z.size());
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
        // Pair horizontally: the vertical components of the torsion dual see
        // deeper-than-step-two brackets and must not count as generation.
        std::vector<std::vector<JetVector>> jv(m);
        for (int l = 0; l < m; ++l)
            for (const JetVector& Xi : F.X)
                jv[l].push_back(mat_apply(F.PH, j_apply(cn, F.Z[l], Xi)));
        for (int l = 0; l < m; ++l)
            for (int k = l; k < m; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < F.X.size(); ++i)
                    s += metric_dot(F.g, jv[l][i], jv[k][i]).value();
                M(l, k) = M(k, l) = s;
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        margin = std::min(margin, es.eigenvalues().minCoeff());
    }
    return margin;
}

struct RegularizationRow {
    double t = 0.0;
    double r1 = 0.0, r1_se = 0.0; // t |grad_H Q_t f|^2 / Var
    double r2 = 0.0, r2_se = 0.0; // t^2 |grad_V Q_t f|^2 / Var
    double r3 = 0.0, r3_se = 0.0; // t^2 (Delta_H Q_t f)^2 / Var
    double variance = 0.0;
};

struct RegularizationScan {
    std::vector<RegularizationRow> rows;
    double max_r1 = 0.0, max_r2 = 0.0, max_r3 = 0.0;
    double cap = 0.0;
    bool pass = false; // all ratios finite and below the cap
};

inline RegularizationScan regularization_scan(const ModelSpec& spec, const Expr& f,
                                              const std::vector<double>& x,
                                              const std::vector<double>& t_grid,
                                              const HeatConfig& cfg, double cap = 1e3) {
    const double margin = uniform_step_two_margin(spec);
    if (!(margin > 1e-8))
        throw NotStepTwo("model '" + spec.name +
                         "' is not uniformly step-two generating (margin " +
                         std::to_string(margin) + ")");
    if (t_grid.empty()) throw ConfigError("regularization_scan: empty time grid");

    RegularizationScan scan;
    scan.cap = cap;
    bool finite = true;
    for (double t : t_grid) {
        SemigroupEstimate est = estimate_semigroup(spec, f, x, t, cfg);
        RegularizationRow row;
        row.t = t;
        row.variance = est.variance.mean;
        const double var = est.variance.mean;
        auto ratio = [&](double scale, const PathEstimate& num, double* se) {
            if (!(var > 0.0)) {
                *se = std::numeric_limits<double>::infinity();
                return std::numeric_limits<double>::infinity();
            }
            const double r = scale * num.mean / var;
            // Relative errors of numerator and variance combine in quadrature.
            const double rel_num = num.mean != 0.0 ? num.std_error / std::abs(num.mean) : 0.0;
            const double rel_var = est.variance.std_error / var;
            *se = std::abs(r) * std::sqrt(rel_num * rel_num + rel_var * rel_var);
            return r;
        };
        row.r1 = ratio(t, est.grad_h_sq, &row.r1_se);
        row.r2 = ratio(t * t, est.grad_v_sq, &row.r2_se);
        PathEstimate lap_sq = est.laplacian_h;
        lap_sq.mean = est.laplacian_h.mean * est.laplacian_h.mean;
        lap_sq.std_error = 2.0 * std::abs(est.laplacian_h.mean) * est.laplacian_h.std_error;
        row.r3 = ratio(t * t, lap_sq, &row.r3_se);
        finite = finite && std::isfinite(row.r1) && std::isfinite(row.r2) && std::isfinite(row.r3);
        scan.max_r1 = std::max(scan.max_r1, row.r1);
        scan.max_r2 = std::max(scan.max_r2, row.r2);
        scan.max_r3 = std::max(scan.max_r3, row.r3);
        scan.rows.push_back(row);
    }
    scan.pass = finite && scan.max_r1 < cap && scan.max_r2 < cap && scan.max_r3 < cap;
    return scan;
}

// ---------------------------------------------------------------------------
// Spectral-gap estimate from correlation decay
// ---------------------------------------------------------------------------

struct DecayRow {
    double t = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
};

struct Lambda1Estimate {
    std::optional<double> rate; // in horizontal-Laplacian eigenvalue units
    double std_error = 0.0;
    bool degenerate = false;
    std::vector<DecayRow> rows;
};

/// Fit the exponential decay rate of |E[f(g_t)] - mean| over the grid rows
/// and convert to horizontal-Laplacian units (the simulated generator is half
/// the Laplacian, so the fitted slope is doubled).  Degenerate when the
/// signal is inside the noise floor at any grid point.
inline Lambda1Estimate decay_rate_fit(const std::vector<DecayRow>& rows, double stationary_mean) {
    Lambda1Estimate out;
    out.rows = rows;
    if (rows.size() < 2) throw ConfigError("decay fit needs at least two grid times");
    std::vector<double> ts, ys, yse;
    for (const DecayRow& r : rows) {
        const double signal = std::abs(r.mean - stationary_mean);
        if (signal <= std::max(3.0 * r.std_error, 1e-12)) {
            out.degenerate = true;
            return out;
        }
        ts.push_back(r.t);
        ys.push_back(std::log(signal));
        yse.push_back(r.std_error / signal);
    }
    const std::size_t k = ts.size();
    double tbar = 0.0;
    for (double v : ts) tbar += v;
    tbar /= static_cast<double>(k);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sxx += (ts[i] - tbar) * (ts[i] - tbar);
        sxy += (ts[i] - tbar) * ys[i];
    }
    if (!(sxx > 0.0)) throw ConfigError("decay fit needs distinct grid times");
    const double slope = sxy / sxx;
    double var = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double c = (ts[i] - tbar) / sxx;
        var += c * c * yse[i] * yse[i];
    }
    out.rate = -2.0 * slope;
    out.std_error = 2.0 * std::sqrt(var);
    return out;
}

/// Estimate the spectral gap of the horizontal Laplacian on the compact model
/// from the decay of E[f(g_t)] toward the stationary mean of the probe.
inline Lambda1Estimate lambda1_estimate(const ModelSpec& spec, const Expr& f_probe,
                                        const std::vector<double>& x0,
                                        const std::vector<double>& t_grid, const HeatConfig& cfg,
                                        double stationary_mean = 0.0) {
    auto fam = spec.metadata.find("family");
    if (fam == spec.metadata.end() || fam->second != "su2")
        throw NotCompactModel("lambda1_estimate: model '" + spec.name +
                              "' has no stationary law to decay toward");
    if (t_grid.size() < 2) throw ConfigError("lambda1_estimate: need at least two grid times");
    if (static_cast<int>(x0.size()) != spec.dim())
        throw ConfigError("lambda1_estimate: start point has wrong dimension");

    detail::GroupOps ops = detail::resolve_group_ops(spec);
    detail::validate_scheme(spec);
    const double t_max = *std::max_element(t_grid.begin(), t_grid.end());
    if (!(t_max > 0.0)) throw NonpositiveTime("lambda1_estimate: grid times must be positive");
    const double dt = t_max / cfg.steps;

    // Snap each grid time to a step index; record the effective times.
    std::vector<int> marks;
    for (double t : t_grid) {
        int k = static_cast<int>(std::lround(t / dt));
        k = std::max(1, std::min(cfg.steps, k));
        marks.push_back(k);
    }

    detail::Coords start{};
    ops.from_chart(x0.data(), start.data());
    const int d = spec.dim();

    std::vector<std::vector<double>> series(marks.size(),
                                            std::vector<double>(static_cast<std::size_t>(cfg.paths)));
    // Custom walk: the body needs the state at intermediate times, so the
    // shared run_paths helper (endpoint only) does not fit here.
    const double sd = std::sqrt(dt);
    auto run_range = [&](long lo, long hi) {
        const int ss = ops.state_size();
        detail::Coords g, inc, next, coords{};
        std::vector<double> pt(d);
        for (long p = lo; p < hi; ++p) {
            std::mt19937_64 gen(derive_seed(cfg.seed, "heat-path", static_cast<std::uint64_t>(p)));
            std::normal_distribution<double> gauss(0.0, sd);
            std::array<double, 8> noise{};
            std::copy(start.begin(), start.begin() + ss, g.begin());
            for (int k = 1; k <= cfg.steps; ++k) {
                for (int i = 0; i < ops.n; ++i) noise[i] = gauss(gen);
                ops.exp_horizontal(noise.data(), inc.data());
                ops.mul(g.data(), inc.data(), next.data());
                std::copy(next.begin(), next.begin() + ss, g.begin());
                for (std::size_t j = 0; j < marks.size(); ++j)
                    if (marks[j] == k) {
                        ops.to_chart(g.data(), coords.data());
                        pt.assign(coords.begin(), coords.begin() + d);
                        series[j][static_cast<std::size_t>(p)] = f_probe.eval(pt);
                    }
            }
        }
    };
    const int nw = std::min<long>(detail::resolve_workers(cfg.workers), cfg.paths);
    if (nw <= 1) {
        run_range(0, cfg.paths);
    } else {
        std::vector<std::thread> pool;
        const long chunk = (cfg.paths + nw - 1) / nw;
        for (int w = 0; w < nw; ++w) {
            const long lo = w * chunk, hi = std::min<long>(cfg.paths, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // A probe that does not vary along the paths carries no spectral signal.
    const std::vector<double>& last = series.back();
    double lmean = 0.0;
    for (double v : last) lmean += v;
    lmean /= static_cast<double>(last.size());
    double spread = 0.0;
    for (double v : last) spread = std::max(spread, std::abs(v - lmean));
    if (spread < 1e-12) {
        Lambda1Estimate out;
        out.degenerate = true;
        for (std::size_t j = 0; j < marks.size(); ++j)
            out.rows.push_back({marks[j] * dt, lmean, 0.0});
        return out;
    }

    std::vector<DecayRow> rows;
    for (std::size_t j = 0; j < marks.size(); ++j) {
        auto [m, se] = detail::mean_stderr(series[j]);
        rows.push_back({marks[j] * dt, m, se});
    }
    return decay_rate_fit(rows, stationary_mean);
}

} // namespace folib
