#pragma once

// Deterministic reporting and the batch suite driver.
//
// Four suites (verify, cd, heat, compare) evaluate a model and append their
// results to one JSON document plus flat CSV summaries.  Reports are designed
// to be byte-stable: no timestamps, object keys serialize sorted, record
// arrays are emitted in a fixed (identity, point index) order, and every
// numeric value is computed by worker-count-independent reductions, so a
// fixed (config, seed) pair reproduces files exactly.
//
// All randomness flows from the single master seed through tagged streams
// ("verify-points:<model>", "testfn", "heat-path", ...) so suites never
// perturb each other's draws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "folibochner/bochner.hpp"
#include "folibochner/comparison.hpp"
#include "folibochner/heat.hpp"
#include "folibochner/models.hpp"
#include "folibochner/tensors.hpp"

namespace folib {

using nlohmann::json;

/// Bumped whenever a report schema changes shape.
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Shortest exact decimal form used in every CSV cell.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Compact form for labels (grid values like 0.1, 1, 10).
inline std::string format_label(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

namespace detail {

inline void csv_append(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    out += '\n';
}

inline json matrix_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
    json row = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
    return row;
}

/// Finite doubles pass through; infinities become tagged strings so they
/// survive JSON (which has no literal for them) deterministically.
inline json extended_real(double x) {
    if (std::isinf(x)) return x > 0 ? json("infinity") : json("-infinity");
    return json(x);
}

} // namespace detail

// ---------------------------------------------------------------------------
// JSON converters
// ---------------------------------------------------------------------------

inline json to_json(const IdentityResult& r) {
    return json{{"identity", r.identity}, {"model", r.model},   {"function", r.function},
                {"point", r.point},       {"lhs", r.lhs},       {"rhs", r.rhs},
                {"residual", r.residual}, {"scale", r.scale},   {"tol", r.tol},
                {"lower_bound", r.lower_bound},                 {"pass", r.pass}};
}

inline json to_json(const TensorReport& rep) {
    return json{{"point", rep.point},
                {"n", rep.n},
                {"m", rep.m},
                {"ric_h", detail::matrix_json(rep.ric_h)},
                {"delta_tor", detail::matrix_json(rep.delta_tor)},
                {"tor_pair_h", detail::matrix_json(rep.tor_pair_h)},
                {"tau", detail::matrix_json(rep.tau)},
                {"iota", detail::vector_json(rep.iota)},
                {"jj_h", detail::matrix_json(rep.jj_h)},
                {"sym_grad_h", detail::matrix_json(rep.sym_grad_h)},
                {"tor_mean", detail::matrix_json(rep.tor_mean)},
                {"tor_v_pair_v", detail::matrix_json(rep.tor_v_pair_v)},
                {"tor_v_pair_h", detail::matrix_json(rep.tor_v_pair_h)},
                {"effective_ricci", detail::matrix_json(rep.effective_ricci)},
                {"mean_curvature", detail::vector_json(rep.mean_curvature)}};
}

inline json to_json(const CDParams& cd) {
    return json{{"rho1", cd.rho1},
                {"rho2", cd.rho2},
                {"rho3", cd.rho3},
                {"rho4", cd.rho4},
                {"kappa", cd.kappa},
                {"N", cd.N},
                {"lambda", detail::extended_real(cd.lambda)},
                {"K", cd.K},
                {"provenance", cd.provenance},
                {"rho1_per_sample", cd.rho1_per_sample},
                {"rho2_per_sample", cd.rho2_per_sample},
                {"rho3_per_sample", cd.rho3_per_sample},
                {"rho4_per_sample", cd.rho4_per_sample},
                {"kappa_per_sample", cd.kappa_per_sample}};
}

inline json to_json(const Classification& cl) {
    return json{{"bundle_like", cl.bundle_like},
                {"totally_geodesic", cl.totally_geodesic},
                {"minimal", cl.minimal},
                {"vertically_integrable", cl.vertically_integrable},
                {"bracket_generating", cl.bracket_generating},
                {"step", cl.step},
                {"bundle_like_residual", cl.bundle_like_residual},
                {"bundle_like_torsion_residual", cl.bundle_like_torsion_residual},
                {"totally_geodesic_residual", cl.totally_geodesic_residual},
                {"totally_geodesic_torsion_residual", cl.totally_geodesic_torsion_residual},
                {"minimal_residual", cl.minimal_residual},
                {"integrability_residual", cl.integrability_residual}};
}

inline json to_json(const EigenvalueBounds& eig) {
    return json{{"simple", eig.simple},
                {"cd", eig.cd ? json(*eig.cd) : json(nullptr)},
                {"deficit", eig.deficit}};
}

inline json to_json(const PathEstimate& e) {
    return json{{"quantity", e.quantity}, {"mean", e.mean}, {"std_error", e.std_error},
                {"paths", e.paths},       {"steps", e.steps}, {"seed", e.seed}};
}

inline json to_json(const BECheckResult& b) {
    return json{{"t", b.t},
                {"K", b.K},
                {"N", b.N},
                {"value", to_json(b.value)},
                {"rhs", to_json(b.rhs)},
                {"gradient_sq", b.gradient_sq},
                {"gradient_sq_se", b.gradient_sq_se},
                {"laplacian", b.laplacian},
                {"laplacian_se", b.laplacian_se},
                {"proof_coefficient", b.proof_coefficient},
                {"proof_slack", b.proof_slack},
                {"proof_std_error", b.proof_std_error},
                {"proof_holds", b.proof_holds},
                {"displayed_coefficient", b.displayed_coefficient},
                {"displayed_slack", b.displayed_slack},
                {"displayed_std_error", b.displayed_std_error},
                {"displayed_holds", b.displayed_holds}};
}

inline json to_json(const RegularizationScan& s) {
    json rows = json::array();
    for (const RegularizationRow& r : s.rows)
        rows.push_back(json{{"t", r.t},
                            {"r1", r.r1},
                            {"r1_se", r.r1_se},
                            {"r2", r.r2},
                            {"r2_se", r.r2_se},
                            {"r3", r.r3},
                            {"r3_se", r.r3_se},
                            {"variance", r.variance}});
    return json{{"rows", std::move(rows)}, {"max_r1", s.max_r1}, {"max_r2", s.max_r2},
                {"max_r3", s.max_r3},      {"cap", s.cap},       {"pass", s.pass}};
}

inline json to_json(const Lambda1Estimate& lam) {
    json rows = json::array();
    for (const DecayRow& r : lam.rows)
        rows.push_back(json{{"t", r.t}, {"mean", r.mean}, {"std_error", r.std_error}});
    return json{{"rate", lam.rate ? json(*lam.rate) : json(nullptr)},
                {"std_error", lam.std_error},
                {"degenerate", lam.degenerate},
                {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Model resolution
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<Expr>> parse_expr_rows(const json& arr, const std::string& what) {
    if (!arr.is_array()) throw ModelError(what + " must be an array of arrays");
    std::vector<std::vector<Expr>> out;
    for (const auto& row : arr) {
        if (!row.is_array()) throw ModelError(what + " rows must be arrays");
        std::vector<Expr> r;
        for (const auto& cell : row) {
            if (cell.is_number()) {
                r.push_back(Expr::c(cell.get<double>()));
            } else if (cell.is_string()) {
                try {
                    r.push_back(Expr::parse(cell.get<std::string>()));
                } catch (const Error& e) {
                    throw ModelError(what + ": bad expression '" + cell.get<std::string>() +
                                     "': " + e.what());
                }
            } else {
                throw ModelError(what + " entries must be numbers or expression strings");
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace detail

/// Load a model description from a JSON file.
///
/// Schema: {"name": str, "n": int, "m": int, "frame" | "metric": rows of
/// expression strings or numbers, "vertical_span": rows (metric models),
/// "params": object}.  A file carrying only {"name", "params"} refers to a
/// built-in constructor with numeric parameters inlined; a custom spec may
/// put "sample_box": [[lo, hi], ...] inside "params".
inline ModelSpec load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model spec file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ModelError("model spec '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ModelError("model spec '" + path + "' must be a JSON object");
    static const std::set<std::string> allowed = {"name", "n",             "m",     "frame",
                                                  "metric", "vertical_span", "params"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ModelError("model spec '" + path + "': unknown field '" + it.key() + "'");
    if (!j.contains("name") || !j["name"].is_string())
        throw ModelError("model spec '" + path + "' needs a string field 'name'");
    const std::string name = j["name"].get<std::string>();

    const bool custom = j.contains("frame") || j.contains("metric");
    if (!custom) {
        std::map<std::string, double> params;
        if (j.contains("params")) {
            if (!j["params"].is_object())
                throw ModelError("model spec '" + path + "': 'params' must be an object");
            for (const auto& [k, v] : j["params"].items()) {
                if (!v.is_number())
                    throw ModelError("model spec '" + path + "': parameter '" + k +
                                     "' must be numeric");
                params[k] = v.get<double>();
            }
        }
        return build_builtin(name, params);
    }

    ModelSpec spec;
    spec.name = name;
    if (!j.contains("n") || !j["n"].is_number_integer() || !j.contains("m") ||
        !j["m"].is_number_integer())
        throw ModelError("model spec '" + path + "' needs integer fields 'n' and 'm'");
    spec.n = j["n"].get<int>();
    spec.m = j["m"].get<int>();
    if (j.contains("frame")) spec.frame = detail::parse_expr_rows(j["frame"], path + ": frame");
    if (j.contains("metric")) spec.metric = detail::parse_expr_rows(j["metric"], path + ": metric");
    if (j.contains("vertical_span"))
        spec.vertical = detail::parse_expr_rows(j["vertical_span"], path + ": vertical_span");
    if (j.contains("params")) {
        if (!j["params"].is_object())
            throw ModelError("model spec '" + path + "': 'params' must be an object");
        for (const auto& [k, v] : j["params"].items()) {
            if (k == "sample_box") {
                if (!v.is_array())
                    throw ModelError("model spec '" + path +
                                     "': sample_box must be an array of [lo, hi] pairs");
                spec.sample_box.clear();
                for (const auto& pair : v) {
                    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() ||
                        !pair[1].is_number())
                        throw ModelError("model spec '" + path +
                                         "': sample_box entries must be [lo, hi] pairs");
                    spec.sample_box.emplace_back(pair[0].get<double>(), pair[1].get<double>());
                }
            } else {
                throw ModelError("model spec '" + path + "': unknown custom parameter '" + k +
                                 "' (only 'sample_box' is accepted)");
            }
        }
    }
    if (spec.sample_box.empty() && spec.dim() > 0)
        spec.sample_box.assign(spec.dim(), {-0.75, 0.75});
    spec.metadata["family"] = "custom";
    spec.validate();
    return spec;
}

/// A built-in model name, or a path to a model spec file.
inline ModelSpec resolve_model(const std::string& ref) {
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), ref) != names.end()) return build_builtin(ref);
    std::error_code ec;
    if (std::filesystem::exists(ref, ec)) return load_model_file(ref);
    throw ModelError("model '" + ref + "' is neither a built-in model nor a readable spec file");
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::vector<std::string> models;  // built-in names or spec file paths; empty = all built-ins
    std::string suite = "all";        // verify | cd | heat | compare | all
    std::uint64_t seed = 1;           // master seed; every stream derives from it
    double tol = 1e-8;                // relative residual tolerance for identity checks
    int points = 10;                  // sample points per model
    long paths = 20000;               // diffusion paths (heat suite)
    int steps = 200;                  // time steps per path (heat suite)
    std::string out = "reports";      // output directory
    int workers = 0;                  // 0 = FOLIBOCHNER_THREADS or 1
    bool extract = false;             // cd: print extracted constants to stdout

    void validate() const {
        static const std::set<std::string> suites = {"verify", "cd", "heat", "compare", "all"};
        if (!suites.count(suite))
            throw ConfigError("unknown suite '" + suite +
                              "' (expected verify, cd, heat, compare, or all)");
        if (points < 1) throw ConfigError("points must be >= 1");
        if (paths < 1) throw ConfigError("paths must be >= 1");
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (!(tol > 0.0)) throw ConfigError("tol must be positive");
        if (workers < 0) throw ConfigError("workers must be >= 0");
    }
};

/// Parse a configuration object; unknown fields are rejected.
inline RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
    static const std::set<std::string> allowed = {"models", "model", "suite",   "seed",
                                                  "tol",    "points", "paths",  "steps",
                                                  "out",    "workers"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown configuration field '" + it.key() + "'");

    RunConfig cfg;
    auto need = [&](const char* key, bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("configuration field '") + key + "' must be " + what);
    };
    if (j.contains("models")) {
        need("models", j["models"].is_array(), "an array of strings");
        for (const auto& m : j["models"]) {
            need("models", m.is_string(), "an array of strings");
            cfg.models.push_back(m.get<std::string>());
        }
    }
    if (j.contains("model")) {
        need("model", j["model"].is_string(), "a string");
        cfg.models.push_back(j["model"].get<std::string>());
    }
    if (j.contains("suite")) {
        need("suite", j["suite"].is_string(), "a string");
        cfg.suite = j["suite"].get<std::string>();
    }
    if (j.contains("seed")) {
        need("seed", j["seed"].is_number_integer(), "an integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("tol")) {
        need("tol", j["tol"].is_number(), "a number");
        cfg.tol = j["tol"].get<double>();
    }
    if (j.contains("points")) {
        need("points", j["points"].is_number_integer(), "an integer");
        cfg.points = j["points"].get<int>();
    }
    if (j.contains("paths")) {
        need("paths", j["paths"].is_number_integer(), "an integer");
        cfg.paths = j["paths"].get<long>();
    }
    if (j.contains("steps")) {
        need("steps", j["steps"].is_number_integer(), "an integer");
        cfg.steps = j["steps"].get<int>();
    }
    if (j.contains("out")) {
        need("out", j["out"].is_string(), "a string");
        cfg.out = j["out"].get<std::string>();
    }
    if (j.contains("workers")) {
        need("workers", j["workers"].is_number_integer(), "an integer");
        cfg.workers = j["workers"].get<int>();
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Suite plumbing
// ---------------------------------------------------------------------------

namespace detail {

/// Run fn(0..count-1) over a worker pool.  Each index writes only its own
/// slot, so the merged result is independent of the partitioning.
template <class Fn>
inline void parallel_for(std::size_t count, int workers, Fn&& fn) {
    const int nw = resolve_workers(workers);
    if (nw <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t chunk = (count + nw - 1) / static_cast<std::size_t>(nw);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nw));
    for (int w = 0; w < nw; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

struct SuiteResult {
    json doc = json::object();
    json failures = json::array();
    int checks = 0;

    std::vector<std::vector<std::string>> summary_rows;  // model,identity,count,abs,rel,pass
    std::vector<std::vector<std::string>> heat_rows;     // t,estimate,stderr,slack
    std::vector<std::vector<std::string>> bounds_rows;   // model,K,N,r/params,bound

    void tally(const char* suite, const std::string& model, const std::string& check, bool pass,
               json detail_obj = json::object()) {
        ++checks;
        if (!pass) {
            detail_obj["suite"] = suite;
            detail_obj["model"] = model;
            detail_obj["check"] = check;
            failures.push_back(std::move(detail_obj));
        }
    }
};

inline json failure_detail(const IdentityResult& r) {
    return json{{"function", r.function}, {"point", r.point},   {"lhs", r.lhs},
                {"rhs", r.rhs},           {"residual", r.residual}, {"scale", r.scale}};
}

inline std::string family_of(const ModelSpec& spec) {
    auto it = spec.metadata.find("family");
    return it == spec.metadata.end() ? std::string("custom") : it->second;
}

/// Extract constants plus the curvature bound K: the vertical weight is
/// dropped (lambda = infinity) when iota vanishes, else fixed at lambda = 1.
inline CDParams extract_with_curvature(const ModelSpec& spec,
                                       const std::vector<std::vector<double>>& pts) {
    CDParams cd = cd_constants_extract(spec, pts);
    try {
        const double inf = std::numeric_limits<double>::infinity();
        cd.K = effective_ricci_lower_bound(spec, pts, inf);
        cd.lambda = inf;
    } catch (const InfiniteLambdaWithNonzeroIota&) {
        cd.lambda = 1.0;
        cd.K = effective_ricci_lower_bound(spec, pts, 1.0);
    }
    return cd;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Identity verification: Bochner identities, lemma identities, and the
/// frame-vs-divergence Laplacian oracle over a seeded (function, point) grid.
/// Models whose vertical planes do not close under brackets only admit the
/// structural trace identity, so the grid reduces to that check for them.
inline detail::SuiteResult run_verify_suite(const ModelSpec& spec, const RunConfig& cfg) {
    detail::SuiteResult sr;
    const Classification cl =
        classify(spec, 5, derive_seed(cfg.seed, "classify:" + spec.name, 0));
    const bool integrable = cl.vertically_integrable;

    const auto fns = test_functions(spec.dim(), 20, cfg.seed);
    const auto pts =
        sample_points(spec, cfg.points, derive_seed(cfg.seed, "verify-points:" + spec.name, 0));

    std::vector<std::vector<IdentityResult>> slots(pts.size());
    detail::parallel_for(pts.size(), cfg.workers, [&](std::size_t pi) {
        Connection cn = build_connection(spec, pts[pi], 4);
        std::vector<IdentityResult> rs;
        for (const TestFunction& tf : fns) {
            if (integrable) {
                for (auto& r : bochner_residuals(cn, tf, cfg.tol)) rs.push_back(std::move(r));
                for (auto& r : lemma_checks(cn, tf, cfg.tol)) rs.push_back(std::move(r));
                LaplacianPair lp = horizontal_laplacian(cn, tf.f);
                IdentityResult r;
                r.identity = "laplacian_oracle";
                r.function = tf.label;
                r.point = pts[pi];
                r.lhs = lp.frame;
                r.rhs = lp.divergence;
                r.scale = std::abs(lp.frame) + std::abs(lp.divergence);
                r.finish(1e-9);
                rs.push_back(std::move(r));
            } else {
                for (auto& r : lemma_checks(cn, tf, cfg.tol))
                    if (r.identity == "mean_curvature_vertical_trace") rs.push_back(std::move(r));
            }
        }
        slots[pi] = std::move(rs);
    });

    std::vector<IdentityResult> recs;
    for (auto& slot : slots)
        for (auto& r : slot) {
            r.model = spec.name;
            recs.push_back(std::move(r));
        }
    std::stable_sort(recs.begin(), recs.end(),
                     [](const IdentityResult& a, const IdentityResult& b) {
                         return a.identity < b.identity;
                     });

    struct Agg {
        int count = 0;
        double max_abs = 0.0, max_rel = 0.0;
        bool all_pass = true;
    };
    std::map<std::string, Agg> by_identity;
    json records = json::array();
    for (const IdentityResult& r : recs) {
        records.push_back(to_json(r));
        Agg& a = by_identity[r.identity];
        ++a.count;
        a.max_abs = std::max(a.max_abs, std::abs(r.residual));
        a.max_rel = std::max(a.max_rel, std::abs(r.residual) / std::max(r.scale, 1.0));
        a.all_pass = a.all_pass && r.pass;
        sr.tally("verify", spec.name, r.identity, r.pass, detail::failure_detail(r));
    }
    double worst_rel = 0.0;
    for (const auto& [identity, a] : by_identity) {
        worst_rel = std::max(worst_rel, a.max_rel);
        sr.summary_rows.push_back({spec.name, identity, std::to_string(a.count),
                                   format_double(a.max_abs), format_double(a.max_rel),
                                   a.all_pass ? "1" : "0"});
    }

    sr.doc["mode"] = integrable ? "full" : "structure_only";
    sr.doc["functions"] = static_cast<int>(fns.size());
    sr.doc["points"] = static_cast<int>(pts.size());
    sr.doc["max_rel_residual"] = worst_rel;
    sr.doc["records"] = std::move(records);
    return sr;
}

/// Curvature-dimension suite: constant extraction, classification flags with
/// the two-route characterization agreement, converse constraint slacks, the
/// spectral-gap bound, and inequality slacks over a (function, point, nu) grid.
inline detail::SuiteResult run_cd_suite(const ModelSpec& spec, const RunConfig& cfg) {
    detail::SuiteResult sr;
    const auto pts =
        sample_points(spec, cfg.points, derive_seed(cfg.seed, "cd-points:" + spec.name, 0));
    const CDParams cd = detail::extract_with_curvature(spec, pts);
    const Classification cl =
        classify(spec, 5, derive_seed(cfg.seed, "classify:" + spec.name, 0));
    const EigenvalueBounds eig = eigenvalue_bounds(cd);

    // Two independent measurements back each structural flag; they must agree.
    const double ctol = 1e-8;
    const bool bundle_agree =
        (cl.bundle_like_residual < ctol) == (cl.bundle_like_torsion_residual < ctol);
    const bool geodesic_agree =
        (cl.totally_geodesic_residual < ctol) == (cl.totally_geodesic_torsion_residual < ctol);
    sr.tally("cd", spec.name, "bundle_like_characterizations_agree", bundle_agree,
             json{{"metric_route", cl.bundle_like_residual},
                  {"torsion_route", cl.bundle_like_torsion_residual}});
    sr.tally("cd", spec.name, "totally_geodesic_characterizations_agree", geodesic_agree,
             json{{"metric_route", cl.totally_geodesic_residual},
                  {"torsion_route", cl.totally_geodesic_torsion_residual}});

    // Converse direction: the extracted constants must actually bound the
    // quadratic forms at every sample.
    json converse = json::array();
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
        const CDSlack s = cd_converse_slacks(tensor_report(spec, pts[pi], 4), cd);
        const double worst = s.worst();
        const bool ok = worst >= -1e-8;
        converse.push_back(json{{"point_index", pi},
                                {"rho1_slack", s.rho1_slack},
                                {"kappa_slack", s.kappa_slack},
                                {"rho2_slack", s.rho2_slack},
                                {"rho3_slack", s.rho3_slack},
                                {"rho4_slack", s.rho4_slack},
                                {"worst", worst},
                                {"pass", ok}});
        sr.tally("cd", spec.name, "converse_constraints", ok, json{{"worst", worst}});
    }

    // Inequality slacks over the grid.  Each inequality is enforced only where
    // its hypothesis holds; out-of-hypothesis slacks are still computed and
    // written to the report, but marked informational rather than tallied.
    //   - gradient_bound drops the mean-curvature contribution from the
    //     Hessian trace, so it is a theorem only on minimal foliations;
    //   - two_parameter is asserted with candidate constants read off the
    //     converse constraints, which is justified on bundle-like minimal
    //     models (the invariant group and compact catalog geometries);
    //   - dimensional always holds: its curvature constant K is extracted at
    //     the very points where the slack is evaluated.
    const bool tally_gradient = cl.minimal;
    const bool tally_two_parameter = cl.bundle_like && cl.minimal;
    const auto fns = test_functions(spec.dim(), 20, cfg.seed);
    const std::vector<double> nus = {0.1, 0.3, 1.0, 3.0, 10.0};
    std::vector<std::vector<IdentityResult>> slots(pts.size());
    detail::parallel_for(pts.size(), cfg.workers, [&](std::size_t pi) {
        Connection cn = build_connection(spec, pts[pi], 4);
        std::vector<IdentityResult> rs;
        for (const TestFunction& tf : fns) {
            auto grid = cd_check_grid(cn, tf, cd, nus, cfg.tol);
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                if (nus[gi] == 1.0) {
                    rs.push_back(std::move(grid[gi].gradient_bound));
                    rs.push_back(std::move(grid[gi].dimensional));
                }
                IdentityResult two = std::move(grid[gi].two_parameter);
                two.identity += "[nu=" + format_label(nus[gi]) + "]";
                rs.push_back(std::move(two));
            }
        }
        slots[pi] = std::move(rs);
    });

    std::vector<IdentityResult> recs;
    for (auto& slot : slots)
        for (auto& r : slot) {
            r.model = spec.name;
            recs.push_back(std::move(r));
        }
    std::stable_sort(recs.begin(), recs.end(),
                     [](const IdentityResult& a, const IdentityResult& b) {
                         return a.identity < b.identity;
                     });
    json records = json::array();
    for (const IdentityResult& r : recs) {
        const bool informational =
            (!tally_gradient && r.identity == "gradient_bound") ||
            (!tally_two_parameter && r.identity.starts_with("two_parameter"));
        json jr = to_json(r);
        if (informational) jr["tallied"] = false;
        records.push_back(std::move(jr));
        if (!informational)
            sr.tally("cd", spec.name, r.identity, r.pass, detail::failure_detail(r));
    }

    sr.doc["constants"] = to_json(cd);
    sr.doc["classification"] = to_json(cl);
    sr.doc["eigenvalue"] = to_json(eig);
    sr.doc["inequality_scope"] =
        json{{"gradient_bound", tally_gradient ? "tallied" : "informational"},
             {"dimensional", "tallied"},
             {"two_parameter", tally_two_parameter ? "tallied" : "informational"}};
    sr.doc["tensor_report"] = to_json(tensor_report(spec, pts.front(), 4));
    sr.doc["converse"] = std::move(converse);
    sr.doc["records"] = std::move(records);
    return sr;
}

/// Heat suite: Monte Carlo semigroup checks on models with exact group
/// arithmetic.  Models without it are reported as skipped, not failed.
inline detail::SuiteResult run_heat_suite(const ModelSpec& spec, const RunConfig& cfg) {
    detail::SuiteResult sr;
    try {
        detail::resolve_group_ops(spec);
    } catch (const SchemeUnsupported& e) {
        sr.doc["skipped"] = e.what();
        return sr;
    }

    HeatConfig hc;
    hc.paths = cfg.paths;
    hc.steps = cfg.steps;
    hc.seed = cfg.seed;
    hc.workers = cfg.workers;

    const int d = spec.dim();
    std::vector<double> x0(d, 0.0);
    for (int a = 0; a < d; ++a)
        x0[a] = 0.5 * (spec.sample_box[a].first + spec.sample_box[a].second);
    const std::vector<double> times = {0.25, 0.5, 1.0};
    const std::string family = detail::family_of(spec);

    const auto kpts =
        sample_points(spec, 3, derive_seed(cfg.seed, "heat-constants:" + spec.name, 0));
    const CDParams cd = detail::extract_with_curvature(spec, kpts);
    const double K = cd.K;
    const double N = spec.n;

    sr.doc["config"] = json{{"paths", hc.paths},
                            {"steps", hc.steps},
                            {"seed", hc.seed},
                            {"displacement", hc.displacement},
                            {"times", times}};
    sr.doc["constants"] = json{{"K", K}, {"N", N}};
    sr.doc["start"] = x0;

    // Unit mass must survive exactly: the estimator averages f = 1.
    {
        SemigroupEstimate mass = estimate_semigroup(spec, Expr::c(1.0), x0, 0.5, hc);
        const bool ok = mass.value.mean == 1.0 && mass.value.std_error == 0.0;
        sr.doc["mass"] = json{{"estimate", to_json(mass.value)}, {"pass", ok}};
        sr.tally("heat", spec.name, "mass_conservation", ok,
                 json{{"mean", mass.value.mean}, {"std_error", mass.value.std_error}});
    }

    // The first chart coordinate of a nilpotent or abelian model is a
    // standard Brownian motion, so its second moment from the identity is t.
    if (family == "flat" || family == "carnot") {
        json rows = json::array();
        const std::vector<double> origin(d, 0.0);
        for (double t : times) {
            SemigroupEstimate est =
                estimate_semigroup(spec, Expr::var(0) * Expr::var(0), origin, t, hc);
            const bool ok = std::abs(est.value.mean - t) <= 3.0 * est.value.std_error;
            rows.push_back(json{{"t", t},
                                {"estimate", est.value.mean},
                                {"std_error", est.value.std_error},
                                {"target", t},
                            {"pass", ok}});
            sr.tally("heat", spec.name, "second_moment[t=" + format_label(t) + "]", ok,
                     json{{"estimate", est.value.mean}, {"std_error", est.value.std_error},
                          {"target", t}});
        }
        sr.doc["second_moment"] = std::move(rows);
    } else {
        sr.doc["second_moment"] =
            json{{"skipped", "chart coordinates are not martingales on a curved model"}};
    }

    // Semigroup gradient bound at the proof-derived weight; the displayed
    // variant is evaluated and recorded but never failed.
    struct Probe {
        Expr f;
        std::string label;
    };
    const std::vector<Probe> probes = {
        {Expr::var(0), "x0"},
        {Expr::var(d - 1), "x" + std::to_string(d - 1)},
        {Expr::fun(Expr::Fn::Sin, Expr::var(0)), "sin(x0)"}};
    json be_rows = json::array();
    int displayed_violations = 0;
    for (const Probe& probe : probes) {
        for (double t : times) {
            BECheckResult b = be_check(spec, probe.f, x0, t, K, N, hc);
            json row = to_json(b);
            row["function"] = probe.label;
            be_rows.push_back(std::move(row));
            if (!b.displayed_holds) ++displayed_violations;
            sr.tally("heat", spec.name,
                     "gradient_bound[" + probe.label + ",t=" + format_label(t) + "]",
                     b.proof_holds,
                     json{{"slack", b.proof_slack}, {"std_error", b.proof_std_error}});
            sr.heat_rows.push_back({format_double(b.t), format_double(b.value.mean),
                                    format_double(b.value.std_error),
                                    format_double(b.proof_slack)});
        }
    }
    sr.doc["gradient_bound"] = std::move(be_rows);
    sr.doc["displayed_form_violations"] = displayed_violations;

    // Regularization ratios need the step-two generating condition.
    const double margin = uniform_step_two_margin(spec);
    sr.doc["step_two_margin"] = margin;
    if (margin > 1e-8) {
        RegularizationScan scan =
            regularization_scan(spec, Expr::var(d - 1), x0, {0.1, 0.5, 1.0}, hc);
        sr.doc["regularization"] = to_json(scan);
        sr.tally("heat", spec.name, "regularization_ratios", scan.pass,
                 json{{"max_r1", scan.max_r1}, {"max_r2", scan.max_r2},
                      {"max_r3", scan.max_r3}});
    } else {
        sr.doc["regularization"] = json{{"skipped", "not uniformly step-two generating"}};
    }

    // Spectral gap on the compact model; informational (warn-only).
    if (family == "su2") {
        Expr r2 = Expr::c(0.0);
        for (int a = 0; a < d; ++a) r2 = r2 + Expr::var(a) * Expr::var(a);
        Expr probe = Expr::fun(Expr::Fn::Cos, Expr::fun(Expr::Fn::Sqrt, r2));
        Lambda1Estimate lam =
            lambda1_estimate(spec, probe, x0, {0.3, 0.6, 0.9, 1.2}, hc);
        const EigenvalueBounds eig = eigenvalue_bounds(cd);
        json gap = to_json(lam);
        gap["cd_lower_bound"] = eig.cd ? json(*eig.cd) : json(nullptr);
        bool warn = false;
        if (lam.rate && eig.cd) warn = *lam.rate < *eig.cd - 2.0 * lam.std_error;
        gap["warn"] = warn;
        sr.doc["spectral_gap"] = std::move(gap);
    }
    return sr;
}

/// Comparison suite: radial bounds from the extracted curvature constants,
/// the diameter bound for positive curvature, the spectral-gap bounds, and
/// the flat-model radial check.
inline detail::SuiteResult run_compare_suite(const ModelSpec& spec, const RunConfig& cfg) {
    detail::SuiteResult sr;
    const auto pts =
        sample_points(spec, cfg.points, derive_seed(cfg.seed, "compare-points:" + spec.name, 0));
    const CDParams cd = detail::extract_with_curvature(spec, pts);
    const double N = dimension_parameter(spec.n, cd.lambda);
    const EigenvalueBounds eig = eigenvalue_bounds(cd);

    sr.doc["constants"] = to_json(cd);
    sr.doc["eigenvalue"] = to_json(eig);
    sr.doc["effective_dimension"] = N;

    json radial = json::array();
    for (double r : {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}) {
        double bound;
        try {
            bound = comparison_bound(cd.K, N, r);
        } catch (const RadiusBeyondConjugate&) {
            continue;  // rows past the conjugate radius carry no bound
        }
        radial.push_back(json{{"K", cd.K}, {"N", N}, {"r", r}, {"bound", bound}});
        sr.bounds_rows.push_back({spec.name, format_double(cd.K), format_double(N),
                                  format_double(r), format_double(bound)});
    }
    sr.doc["radial_bounds"] = std::move(radial);

    if (cd.K > 0.0) {
        const double diam = diameter_bound(cd.K, N);
        sr.doc["diameter"] = diam;
        sr.bounds_rows.push_back(
            {spec.name, format_double(cd.K), format_double(N), "diameter", format_double(diam)});
    } else {
        sr.doc["diameter"] = nullptr;
    }

    // The Laplacian comparison must degrade continuously through K = 0.
    {
        const double r = 1.0;
        const double up = comparison_bound(1e-8, N, r);
        const double down = comparison_bound(-1e-8, N, r);
        const double drift = std::max(std::abs(up - N / r), std::abs(down - N / r));
        const bool ok = drift <= 1e-6;
        sr.doc["continuity_at_zero"] = json{{"drift", drift}, {"pass", ok}};
        sr.tally("compare", spec.name, "continuity_at_zero", ok, json{{"drift", drift}});
    }

    if (detail::family_of(spec) == "flat") {
        const double worst = flat_product_check(spec.n, spec.m, pts);
        const bool ok = worst <= 1e-10;
        sr.doc["flat_radial_check"] = json{{"max_violation", worst}, {"pass", ok}};
        sr.tally("compare", spec.name, "flat_radial_bound", ok, json{{"max_violation", worst}});
    }
    return sr;
}

// ---------------------------------------------------------------------------
// Assembly, emission, and the driver
// ---------------------------------------------------------------------------

struct RunReport {
    json doc;
    json failures = json::array();
    std::string summary_csv, heat_csv, bounds_csv;
    bool has_verify = false, has_heat = false, has_compare = false;
    int checks = 0;

    bool all_pass() const { return failures.empty(); }
};

/// Run the selected suites on the selected models and assemble the report
/// document plus CSV summaries.  No files are touched.
inline RunReport build_report(const RunConfig& cfg) {
    cfg.validate();
    std::vector<std::string> refs = cfg.models;
    if (refs.empty()) refs = builtin_names();

    std::vector<ModelSpec> specs;
    specs.reserve(refs.size());
    for (const std::string& ref : refs) specs.push_back(resolve_model(ref));
    // Duplicate names would collide as object keys; disambiguate in order.
    std::map<std::string, int> seen;
    for (ModelSpec& spec : specs) {
        const int k = ++seen[spec.name];
        if (k > 1) spec.name += "#" + std::to_string(k);
    }

    RunReport rr;
    rr.doc["schema_version"] = kSchemaVersion;
    rr.doc["config"] = json{{"models", refs},     {"suite", cfg.suite}, {"seed", cfg.seed},
                            {"tol", cfg.tol},     {"points", cfg.points},
                            {"paths", cfg.paths}, {"steps", cfg.steps}};
    rr.doc["suites"] = json::object();

    const auto want = [&](const char* s) { return cfg.suite == "all" || cfg.suite == s; };

    std::string summary = "model,identity,count,max_abs_residual,max_rel_residual,all_pass\n";
    std::string heat = "t,estimate,stderr,slack\n";
    std::string bounds = "model,K,N,r/params,bound\n";

    const auto absorb = [&](const char* suite, const ModelSpec& spec,
                            detail::SuiteResult&& sres) {
        sres.doc["checks"] = sres.checks;
        sres.doc["failed"] = sres.failures.size();
        rr.doc["suites"][suite][spec.name] = std::move(sres.doc);
        for (auto& f : sres.failures) rr.failures.push_back(std::move(f));
        rr.checks += sres.checks;
        for (const auto& row : sres.summary_rows) detail::csv_append(summary, row);
        for (const auto& row : sres.heat_rows) detail::csv_append(heat, row);
        for (const auto& row : sres.bounds_rows) detail::csv_append(bounds, row);
    };

    if (want("verify")) {
        rr.has_verify = true;
        for (const ModelSpec& spec : specs) absorb("verify", spec, run_verify_suite(spec, cfg));
    }
    if (want("cd"))
        for (const ModelSpec& spec : specs) absorb("cd", spec, run_cd_suite(spec, cfg));
    if (want("heat")) {
        rr.has_heat = true;
        for (const ModelSpec& spec : specs) absorb("heat", spec, run_heat_suite(spec, cfg));
    }
    if (want("compare")) {
        rr.has_compare = true;
        for (const ModelSpec& spec : specs) absorb("compare", spec, run_compare_suite(spec, cfg));
    }

    rr.doc["summary"] = json{{"checks", rr.checks},
                             {"failures", rr.failures.size()},
                             {"pass", rr.failures.empty()}};
    rr.summary_csv = std::move(summary);
    rr.heat_csv = std::move(heat);
    rr.bounds_csv = std::move(bounds);
    return rr;
}

/// Write report.json, failures.json, and the CSV summaries for the suites
/// that ran.  Returns the paths written.
inline std::vector<std::string> emit_report(const RunReport& rr, const std::string& out_dir) {
    if (!rr.doc.contains("suites") || rr.doc["suites"].empty())
        throw IoError("emit_report: no suite results to write");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

    std::vector<std::string> written;
    const auto write = [&](const std::string& name, const std::string& content) {
        const std::filesystem::path p = std::filesystem::path(out_dir) / name;
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
        os << content;
        os.flush();
        if (!os) throw IoError("failed writing '" + p.string() + "'");
        written.push_back(p.string());
    };
    write("report.json", rr.doc.dump(2) + "\n");
    write("failures.json", rr.failures.dump(2) + "\n");
    if (rr.has_verify) write("summary.csv", rr.summary_csv);
    if (rr.has_heat) write("heat.csv", rr.heat_csv);
    if (rr.has_compare) write("bounds.csv", rr.bounds_csv);
    return written;
}

/// Build, write, and optionally echo one line per (suite, model).
/// Returns 0 when every check passed, 1 otherwise.
inline int run_suite(const RunConfig& cfg, std::ostream* echo = nullptr) {
    const RunReport rr = build_report(cfg);
    const std::vector<std::string> written = emit_report(rr, cfg.out);
    if (echo && cfg.extract && rr.doc["suites"].contains("cd"))
        for (const auto& [model, mdoc] : rr.doc["suites"]["cd"].items())
            *echo << mdoc["constants"].dump(2) << "\n";
    if (echo) {
        for (const auto& [suite, models] : rr.doc["suites"].items())
            for (const auto& [model, mdoc] : models.items()) {
                if (mdoc.contains("skipped")) {
                    *echo << suite << "[" << model << "]: skipped ("
                          << mdoc["skipped"].get<std::string>() << ")\n";
                    continue;
                }
                *echo << suite << "[" << model << "]: " << mdoc["checks"].get<int>()
                      << " checks, " << mdoc["failed"].get<std::size_t>() << " failed\n";
            }
        for (const std::string& p : written) *echo << "wrote " << p << "\n";
    }
    return rr.all_pass() ? 0 : 1;
}

} // namespace folib
