// Command-line workbench: batch verification suites over the model catalog
// (or user-supplied model spec files) with deterministic JSON/CSV reports.
//
// Exit codes:
//   0  every check passed
//   1  at least one check failed (see failures.json in the output directory)
//   2  configuration error (bad flags, bad config file, bad suite name)
//   3  model error (unknown model, unreadable or invalid spec file)
//   4  report I/O error (cannot write the output directory)
//   5  suite evaluation error (a numeric routine rejected its input)

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "folibochner/report.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitModel = 3;
constexpr int kExitIo = 4;
constexpr int kExitSuite = 5;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Verification workbench for the adapted-connection calculus on "
                 "Riemannian foliations: identity checks, curvature-dimension "
                 "inequalities, heat-semigroup simulation, and comparison bounds."};
    app.set_version_flag("--version", "folib 1.0.0");

    std::string config_path;
    std::vector<std::string> models;
    std::string suite = "all";
    std::uint64_t seed = 1;
    double tol = 1e-8;
    int points = 10;
    long paths = 20000;
    int steps = 200;
    std::string out = "reports";
    int workers = 0;
    bool extract = false;

    app.add_option("--config", config_path,
                   "JSON run configuration; explicit flags override its fields");
    auto* models_opt =
        app.add_option("--model", models, "built-in model name or spec file path (repeatable)");
    auto* suite_opt =
        app.add_option("--suite", suite, "suite to run when no subcommand is given")
            ->check(CLI::IsMember({"verify", "cd", "heat", "compare", "all"}));
    auto* seed_opt = app.add_option("--seed", seed, "master seed (default 1)");
    auto* tol_opt = app.add_option("--tol", tol, "relative tolerance for identity residuals");
    auto* points_opt = app.add_option("--points", points, "sample points per model");
    auto* paths_opt = app.add_option("--paths", paths, "diffusion paths (heat suite)");
    auto* steps_opt = app.add_option("--steps", steps, "time steps per path (heat suite)");
    auto* out_opt = app.add_option("--out", out, "output directory for report files");
    auto* workers_opt = app.add_option(
        "--workers", workers, "worker threads (0 = FOLIBOCHNER_THREADS or 1); never changes results");

    CLI::App* sub_cd = nullptr;
    for (const char* name : {"verify", "cd", "heat", "compare", "all"}) {
        CLI::App* sub = app.add_subcommand(
            name, std::string("run the ") + (std::string(name) == "all" ? "full suite" : name + std::string(" suite")));
        sub->fallthrough();
        if (std::string(name) == "cd") sub_cd = sub;
    }
    sub_cd->add_flag("--extract", extract,
                     "print the extracted curvature-dimension constants as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        folib::RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw folib::ConfigError("cannot open config file '" + config_path + "'");
            folib::json j;
            try {
                j = folib::json::parse(in);
            } catch (const std::exception& e) {
                throw folib::ConfigError(std::string("config file '") + config_path +
                                         "' is not valid JSON: " + e.what());
            }
            cfg = folib::config_from_json(j);
        }
        if (models_opt->count()) cfg.models = models;
        if (suite_opt->count()) cfg.suite = suite;
        if (seed_opt->count()) cfg.seed = seed;
        if (tol_opt->count()) cfg.tol = tol;
        if (points_opt->count()) cfg.points = points;
        if (paths_opt->count()) cfg.paths = paths;
        if (steps_opt->count()) cfg.steps = steps;
        if (out_opt->count()) cfg.out = out;
        if (workers_opt->count()) cfg.workers = workers;
        for (const char* s : {"verify", "cd", "heat", "compare", "all"})
            if (app.got_subcommand(s)) cfg.suite = s;
        cfg.extract = extract;

        return folib::run_suite(cfg, &std::cout);
    } catch (const folib::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const folib::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kExitModel;
    } catch (const folib::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const folib::Error& e) {
        std::cerr << "suite error: " << e.what() << "\n";
        return kExitSuite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSuite;
    }
}
