// Command-line front end: run, grid, rate, compare.
//
// Exit status: 0 on success, 2 when a run diverged, 1 on configuration errors.

#include <softcal/softcal.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace softcal;

namespace {

struct Overrides {
    std::string config_file;
    std::optional<std::string> method;
    std::optional<std::string> problem;
    std::optional<double> eta, beta1, beta2, epsilon, beta, p;
    std::optional<std::uint64_t> iters, seed, snapshot_every;
    std::optional<std::size_t> replicates;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config_file, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--method", o.method, "optimizer name (adam, sadam, ...)");
    app->add_option("--problem", o.problem, "problem kind, or a JSON problem object");
    app->add_option("--eta", o.eta, "base learning rate");
    app->add_option("--beta1", o.beta1);
    app->add_option("--beta2", o.beta2);
    app->add_option("--epsilon", o.epsilon, "calibrator epsilon");
    app->add_option("--beta", o.beta, "softplus sharpness");
    app->add_option("--p", o.p, "partial-adaptive exponent");
    app->add_option("--iters", o.iters, "iterations per run");
    app->add_option("--seed", o.seed, "oracle seed");
    app->add_option("--replicates", o.replicates);
    app->add_option("--snapshot-every", o.snapshot_every, "A-LR snapshot cadence (0 = off)");
    app->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    app->add_option("--out", o.out, "output directory");
}

Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Merges flags into the config JSON so hyper-parameter defaults follow the final method.
ExperimentConfig build_config(const Overrides& o, Json j = Json::object()) {
    if (!o.config_file.empty()) j = load_json(o.config_file);
    Json& hp = j["hyper_params"];
    if (!hp.is_object()) hp = Json::object();
    if (o.method) {
        if (j.contains("method") && j["method"] != *o.method) hp.erase("calibrator");
        j["method"] = *o.method;
    }
    if (o.problem) {
        const std::string& s = *o.problem;
        try {
            j["problem"] = s.starts_with("{") ? Json::parse(s) : Json{{"kind", s}};
        } catch (const Json::parse_error& e) {
            throw ConfigError(std::string("--problem: ") + e.what());
        }
        if (s == "quadratic") {
            j["problem"].update(Json{{"dim", 10}, {"lambda_min", 0.01}, {"lambda_max", 1.0}});
        }
        if (s == "logistic" || s == "mlp") j["problem"]["data"] = Json{{"source", "blobs"}, {"n", 200}};
    }
    if (o.eta) hp["eta"] = *o.eta;
    if (o.beta1) hp["beta1"] = *o.beta1;
    if (o.beta2) hp["beta2"] = *o.beta2;
    if (o.epsilon) hp["calibrator"]["epsilon"] = *o.epsilon;
    if (o.beta) hp["calibrator"]["beta"] = *o.beta;
    if (o.p) hp["calibrator"]["p"] = *o.p;
    if (o.iters) j["iters"] = *o.iters;
    if (o.seed) j["oracle"]["seed"] = *o.seed;
    if (o.replicates) j["replicates"] = *o.replicates;
    if (o.snapshot_every) j["snapshot_every"] = *o.snapshot_every;
    if (o.threads) j["threads"] = *o.threads;
    if (o.out) j["out"] = *o.out;
    return config_from_json(j);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

fs::path require_out(const std::string& dir) {
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(dir);
    return dir;
}

template <typename T>
std::vector<T> split_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream is(item);
        T v{};
        if (!(is >> v)) throw ConfigError("bad list element '" + item + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softcal: adaptive optimizer experiments"};
    app.require_subcommand(1);

    Overrides run_o, grid_o, rate_o;
    auto* run_cmd = app.add_subcommand("run", "run one experiment and write traces");
    add_common(run_cmd, run_o);

    auto* grid_cmd = app.add_subcommand("grid", "grid-search hyper-parameters");
    add_common(grid_cmd, grid_o);
    std::vector<std::string> axes;
    std::string grid_metric = "final_train_loss";
    grid_cmd->add_option("--axis", axes, "NAME=v1,v2,... (repeatable; default lattice when absent)");
    grid_cmd->add_option("--metric", grid_metric, "final_train_loss or test_accuracy");

    auto* rate_cmd = app.add_subcommand("rate", "measure the log-log convergence slope over a T grid");
    add_common(rate_cmd, rate_o);
    std::string t_grid = "100,1000,10000", eta_rule = "const_over_sqrtT", rate_metric = "min_grad_norm_sq";
    std::string c_candidates;
    double c_value = 1.0;
    rate_cmd->add_option("--t-grid", t_grid);
    rate_cmd->add_option("--eta-rule", eta_rule, "const_over_sqrtT, const_over_T, const_over_Tsq, fixed");
    rate_cmd->add_option("--metric", rate_metric, "min_grad_norm_sq, avg_iterate_gap, final_gap");
    rate_cmd->add_option("--c", c_value, "eta-rule constant");
    rate_cmd->add_option("--c-candidates", c_candidates, "comma list; calibrate c at the smallest T");

    auto* cmp_cmd = app.add_subcommand("compare", "replicated comparison of several method configs");
    std::vector<std::string> cmp_files;
    std::size_t cmp_reps = 5;
    unsigned cmp_threads = 0;
    std::string cmp_out, cmp_metric = "final_train_loss";
    cmp_cmd->add_option("configs", cmp_files, "JSON config per method")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--replicates", cmp_reps);
    cmp_cmd->add_option("--threads", cmp_threads);
    cmp_cmd->add_option("--metric", cmp_metric, "final_train_loss or test_accuracy");
    cmp_cmd->add_option("--out", cmp_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    auto grid_metric_of = [](const std::string& s) {
        if (s == "final_train_loss") return GridMetric::FinalTrainLoss;
        if (s == "test_accuracy") return GridMetric::TestAccuracy;
        throw ConfigError("unknown metric '" + s + "'");
    };

    try {
        if (*run_cmd) {
            const ExperimentConfig cfg = build_config(run_o);
            const bool ok = run_to_directory(cfg);
            std::printf("%s: wrote traces to %s\n", ok ? "ok" : "diverged", cfg.out_dir.c_str());
            return ok ? 0 : 2;
        }
        if (*grid_cmd) {
            const ExperimentConfig cfg = build_config(grid_o);
            const fs::path out = require_out(cfg.out_dir);
            Lattice lattice;
            for (const std::string& a : axes) {
                const auto eq = a.find('=');
                if (eq == std::string::npos) throw ConfigError("--axis expects NAME=v1,v2,...");
                lattice.emplace_back(a.substr(0, eq), split_list<double>(a.substr(eq + 1)));
            }
            if (lattice.empty()) lattice = default_lattice(cfg.method);
            const auto rows = grid_search(cfg, lattice, grid_metric_of(grid_metric));
            write_file(out / "grid.csv", grid_csv(rows));
            Json summary{{"config", to_json(cfg)}, {"cells", rows.size()}, {"best", Json::object()}};
            bool any_diverged = false;
            for (const auto& r : rows) any_diverged = any_diverged || r.diverged;
            if (!rows.front().diverged) {
                for (const auto& [name, v] : rows.front().params) summary["best"][name] = v;
                summary["best"]["mean"] = rows.front().mean;
            }
            summary["diverged_cells"] = any_diverged;
            write_file(out / "summary.json", summary.dump(2) + "\n");
            std::fputs(grid_csv(rows).c_str(), stdout);
            return rows.front().diverged ? 2 : 0;
        }
        if (*rate_cmd) {
            RateStudy study;
            study.base = build_config(rate_o);
            const fs::path out = require_out(study.base.out_dir);
            study.t_grid = split_list<std::uint64_t>(t_grid);
            study.rule = eta_rule_from_string(eta_rule);
            study.metric = rate_metric_from_string(rate_metric);
            study.c = c_value;
            if (!c_candidates.empty()) study.c_candidates = split_list<double>(c_candidates);
            RateResult res;
            try {
                res = rate_study(study);
            } catch (const StudyFailure& e) {
                std::fprintf(stderr, "diverged: %s\n", e.what());
                return 2;
            }
            write_file(out / "rate.csv", rate_csv(res));
            write_file(out / "summary.json",
                       Json{{"config", to_json(study.base)},
                            {"eta_rule", std::string(to_string(study.rule))},
                            {"metric", std::string(to_string(study.metric))},
                            {"c", res.c},
                            {"slope", res.slope}}
                               .dump(2) +
                           "\n");
            std::fputs(rate_csv(res).c_str(), stdout);
            std::printf("slope %.4f (c = %g)\n", res.slope, res.c);
            return 0;
        }
        if (*cmp_cmd) {
            std::vector<ExperimentConfig> cfgs;
            for (const auto& f : cmp_files) cfgs.push_back(config_from_json(load_json(f)));
            const fs::path out = require_out(cmp_out);
            const auto rows = compare(cfgs, cmp_reps, grid_metric_of(cmp_metric), cmp_threads);
            write_file(out / "compare.csv", compare_csv(rows));
            Json summary{{"replicates", cmp_reps}, {"methods", Json::array()}};
            std::size_t diverged = 0;
            for (const auto& r : rows) {
                summary["methods"].push_back(
                    {{"method", r.label}, {"mean", r.mean}, {"std", r.std}, {"diverged", r.diverged}});
                diverged += r.diverged;
            }
            write_file(out / "summary.json", summary.dump(2) + "\n");
            std::fputs(compare_table(rows).c_str(), stdout);
            return diverged == 0 ? 0 : 2;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
