#pragma once

// Experiment runner: single runs, rate-scaling studies, grid search and
// replicated method comparisons. Replicates and lattice cells run in
// parallel; results are reduced in cell order so output never depends on
// scheduling.

#include <softcal/calibrators.hpp>
#include <softcal/data.hpp>
#include <softcal/error.hpp>
#include <softcal/instrument.hpp>
#include <softcal/numerics.hpp>
#include <softcal/optim.hpp>
#include <softcal/problems.hpp>
#include <softcal/serialization.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace softcal {

// ---------------------------------------------------------------------------
// Configuration

/// Problem description as it appears in a config file. See README for the schema.
struct ProblemSpec {
    Json spec = Json{{"kind", "quadratic"}, {"spectrum", {1.0}}};
};

struct OracleSpec {
    double G = std::numeric_limits<double>::infinity();
    double sigma = 0.0;
    std::uint64_t seed = 0;
    OracleMode mode = OracleMode::Gaussian;
    std::size_t batch = 1;
};

struct ExperimentConfig {
    ProblemSpec problem;
    OracleSpec oracle;
    Method method = Method::Adam;
    HyperParams hp = default_hyper_params(Method::Adam);
    std::uint64_t iters = 1000;
    std::size_t replicates = 1;
    /// Take an A-LR snapshot every k steps (0 disables snapshots).
    std::uint64_t snapshot_every = 0;
    bool z_check = false;
    /// A run is declared diverged once loss exceeds this multiple of max(1, |f(x_1)|).
    double divergence_factor = 1e12;
    /// Worker threads for replicated work; 0 = hardware concurrency.
    unsigned threads = 0;
    std::string out_dir;

    void validate() const {
        if (iters < 1) throw ConfigError("iters must be >= 1");
        if (replicates < 1) throw ConfigError("replicates must be >= 1");
        if (!(divergence_factor > 1.0)) throw ConfigError("divergence_factor must exceed 1");
        if (!(oracle.G > 0.0)) throw ConfigError("oracle G must be positive");
        if (!(oracle.sigma >= 0.0)) throw ConfigError("oracle sigma must be >= 0");
        hp.validate();
        check_pairing(method, hp.calibrator);
        second_moment_kind(method, hp);
    }
};

inline Json to_json(const OracleSpec& o) {
    return Json{{"G", std::isfinite(o.G) ? Json(o.G) : Json(nullptr)},
                {"sigma", o.sigma},
                {"seed", o.seed},
                {"mode", o.mode == OracleMode::Gaussian ? "gaussian" : "minibatch"},
                {"batch", o.batch}};
}

inline Json to_json(const ExperimentConfig& c) {
    return Json{{"problem", c.problem.spec},
                {"oracle", to_json(c.oracle)},
                {"method", std::string(to_string(c.method))},
                {"hyper_params", to_json(c.hp)},
                {"iters", c.iters},
                {"replicates", c.replicates},
                {"snapshot_every", c.snapshot_every},
                {"z_check", c.z_check},
                {"divergence_factor", c.divergence_factor}};
}

inline ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    try {
        if (j.contains("problem")) c.problem.spec = j["problem"];
        if (j.contains("oracle")) {
            const Json& o = j["oracle"];
            if (o.contains("G") && !o["G"].is_null()) c.oracle.G = o["G"].get<double>();
            c.oracle.sigma = detail::get_or(o, "sigma", c.oracle.sigma);
            c.oracle.seed = detail::get_or(o, "seed", c.oracle.seed);
            const std::string mode = detail::get_or(o, "mode", std::string("gaussian"));
            if (mode == "gaussian") {
                c.oracle.mode = OracleMode::Gaussian;
            } else if (mode == "minibatch") {
                c.oracle.mode = OracleMode::MiniBatch;
            } else {
                throw ConfigError("unknown oracle mode '" + mode + "'");
            }
            c.oracle.batch = detail::get_or(o, "batch", c.oracle.batch);
        }
        if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
        c.hp = hyper_params_from_json(j.value("hyper_params", Json::object()), c.method);
        c.iters = detail::get_or(j, "iters", c.iters);
        c.replicates = detail::get_or(j, "replicates", c.replicates);
        c.snapshot_every = detail::get_or(j, "snapshot_every", c.snapshot_every);
        c.z_check = detail::get_or(j, "z_check", c.z_check);
        c.divergence_factor = detail::get_or(j, "divergence_factor", c.divergence_factor);
        c.threads = detail::get_or(j, "threads", c.threads);
        c.out_dir = detail::get_or(j, "out", c.out_dir);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline std::shared_ptr<const Dataset> build_dataset(const Json& d) {
    const std::string source = d.value("source", std::string("blobs"));
    if (source == "blobs") {
        return std::make_shared<Dataset>(gen_blobs(d.value("n", std::size_t{200}), d.value("d_in", std::size_t{2}),
                                                   d.value("classes", std::size_t{2}), d.value("spread", 0.5),
                                                   d.value("seed", std::uint64_t{0})));
    }
    if (source == "idx") {
        IdxOptions opts;
        if (d.contains("per_class")) opts.per_class = d["per_class"].get<std::size_t>();
        opts.split_seed = d.value("seed", std::uint64_t{0});
        return std::make_shared<Dataset>(
            read_idx(d.at("images").get<std::string>(), d.at("labels").get<std::string>(), opts));
    }
    throw ConfigError("unknown dataset source '" + source + "'");
}

inline ProblemPtr build_problem(const ProblemSpec& ps) {
    const Json& j = ps.spec;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        const Vector x0 = j.value("x0", Vector{});
        if (kind == "quadratic") {
            if (j.contains("spectrum")) return std::make_shared<QuadraticProblem>(j["spectrum"].get<Vector>(), x0);
            return QuadraticProblem::log_spaced(j.at("dim").get<std::size_t>(), j.at("lambda_min").get<double>(),
                                                j.at("lambda_max").get<double>(), x0);
        }
        if (kind == "rosenbrock") return std::make_shared<RosenbrockProblem>(j.value("dim", std::size_t{2}), x0);
        if (kind == "logistic") {
            return std::make_shared<LogisticProblem>(build_dataset(j.value("data", Json::object())),
                                                     j.value("l2", 0.0), j.value("fstar_cache", std::string{}));
        }
        if (kind == "mlp") {
            return std::make_shared<MlpProblem>(build_dataset(j.value("data", Json::object())),
                                                j.value("hidden", std::size_t{16}), j.value("l2", 0.0));
        }
        throw ConfigError("unknown problem kind '" + kind + "'");
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    } catch (const InputDomainError& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }
}

/// Starting point: the problem config's x0 if given, otherwise the problem default for this seed.
inline Vector start_point(const ProblemSpec& ps, const Problem& p, std::uint64_t seed) {
    if (ps.spec.contains("x0")) return ps.spec["x0"].get<Vector>();
    return p.initial_point(seed);
}

// ---------------------------------------------------------------------------
// Parallel map with deterministic result order

template <typename R>
std::vector<R> parallel_map(std::size_t n, const std::function<R(std::size_t)>& fn, unsigned threads = 0) {
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// ---------------------------------------------------------------------------
// Single run

struct RunResult {
    TrajectoryRecord record;
    Vector final_x;
    Vector avg_x;  // (1/T) sum_{t=1}^T x_t
    double final_loss = 0.0;
    double min_grad_norm_sq = 0.0;
    std::optional<double> avg_iterate_gap;
    std::optional<double> final_gap;
    std::optional<double> test_accuracy;
    std::uint64_t clip_events = 0;
};

inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t replicate) {
    return seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(replicate);
}

inline Json run_metadata(const ExperimentConfig& c, const Problem& p, std::size_t replicate, std::uint64_t seed) {
    Json m = to_json(c);
    m["replicate"] = replicate;
    m["replicate_seed"] = seed;
    m["dim"] = p.dim();
    m["smoothness"] = p.smoothness();
    m["snapshot_cadence"] = c.snapshot_every;
    return m;
}

/// Executes `c.iters` steps of replicate `replicate` against a prebuilt problem.
inline RunResult run(const ExperimentConfig& c, const ProblemPtr& problem, std::size_t replicate = 0) {
    c.validate();
    const std::uint64_t seed = replicate_seed(c.oracle.seed, replicate);
    Oracle oracle(problem, c.oracle.G, c.oracle.sigma, seed, c.oracle.mode, c.oracle.batch);
    const Vector x0 = start_point(c.problem, *problem, seed);
    OptimizerState state = init(c.method, problem->dim(), x0, c.hp);

    RunResult res;
    res.record.metadata = run_metadata(c, *problem, replicate, seed);
    res.record.rows.reserve(c.iters + 1);
    Vector sum_x(problem->dim(), 0.0);
    Vector x_prev = state.x;
    double loss_limit = 0.0;
    double min_gn = std::numeric_limits<double>::infinity();

    auto observe = [&](std::uint64_t t) -> std::optional<TraceRow> {
        TraceRow row;
        row.t = t;
        row.loss = problem->eval(state.x);
        const Vector grad = problem->exact_grad(state.x);
        row.grad_norm_sq = squared_norm(grad);
        if (t == 1) loss_limit = c.divergence_factor * std::max(1.0, std::abs(row.loss));
        if (!std::isfinite(row.loss) || !std::isfinite(row.grad_norm_sq) || row.loss > loss_limit) {
            res.record.diverged = true;
            res.record.diverged_step = t;
            return std::nullopt;
        }
        return row;
    };

    for (std::uint64_t t = 1; t <= c.iters; ++t) {
        std::optional<TraceRow> row = observe(t);
        if (!row) break;
        min_gn = std::min(min_gn, row->grad_norm_sq);
        for (std::size_t j = 0; j < sum_x.size(); ++j) sum_x[j] += state.x[j];
        const Vector g = oracle.stochastic_grad(state.x);
        std::optional<OptimizerState> before;
        if (c.z_check) before = state;
        try {
            advance(state, g, c.hp);
        } catch (const PoisonedStateError& e) {
            res.record.rows.push_back(*row);
            res.record.diverged = true;
            res.record.diverged_step = e.step();
            break;
        }
        row->eta_t = c.hp.eta_at(t);
        if (c.snapshot_every > 0 && (t - 1) % c.snapshot_every == 0) row->alr = snapshot_alr(state, c.hp);
        if (before) {
            row->z_residual = z_residual(ZWindow::from_states(*before, state, x_prev, g), c.hp);
            x_prev = before->x;
        }
        res.record.rows.push_back(std::move(*row));
    }
    if (!res.record.diverged) {
        std::optional<TraceRow> last = observe(c.iters + 1);
        if (last) res.record.rows.push_back(*last);
    }
    res.clip_events = oracle.clip_events();
    res.record.metadata["clip_events"] = res.clip_events;
    res.final_x = state.x;
    res.final_loss = res.record.rows.empty() ? std::numeric_limits<double>::quiet_NaN() : res.record.rows.back().loss;
    res.min_grad_norm_sq = min_gn;
    if (!res.record.diverged) {
        res.avg_x = scaled(sum_x, 1.0 / static_cast<double>(c.iters));
        if (problem->optimum_value()) {
            res.avg_iterate_gap = optimality_gap(*problem, res.avg_x);
            res.final_gap = optimality_gap(*problem, res.final_x);
        }
        if (const Dataset* ds = problem->dataset(); ds && !ds->test.empty()) {
            res.test_accuracy = problem->accuracy(res.final_x, ds->test);
        }
    }
    return res;
}

inline RunResult run(const ExperimentConfig& c, std::size_t replicate = 0) {
    return run(c, build_problem(c.problem), replicate);
}

inline Json summary_json(const RunResult& r) {
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    return Json{{"final_loss", std::isfinite(r.final_loss) ? Json(r.final_loss) : Json(nullptr)},
                {"min_grad_norm_sq", std::isfinite(r.min_grad_norm_sq) ? Json(r.min_grad_norm_sq) : Json(nullptr)},
                {"avg_iterate_gap", opt(r.avg_iterate_gap)},
                {"final_gap", opt(r.final_gap)},
                {"test_accuracy", opt(r.test_accuracy)},
                {"diverged", r.record.diverged},
                {"diverged_step", r.record.diverged_step ? Json(*r.record.diverged_step) : Json(nullptr)},
                {"clip_events", r.clip_events},
                {"final_x", r.final_x}};
}

/// Runs every replicate and writes trace_r<k>.{csv,json} plus summary.json into c.out_dir.
/// Returns true when no replicate diverged.
inline bool run_to_directory(const ExperimentConfig& c) {
    if (c.out_dir.empty()) throw ConfigError("run: an output directory is required");
    std::filesystem::create_directories(c.out_dir);
    const ProblemPtr problem = build_problem(c.problem);
    const std::vector<RunResult> results =
        parallel_map<RunResult>(c.replicates, [&](std::size_t r) { return run(c, problem, r); }, c.threads);
    Json summary{{"config", to_json(c)}, {"replicates", Json::array()}};
    bool ok = true;
    for (std::size_t r = 0; r < results.size(); ++r) {
        const std::string stem = (std::filesystem::path(c.out_dir) / ("trace_r" + std::to_string(r))).string();
        write_trace(results[r].record, stem);
        summary["replicates"].push_back(summary_json(results[r]));
        ok = ok && !results[r].record.diverged;
    }
    summary["diverged"] = !ok;
    std::ofstream(std::filesystem::path(c.out_dir) / "summary.json", std::ios::binary) << summary.dump(2) << '\n';
    return ok;
}

// ---------------------------------------------------------------------------
// Rate-scaling study

enum class EtaRule { ConstOverSqrtT, ConstOverT, ConstOverTSq, Fixed };
enum class RateMetric { MinGradNormSq, AvgIterateGap, FinalGap };

inline std::string_view to_string(EtaRule r) {
    switch (r) {
        case EtaRule::ConstOverSqrtT: return "const_over_sqrtT";
        case EtaRule::ConstOverT: return "const_over_T";
        case EtaRule::ConstOverTSq: return "const_over_Tsq";
        case EtaRule::Fixed: return "fixed";
    }
    return "?";
}

inline EtaRule eta_rule_from_string(std::string_view s) {
    for (auto r : {EtaRule::ConstOverSqrtT, EtaRule::ConstOverT, EtaRule::ConstOverTSq, EtaRule::Fixed}) {
        if (to_string(r) == s) return r;
    }
    throw ConfigError("unknown eta rule '" + std::string(s) + "'");
}

inline std::string_view to_string(RateMetric m) {
    switch (m) {
        case RateMetric::MinGradNormSq: return "min_grad_norm_sq";
        case RateMetric::AvgIterateGap: return "avg_iterate_gap";
        case RateMetric::FinalGap: return "final_gap";
    }
    return "?";
}

inline RateMetric rate_metric_from_string(std::string_view s) {
    for (auto m : {RateMetric::MinGradNormSq, RateMetric::AvgIterateGap, RateMetric::FinalGap}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown rate metric '" + std::string(s) + "'");
}

inline double eta_for(EtaRule rule, double c, std::uint64_t T) {
    const auto t = static_cast<double>(T);
    switch (rule) {
        case EtaRule::ConstOverSqrtT: return c / std::sqrt(t);
        case EtaRule::ConstOverT: return c / t;
        case EtaRule::ConstOverTSq: return c / (t * t);
        case EtaRule::Fixed: return c;
    }
    return c;
}

struct RateStudy {
    ExperimentConfig base;
    std::vector<std::uint64_t> t_grid;
    EtaRule rule = EtaRule::ConstOverSqrtT;
    RateMetric metric = RateMetric::MinGradNormSq;
    double c = 1.0;
    /// When non-empty, c is chosen from these by a sweep at the smallest T and then held fixed.
    std::vector<double> c_candidates;
    /// Replaces `metric` when set: maps one finished run to its metric value (replicate mean is taken).
    std::function<double(const RunResult&)> custom_metric;

    void validate() const {
        base.validate();
        if (t_grid.size() < 3) throw ConfigError("rate study: T grid needs at least 3 points");
        for (std::size_t i = 1; i < t_grid.size(); ++i) {
            if (t_grid[i] <= t_grid[i - 1]) throw ConfigError("rate study: T grid must be strictly increasing");
        }
        if (!(c > 0.0) && c_candidates.empty()) throw ConfigError("rate study: c must be positive");
    }
};

struct RatePoint {
    std::uint64_t T = 0;
    double eta = 0.0;
    double metric = 0.0;
    double metric_std = 0.0;  // across replicates; 0 for min_grad_norm_sq (min of the mean curve)
    std::vector<double> per_replicate;
};

struct RateResult {
    double c = 0.0;
    double slope = 0.0;
    std::vector<RatePoint> points;
    std::vector<std::pair<double, double>> calibration;  // (c, metric at smallest T)
};

/// A study constituent run diverged; `what()` names it.
class StudyFailure : public Error {
public:
    using Error::Error;
};

namespace detail {

/// Metric at one T: the replicate mean, except min_grad_norm_sq which is the
/// minimum over t of the replicate-averaged ||grad f(x_t)||^2.
inline RatePoint rate_point(const RateStudy& s, const ProblemPtr& problem, std::uint64_t T, double c) {
    ExperimentConfig cfg = s.base;
    cfg.iters = T;
    cfg.hp.eta = eta_for(s.rule, c, T);
    cfg.snapshot_every = 0;
    cfg.z_check = false;
    const auto runs =
        parallel_map<RunResult>(cfg.replicates, [&](std::size_t r) { return run(cfg, problem, r); }, cfg.threads);
    RatePoint pt;
    pt.T = T;
    pt.eta = cfg.hp.eta;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        if (runs[r].record.diverged) {
            throw StudyFailure("rate study: run T=" + std::to_string(T) + " replicate " + std::to_string(r) +
                               " (c=" + std::to_string(c) + ") diverged at step " +
                               std::to_string(runs[r].record.diverged_step.value_or(0)));
        }
    }
    if (s.custom_metric) {
        for (const auto& r : runs) pt.per_replicate.push_back(s.custom_metric(r));
        const MeanStd ms = mean_std(pt.per_replicate);
        pt.metric = ms.mean;
        pt.metric_std = ms.std;
        return pt;
    }
    switch (s.metric) {
        case RateMetric::MinGradNormSq: {
            Vector mean_curve(T, 0.0);
            for (const auto& r : runs) {
                for (std::uint64_t t = 0; t < T; ++t) mean_curve[t] += r.record.rows[t].grad_norm_sq;
                pt.per_replicate.push_back(r.min_grad_norm_sq);
            }
            pt.metric = *std::min_element(mean_curve.begin(), mean_curve.end()) / static_cast<double>(runs.size());
            break;
        }
        case RateMetric::AvgIterateGap:
        case RateMetric::FinalGap: {
            for (const auto& r : runs) {
                const auto& v = s.metric == RateMetric::AvgIterateGap ? r.avg_iterate_gap : r.final_gap;
                if (!v) throw UnsupportedQueryError("rate study: metric needs a known f*");
                pt.per_replicate.push_back(*v);
            }
            const MeanStd ms = mean_std(pt.per_replicate);
            pt.metric = ms.mean;
            pt.metric_std = ms.std;
            break;
        }
    }
    return pt;
}

}  // namespace detail

inline RateResult rate_study(const RateStudy& s) {
    s.validate();
    const ProblemPtr problem = build_problem(s.base.problem);
    RateResult res;
    res.c = s.c;
    if (!s.c_candidates.empty()) {
        double best = std::numeric_limits<double>::infinity();
        for (double c : s.c_candidates) {
            double m = std::numeric_limits<double>::infinity();
            try {
                m = detail::rate_point(s, problem, s.t_grid.front(), c).metric;
            } catch (const StudyFailure&) {
            }
            res.calibration.emplace_back(c, m);
            if (m < best) {
                best = m;
                res.c = c;
            }
        }
        if (!std::isfinite(best)) throw StudyFailure("rate study: every calibration candidate diverged");
    }
    Vector ts, ys;
    for (std::uint64_t T : s.t_grid) {
        res.points.push_back(detail::rate_point(s, problem, T, res.c));
        ts.push_back(static_cast<double>(T));
        ys.push_back(res.points.back().metric);
    }
    res.slope = loglog_slope(ts, ys);
    return res;
}

inline std::string rate_csv(const RateResult& r) {
    std::string out = "T,eta,metric,metric_std\n";
    for (const RatePoint& p : r.points) {
        out += std::to_string(p.T);
        for (double v : {p.eta, p.metric, p.metric_std}) {
            out += ',';
            detail::append_num(out, v);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid search

enum class GridMetric { FinalTrainLoss, TestAccuracy };

/// Ordered parameter lattice: each axis is a hyper-parameter name with candidate values.
/// Recognized names: eta, beta1, beta2, epsilon, beta, p, eta_lower, eta_upper.
using Lattice = std::vector<std::pair<std::string, std::vector<double>>>;

/// The lattice used for the desk-scale reproduction of the published protocol.
inline Lattice default_lattice(Method m) {
    Lattice l{{"eta", {10, 1, 0.1, 0.01, 0.001, 0.0001}}, {"beta1", {0.9, 0.99}}, {"beta2", {0.99, 0.999}}};
    if (m == Method::Sadam || m == Method::SAMSGrad) l.push_back({"beta", {10, 50, 100}});
    if (m == Method::PAdam || m == Method::PAMSGrad) l.push_back({"p", {0.125, 0.0625}});
    return l;
}

inline void apply_param(HyperParams& hp, const std::string& name, double v) {
    if (name == "eta") {
        hp.eta = v;
    } else if (name == "beta1") {
        hp.beta1 = v;
    } else if (name == "beta2") {
        hp.beta2 = v;
    } else if (name == "epsilon") {
        hp.calibrator.epsilon = v;
    } else if (name == "beta") {
        hp.calibrator.beta = v;
    } else if (name == "p") {
        hp.calibrator.p = v;
    } else if (name == "eta_lower") {
        hp.calibrator.eta_lower = v;
    } else if (name == "eta_upper") {
        hp.calibrator.eta_upper = v;
    } else {
        throw ConfigError("grid: unknown parameter '" + name + "'");
    }
}

struct GridRow {
    std::size_t cell = 0;
    std::vector<std::pair<std::string, double>> params;
    double mean = 0.0;
    double std = 0.0;
    bool diverged = false;
};

inline std::vector<GridRow> grid_search(const ExperimentConfig& base, const Lattice& lattice,
                                        GridMetric metric = GridMetric::FinalTrainLoss) {
    base.validate();
    if (lattice.empty()) throw ConfigError("grid: empty lattice");
    std::size_t cells = 1;
    for (const auto& [name, values] : lattice) {
        if (values.empty()) throw ConfigError("grid: axis '" + name + "' has no values");
        cells *= values.size();
    }
    const ProblemPtr problem = build_problem(base.problem);

    std::vector<ExperimentConfig> configs;
    std::vector<GridRow> rows(cells);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        ExperimentConfig cfg = base;
        std::size_t rem = cell;
        for (auto it = lattice.rbegin(); it != lattice.rend(); ++it) {
            const double v = it->second[rem % it->second.size()];
            rem /= it->second.size();
            apply_param(cfg.hp, it->first, v);
            rows[cell].params.insert(rows[cell].params.begin(), {it->first, v});
        }
        cfg.hp.validate();
        rows[cell].cell = cell;
        configs.push_back(std::move(cfg));
    }

    const std::size_t reps = base.replicates;
    const auto results = parallel_map<RunResult>(
        cells * reps, [&](std::size_t k) { return run(configs[k / reps], problem, k % reps); }, base.threads);

    for (std::size_t cell = 0; cell < cells; ++cell) {
        Vector vals;
        for (std::size_t r = 0; r < reps; ++r) {
            const RunResult& rr = results[cell * reps + r];
            if (rr.record.diverged) {
                rows[cell].diverged = true;
                continue;
            }
            if (metric == GridMetric::TestAccuracy) {
                if (!rr.test_accuracy) throw ConfigError("grid: test accuracy needs a dataset problem");
                vals.push_back(*rr.test_accuracy);
            } else {
                vals.push_back(rr.final_loss);
            }
        }
        if (rows[cell].diverged) {
            rows[cell].mean = std::numeric_limits<double>::quiet_NaN();
        } else {
            const MeanStd ms = mean_std(vals);
            rows[cell].mean = ms.mean;
            rows[cell].std = ms.std;
        }
    }
    const bool higher_better = metric == GridMetric::TestAccuracy;
    std::stable_sort(rows.begin(), rows.end(), [&](const GridRow& a, const GridRow& b) {
        if (a.diverged != b.diverged) return !a.diverged;
        if (a.diverged) return false;
        return higher_better ? a.mean > b.mean : a.mean < b.mean;
    });
    return rows;
}

inline std::string grid_csv(const std::vector<GridRow>& rows) {
    std::string out = "rank,cell";
    if (!rows.empty()) {
        for (const auto& [name, _] : rows.front().params) out += "," + name;
    }
    out += ",mean,std,diverged\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out += std::to_string(i + 1) + "," + std::to_string(rows[i].cell);
        for (const auto& [_, v] : rows[i].params) {
            out += ',';
            detail::append_num(out, v);
        }
        out += ',';
        if (!rows[i].diverged) detail::append_num(out, rows[i].mean);
        out += ',';
        if (!rows[i].diverged) detail::append_num(out, rows[i].std);
        out += rows[i].diverged ? ",1\n" : ",0\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Replicated comparison

struct ComparisonRow {
    std::string label;
    Method method = Method::Adam;
    double eta = 0.0;
    std::optional<double> epsilon;
    std::optional<double> beta;
    double mean = 0.0;
    double std = 0.0;
    std::size_t diverged = 0;
};

inline std::vector<ComparisonRow> compare(const std::vector<ExperimentConfig>& methods, std::size_t replicates,
                                          GridMetric metric = GridMetric::FinalTrainLoss, unsigned threads = 0) {
    if (methods.empty()) throw ConfigError("compare: no methods");
    if (replicates < 1) throw ConfigError("compare: replicates must be >= 1");
    for (const auto& m : methods) {
        m.validate();
        if (m.problem.spec != methods.front().problem.spec) throw ConfigError("compare: methods use different problems");
        if (m.iters != methods.front().iters) throw ConfigError("compare: methods use different iteration budgets");
    }
    const ProblemPtr problem = build_problem(methods.front().problem);
    const auto results = parallel_map<RunResult>(
        methods.size() * replicates,
        [&](std::size_t k) { return run(methods[k / replicates], problem, k % replicates); }, threads);

    std::vector<ComparisonRow> rows;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        ComparisonRow row;
        row.method = methods[i].method;
        row.label = std::string(to_string(row.method));
        row.eta = methods[i].hp.eta;
        const Calibrator& cal = methods[i].hp.calibrator;
        if (methods[i].method != Method::SGD && methods[i].method != Method::SMomentum) {
            if (cal.kind == CalibratorKind::EpsShift || cal.kind == CalibratorKind::PowerP) row.epsilon = cal.epsilon;
            if (cal.kind == CalibratorKind::Softplus) row.beta = cal.beta;
        }
        Vector vals;
        for (std::size_t r = 0; r < replicates; ++r) {
            const RunResult& rr = results[i * replicates + r];
            if (rr.record.diverged) {
                ++row.diverged;
                continue;
            }
            vals.push_back(metric == GridMetric::TestAccuracy ? rr.test_accuracy.value_or(0.0) : rr.final_loss);
        }
        if (vals.empty()) {
            row.mean = row.std = std::numeric_limits<double>::quiet_NaN();
        } else {
            const MeanStd ms = mean_std(vals);
            row.mean = ms.mean;
            row.std = ms.std;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string compare_csv(const std::vector<ComparisonRow>& rows) {
    std::string out = "method,eta,epsilon,beta,mean,std,diverged\n";
    for (const auto& r : rows) {
        out += r.label + ',';
        detail::append_num(out, r.eta);
        out += ',';
        if (r.epsilon) detail::append_num(out, *r.epsilon);
        out += ',';
        if (r.beta) detail::append_num(out, *r.beta);
        out += ',';
        detail::append_num(out, r.mean);
        out += ',';
        detail::append_num(out, r.std);
        out += ',' + std::to_string(r.diverged) + '\n';
    }
    return out;
}

/// Fixed-width text table: method, B-LR, epsilon, beta, mean +- std.
inline std::string compare_table(const std::vector<ComparisonRow>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %-10s %-10s %-8s %s\n", "Method", "B-LR", "epsilon", "beta", "metric");
    out += buf;
    for (const auto& r : rows) {
        char eps[24] = "-", beta[24] = "-";
        if (r.epsilon) std::snprintf(eps, sizeof eps, "%.0e", *r.epsilon);
        if (r.beta) std::snprintf(beta, sizeof beta, "%g", *r.beta);
        std::snprintf(buf, sizeof buf, "%-12s %-10.0e %-10s %-8s %.4f +- %.4f\n", r.label.c_str(), r.eta, eps, beta,
                      r.mean, r.std);
        out += buf;
    }
    return out;
}

}  // namespace softcal
