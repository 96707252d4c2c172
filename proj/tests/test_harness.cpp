#include <softcal/harness.hpp>

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace softcal;

namespace {

ExperimentConfig quadratic_config(Method m, double eta, std::uint64_t iters) {
    ExperimentConfig c;
    c.problem.spec = Json{{"kind", "quadratic"}, {"dim", 10}, {"lambda_min", 0.01}, {"lambda_max", 1.0}};
    c.oracle.sigma = 0.1;
    c.oracle.G = 1.0;
    c.oracle.seed = 11;
    c.method = m;
    c.hp = default_hyper_params(m);
    c.hp.eta = eta;
    c.iters = iters;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Run, SgdOnUnitQuadratic) {
    ExperimentConfig c;
    c.problem.spec = Json{{"kind", "quadratic"}, {"spectrum", {1.0}}, {"x0", {1.0}}};
    c.method = Method::SGD;
    c.hp = default_hyper_params(Method::SGD);
    c.hp.eta = 0.5;
    c.iters = 1;
    const RunResult r = run(c);
    EXPECT_EQ(r.final_x, Vector{0.5});
    ASSERT_EQ(r.record.rows.size(), 2u);
    EXPECT_EQ(r.record.rows[0].loss, 0.5);
    EXPECT_EQ(r.record.rows[1].loss, 0.125);
    EXPECT_EQ(r.record.rows[0].eta_t, 0.5);
    EXPECT_FALSE(r.record.rows[1].eta_t.has_value());
    EXPECT_EQ(r.avg_x, Vector{1.0});
}

TEST(Run, SnapshotCadenceAndZCheck) {
    ExperimentConfig c = quadratic_config(Method::Sadam, 0.01, 50);
    c.snapshot_every = 10;
    c.z_check = true;
    const RunResult r = run(c);
    std::size_t snaps = 0;
    for (const TraceRow& row : r.record.rows) {
        if (row.alr) {
            ++snaps;
            EXPECT_EQ((row.t - 1) % 10, 0u);
        }
        if (row.t <= 50) {
            ASSERT_TRUE(row.z_residual.has_value());
            EXPECT_LT(*row.z_residual, 1e-9);
        }
    }
    EXPECT_EQ(snaps, 5u);
    EXPECT_EQ(bound_violations(r.record, alr_bounds(c.hp.calibrator, c.oracle.G, c.oracle.sigma)), 0u);
}

TEST(Run, RepeatRunsAreByteIdentical) {
    const auto dir = std::filesystem::temp_directory_path() / "softcal_repeat";
    std::filesystem::remove_all(dir);
    ExperimentConfig c = quadratic_config(Method::AMSGrad, 0.01, 300);
    c.snapshot_every = 7;
    c.z_check = true;
    c.replicates = 3;
    c.threads = 3;
    c.out_dir = (dir / "a").string();
    ASSERT_TRUE(run_to_directory(c));
    c.threads = 1;
    c.out_dir = (dir / "b").string();
    ASSERT_TRUE(run_to_directory(c));
    for (const char* f : {"trace_r0.csv", "trace_r2.csv", "trace_r1.json"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
    const std::string sa = slurp(dir / "a" / "summary.json");
    const std::string sb = slurp(dir / "b" / "summary.json");
    EXPECT_EQ(sa, sb);
    std::filesystem::remove_all(dir);
}

TEST(Run, LargeStepDiverges) {
    ExperimentConfig c = quadratic_config(Method::SGD, 1000.0, 500);
    c.oracle.G = std::numeric_limits<double>::infinity();
    const RunResult r = run(c);
    EXPECT_TRUE(r.record.diverged);
    ASSERT_TRUE(r.record.diverged_step.has_value());
    EXPECT_LT(*r.record.diverged_step, 500u);
}

TEST(Run, ReplicatesDifferOnlyThroughSeed) {
    const ExperimentConfig c = quadratic_config(Method::Adam, 0.01, 100);
    const ProblemPtr p = build_problem(c.problem);
    EXPECT_EQ(run(c, p, 1).final_x, run(c, p, 1).final_x);
    EXPECT_NE(run(c, p, 1).final_x, run(c, p, 2).final_x);
}

TEST(Config, JsonRoundTripAndErrors) {
    ExperimentConfig c = quadratic_config(Method::PAdam, 0.02, 77);
    c.snapshot_every = 3;
    const ExperimentConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_THROW(config_from_json(Json{{"method", "nosuch"}}), ConfigError);
    EXPECT_THROW(config_from_json(Json{{"iters", 0}}), ConfigError);
    EXPECT_THROW(config_from_json(Json{{"method", "sadam"}, {"hyper_params", {{"calibrator", {{"kind", "eps_shift"}}}}}}),
                 ConfigError);
    EXPECT_THROW(build_problem(ProblemSpec{Json{{"kind", "torus"}}}), ConfigError);
    EXPECT_THROW(build_problem(ProblemSpec{Json{{"kind", "quadratic"}}}), ConfigError);
}

TEST(ParallelMap, OrderedResultsAndErrors) {
    const auto out = parallel_map<int>(100, [](std::size_t i) { return static_cast<int>(i * i); }, 8);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
    EXPECT_THROW(parallel_map<int>(
                     10, [](std::size_t i) -> int { if (i == 7) throw ConfigError("boom"); return 0; }, 4),
                 ConfigError);
}

TEST(RateStudy, InjectedPowerLawGivesExactSlope) {
    RateStudy s;
    s.base = quadratic_config(Method::Adam, 0.01, 1);
    s.t_grid = {100, 1000, 10000};
    s.custom_metric = [](const RunResult& r) {
        return 2.5 / std::sqrt(static_cast<double>(r.record.rows.size() - 1));
    };
    const RateResult res = rate_study(s);
    EXPECT_NEAR(res.slope, -0.5, 1e-12);
    ASSERT_EQ(res.points.size(), 3u);
    EXPECT_DOUBLE_EQ(res.points[1].eta, 1.0 / std::sqrt(1000.0));
}

TEST(RateStudy, ValidatesGridAndReportsDivergence) {
    RateStudy s;
    s.base = quadratic_config(Method::SGD, 1.0, 1);
    s.t_grid = {100, 1000};
    EXPECT_THROW(rate_study(s), ConfigError);
    s.t_grid = {100, 100, 1000};
    EXPECT_THROW(rate_study(s), ConfigError);
    s.t_grid = {10, 20, 40};
    s.base.oracle.G = std::numeric_limits<double>::infinity();
    s.rule = EtaRule::Fixed;
    s.c = 1e4;
    try {
        rate_study(s);
        FAIL();
    } catch (const StudyFailure& e) {
        EXPECT_NE(std::string(e.what()).find("T=10"), std::string::npos);
    }
}

TEST(RateStudy, CalibrationPicksTheBestCandidate) {
    RateStudy s;
    s.base = quadratic_config(Method::SGD, 1.0, 1);
    s.base.oracle.sigma = 0.0;
    s.base.oracle.G = std::numeric_limits<double>::infinity();
    s.t_grid = {20, 40, 80};
    s.rule = EtaRule::Fixed;
    s.metric = RateMetric::FinalGap;
    s.c_candidates = {1e-3, 0.5, 1e4};
    const RateResult r = rate_study(s);
    EXPECT_EQ(r.c, 0.5);
    EXPECT_EQ(r.calibration.size(), 3u);
    EXPECT_TRUE(std::isinf(r.calibration[2].second));
}

TEST(GridSearch, SinglePointMatchesRun) {
    const ExperimentConfig c = quadratic_config(Method::Adam, 0.01, 200);
    const auto rows = grid_search(c, {{"eta", {0.01}}});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].mean, run(c).final_loss);
}

TEST(GridSearch, DuplicatePointsAgreeAndDivergedRankLast) {
    ExperimentConfig c = quadratic_config(Method::SGD, 0.01, 200);
    c.oracle.G = std::numeric_limits<double>::infinity();
    c.replicates = 2;
    const auto rows = grid_search(c, {{"eta", {1e4, 0.1, 0.1, 0.5}}});
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_TRUE(rows.back().diverged);
    EXPECT_EQ(rows.back().params[0].second, 1e4);
    const GridRow* a = nullptr;
    const GridRow* b = nullptr;
    for (const auto& r : rows) {
        if (r.cell == 1) a = &r;
        if (r.cell == 2) b = &r;
    }
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->mean, b->mean);
    EXPECT_EQ(a->std, b->std);
    const std::string csv = grid_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "rank,cell,eta,mean,std,diverged");
}

TEST(GridSearch, LatticeOrderAndUnknownAxis) {
    const ExperimentConfig c = quadratic_config(Method::Sadam, 0.01, 20);
    const auto rows = grid_search(c, {{"eta", {0.1, 0.01}}, {"beta", {10, 50, 100}}});
    EXPECT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.params[0].second, (r.cell / 3 == 0 ? 0.1 : 0.01));
        EXPECT_EQ(r.params[1].second, (std::vector<double>{10, 50, 100}[r.cell % 3]));
    }
    EXPECT_THROW(grid_search(c, {{"gamma", {1.0}}}), ConfigError);
    EXPECT_EQ(default_lattice(Method::Sadam).size(), 4u);
}

TEST(Compare, NoiselessReplicatesHaveZeroSpread) {
    ExperimentConfig c = quadratic_config(Method::Adam, 0.01, 100);
    c.oracle.sigma = 0.0;
    const auto rows = compare({c}, 6);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].std, 0.0);
}

TEST(Compare, DuplicatesMatchAndProblemsMustAgree) {
    const ExperimentConfig a = quadratic_config(Method::Yogi, 0.01, 100);
    const auto rows = compare({a, a}, 3);
    EXPECT_EQ(rows[0].mean, rows[1].mean);
    EXPECT_EQ(rows[0].std, rows[1].std);
    ExperimentConfig b = a;
    b.problem.spec["dim"] = 11;
    EXPECT_THROW(compare({a, b}, 3), ConfigError);
}

TEST(Compare, AdamAgainstSadamOnMlpBlobs) {
    auto mk = [](Method m) {
        ExperimentConfig c;
        c.problem.spec = Json{{"kind", "mlp"},
                              {"hidden", 8},
                              {"data", {{"source", "blobs"}, {"n", 100}, {"classes", 3}, {"spread", 0.5}, {"seed", 1}}}};
        c.oracle = OracleSpec{1.0, 0.0, 3, OracleMode::MiniBatch, 8};
        c.method = m;
        c.hp = default_hyper_params(m);
        c.hp.eta = 0.01;
        c.iters = 300;
        return c;
    };
    const auto rows = compare({mk(Method::Adam), mk(Method::Sadam)}, 6);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_TRUE(std::isfinite(r.mean));
        EXPECT_GT(r.std, 0.0);
        EXPECT_EQ(r.diverged, 0u);
    }
    const std::string table = compare_table(rows);
    EXPECT_NE(table.find("adam"), std::string::npos);
    EXPECT_NE(table.find("sadam"), std::string::npos);
    EXPECT_NE(table.find("+-"), std::string::npos);
}

TEST(RunScaling, WallClockIsLinearInIterationsTimesDimension) {
    auto seconds = [](std::uint64_t T, std::size_t d) {
        ExperimentConfig c;
        c.problem.spec = Json{{"kind", "quadratic"}, {"dim", d}, {"lambda_min", 0.01}, {"lambda_max", 1.0}};
        c.oracle.sigma = 0.1;
        c.method = Method::Adam;
        c.iters = T;
        const ProblemPtr p = build_problem(c.problem);
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            run(c, p);
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return best / (static_cast<double>(T) * static_cast<double>(d));
    };
    const double base = seconds(5000, 200);
    const double more_t = seconds(20000, 200);
    const double more_d = seconds(5000, 800);
    EXPECT_LT(more_t / base, 2.0);
    EXPECT_GT(more_t / base, 0.5);
    EXPECT_LT(more_d / base, 2.0);
    EXPECT_GT(more_d / base, 0.5);
}
