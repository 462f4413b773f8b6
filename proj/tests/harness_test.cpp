#include <gtest/gtest.h>

#include <cstdlib>
#include <set>
#include <string>

#include "tls/checkpoint.hpp"
#include "tls/cohort.hpp"
#include "tls/experiment.hpp"
#include "tls/report.hpp"

using namespace tls;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tls_harness_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

GenConfig small_gen() {
    GenConfig g;
    g.n_stays = 40;
    g.t_min = 30;
    g.t_max = 40;
    g.rho = 0.9;
    g.sigma = 0.5;
    g.threshold = 1.2;
    g.sustain = 2;
    g.informative = 2;
    g.distractors = 1;
    return g;
}

ExperimentConfig small_experiment() {
    ExperimentConfig c;
    c.name = "small";
    c.generator = small_gen();
    c.model.embed_dim = 3;
    c.model.hidden_dim = 4;
    c.optimizer.max_epochs = 3;
    c.optimizer.batch_size = 8;
    ArmConfig ce;
    ce.name = "ce";
    ArmConfig tls;
    tls.name = "tls";
    tls.objective = ObjectiveKind::temporal_smoothing;
    tls.smoothing = SmoothingKind::exp;
    tls.gammas = {0.1, 0.4};
    c.arms = {ce, tls};
    c.seeds = {1, 2};
    return c;
}

bool same_stays(const std::vector<Stay>& a, const std::vector<Stay>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].id != b[i].id || a[i].event_track != b[i].event_track || a[i].step_minutes != b[i].step_minutes)
            return false;
        if (a[i].features.rows() != b[i].features.rows() || a[i].features.cols() != b[i].features.cols()) return false;
        if (!(a[i].features.array() == b[i].features.array()).all()) return false;
    }
    return true;
}

}  // namespace

TEST(Generator, NoNoiseBelowThresholdHasNoEvents) {
    GenConfig g = small_gen();
    g.sigma = 0.0;
    g.initial_risk = 0.5;
    Rng rng(1);
    const auto path = simulate_latent(g, g.threshold, 50, rng);
    for (auto e : path.events) EXPECT_EQ(e, 0);
    try {
        generate(g);
        FAIL() << "expected a generation error";
    } catch (const GenerationError& e) {
        EXPECT_NE(std::string(e.what()).find("prevalence 0"), std::string::npos);
    }
}

TEST(Generator, EventsFollowTheTriggerRule) {
    GenConfig g = small_gen();
    g.sigma = 0.0;
    g.rho = 0.5;
    g.initial_risk = 8.0;  // 8, 4, 2, 1: above 1.2 for three steps
    g.sustain = 3;
    g.event_length = 2;
    Rng rng(1);
    const auto p = simulate_latent(g, g.threshold, 8, rng);
    EXPECT_EQ(p.events, (std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0, 0, 0}));
    EXPECT_EQ(p.risk[4], 0.0);  // reset after the event, then decays
}

TEST(Generator, SameSeedIsBitIdentical) {
    const auto a = generate(small_gen()), b = generate(small_gen());
    EXPECT_TRUE(same_stays(a.stays, b.stays));
    GenConfig other = small_gen();
    other.seed = 2;
    EXPECT_FALSE(same_stays(a.stays, generate(other).stays));
    const auto stats = cohort_stats(a.stays, 12);
    EXPECT_GT(stats.prevalence(), 0.0);
    EXPECT_LT(stats.prevalence(), 1.0);
    EXPECT_EQ(stats.stays, 40u);
    for (const auto& s : a.stays) {
        EXPECT_GE(s.length(), 30u);
        EXPECT_LE(s.length(), 40u);
        EXPECT_EQ(s.feature_dim(), 3u);
    }
}

TEST(Generator, CalibratesToFourPercent) {
    GenConfig g;
    g.n_stays = 500;
    g.target_prevalence = 0.04;
    const auto c = generate(g);
    EXPECT_NEAR(c.stats.prevalence(), 0.04, 0.01);
    EXPECT_EQ(c.stats.stays, 500u);
}

TEST(Generator, PresetPrevalences) {
    for (const auto& [name, target] : {std::pair{"circulatory", 0.043}, std::pair{"respiratory", 0.386},
                                       std::pair{"decompensation", 0.021}}) {
        GenConfig g = GenConfig::preset(name);
        g.n_stays = 300;
        const double tau = calibrate_threshold(g, *g.target_prevalence);
        EXPECT_NEAR(detail::latent_stats(g, tau).prevalence(), target, 0.01) << name;
    }
    EXPECT_THROW(GenConfig::preset("sepsis"), InvalidInput);
}

TEST(Generator, ConfigValidation) {
    GenConfig g = small_gen();
    g.t_min = 50;
    EXPECT_THROW(g.validate(), InvalidInput);
    g = small_gen();
    g.rho = 1.0;
    EXPECT_THROW(g.validate(), InvalidInput);
    g = small_gen();
    const auto back = gen_config_from_json(to_json(g));
    EXPECT_EQ(to_json(back), to_json(g));
}

TEST(CohortJson, RoundTripIsExact) {
    const auto c = generate(small_gen());
    const Json doc = Json::parse(cohort_to_json(c.stays).dump());
    EXPECT_TRUE(same_stays(cohort_from_json(doc), c.stays));
}

TEST(CohortJson, RejectsMalformedCohorts) {
    EXPECT_THROW(cohort_from_json(Json::object()), InvalidInput);
    EXPECT_THROW(cohort_from_json(Json::parse(R"({"stays": []})")), InvalidInput);
    const char* ragged = R"({"stays": [{"id": "a", "features": [[1, 2], [3]], "events": [0, 0]}]})";
    EXPECT_THROW(cohort_from_json(Json::parse(ragged)), InvalidInput);
    const char* binary = R"({"stays": [{"id": "a", "features": [[1], [3]], "events": [0, 2]}]})";
    EXPECT_THROW(cohort_from_json(Json::parse(binary)), InvalidInput);
    const char* length = R"({"stays": [{"id": "a", "features": [[1], [3]], "events": [0]}]})";
    EXPECT_THROW(cohort_from_json(Json::parse(length)), InvalidInput);
    const char* dup = R"({"stays": [{"id": "a", "features": [[1]], "events": [0]}, {"id": "a", "features": [[1]], "events": [0]}]})";
    EXPECT_THROW(cohort_from_json(Json::parse(dup)), InvalidInput);
    const char* ok = R"({"stays": [{"id": "a", "step_minutes": 30, "features": [[1], [3]], "events": [0, 1]}]})";
    const auto stays = cohort_from_json(Json::parse(ok));
    EXPECT_EQ(stays.front().step_minutes, 30);
}

TEST(Splits, DisjointCoveringAndSeeded) {
    const auto s = split_by_stay(100, {}, 7);
    EXPECT_EQ(s.train.size(), 70u);
    EXPECT_EQ(s.val.size(), 15u);
    EXPECT_EQ(s.test.size(), 15u);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (auto i : *part) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 100u);
    EXPECT_EQ(split_by_stay(100, {}, 7).test, s.test);
    EXPECT_NE(split_by_stay(100, {}, 8).test, s.test);
    EXPECT_THROW(split_by_stay(2, {}, 1), InvalidInput);
    EXPECT_THROW(split_by_stay(100, {0.5, 0.3, 0.3}, 1), InvalidInput);
}

TEST(Scaler, StandardizesTrainingFeatures) {
    auto stays = generate(small_gen()).stays;
    const auto split = split_by_stay(stays.size(), {}, 1);
    const Scaler sc = Scaler::fit(stays, split.train);
    for (auto& s : stays) sc.apply(s);
    const Scaler after = Scaler::fit(stays, split.train);
    for (std::size_t j = 0; j < after.mean.size(); ++j) {
        EXPECT_NEAR(after.mean[j], 0.0, 1e-12);
        EXPECT_NEAR(after.scale[j], 1.0, 1e-12);
    }
    const auto back = Scaler::from_json(sc.to_json());
    EXPECT_EQ(back.mean, sc.mean);
    EXPECT_EQ(back.scale, sc.scale);
}

TEST(ExperimentConfig, ParsesAndValidates) {
    const Json j = to_json(small_experiment());
    ExperimentConfig c = experiment_from_json(j);
    EXPECT_EQ(to_json(c), j);
    EXPECT_EQ(c.baseline_arm(), "ce");

    Json bad = j;
    bad["seeds"] = Json::array();
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
    bad = j;
    bad["splits"]["test"] = 0.3;
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
    bad = j;
    bad["arms"][1].erase("gamma");
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
    bad = j;
    bad["arms"][0]["objective"] = "dice";
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
    bad = j;
    bad["baseline"] = "missing";
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
    bad = j;
    bad["arms"][1]["name"] = "ce";
    EXPECT_THROW(experiment_from_json(bad), InvalidInput);
}

TEST(ExperimentConfig, HashIgnoresOutputLocation) {
    ExperimentConfig a = small_experiment(), b = small_experiment();
    a.output_dir = "/tmp/one";
    b.output_dir = "/tmp/two";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seeds = {1, 3};
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(ExperimentConfig, OutputRootFromEnvironment) {
    Json j = to_json(small_experiment());
    ::setenv("TLS_OUTPUT_ROOT", "/tmp/tls-root", 1);
    EXPECT_EQ(experiment_from_json(j).output_dir, "/tmp/tls-root/small");
    ::unsetenv("TLS_OUTPUT_ROOT");
    EXPECT_EQ(experiment_from_json(j).output_dir, "runs/small");
    j["output_dir"] = "elsewhere";
    EXPECT_EQ(experiment_from_json(j).output_dir, "elsewhere");
}

TEST(Resolve, HoursBecomeSteps) {
    ExperimentConfig cfg = small_experiment();
    PreparedData d;
    d.step_minutes = 30;
    d.horizon_steps = 24;
    ArmConfig exp_arm;
    exp_arm.objective = ObjectiveKind::temporal_smoothing;
    exp_arm.smoothing = SmoothingKind::exp;
    const auto o = resolve_objective(exp_arm, 0.2, d, cfg);
    EXPECT_DOUBLE_EQ(o.smoothing.gamma, 0.1);  // per hour -> per half-hour step
    EXPECT_DOUBLE_EQ(o.smoothing.h_max, 48.0);
    EXPECT_DOUBLE_EQ(o.smoothing.h_true, 24.0);
    EXPECT_DOUBLE_EQ(o.balance.b1, 0.5);
    ArmConfig sig = exp_arm;
    sig.smoothing = SmoothingKind::sigmoid;
    EXPECT_DOUBLE_EQ(resolve_objective(sig, 2.0, d, cfg).smoothing.gamma, 4.0);  // a time scale
}

TEST(Resolve, MultiHorizonScoresTheTrueHorizon) {
    ObjectiveSpec o;
    o.kind = ObjectiveKind::multi_horizon;
    o.smoothing.h_max = 24.0;
    EXPECT_EQ(eval_output(o, 12), 5u);
    o.smoothing.h_max = 23.0;
    EXPECT_THROW(eval_output(o, 12), InvalidInput);
    o.kind = ObjectiveKind::cross_entropy;
    EXPECT_EQ(eval_output(o, 12), 0u);
}

TEST(Aggregates, MeanAndNormalInterval) {
    const auto a = aggregate({0.41, 0.38, 0.45, 0.40});
    EXPECT_NEAR(a.mean, 0.41000000000000003, 1e-15);
    EXPECT_NEAR(a.half_width, 0.0288504188300043, 1e-15);
    EXPECT_EQ(a.n, 4u);
    const auto one = aggregate({0.3});
    EXPECT_EQ(one.half_width, 0.0);
}

TEST(Stats, PairedTTestMatchesReference) {
    const auto t = paired_t_test({0.31, 0.29, 0.35, 0.30, 0.33}, {0.30, 0.28, 0.31, 0.31, 0.30});
    EXPECT_NEAR(t.t, 1.835325870964493, 1e-12);
    EXPECT_NEAR(t.p_one_sided, 0.07017869330949733, 1e-12);
    EXPECT_EQ(t.n, 5u);
    EXPECT_THROW(paired_t_test({1.0}, {0.0}), InvalidInput);
    EXPECT_EQ(paired_t_test({1.0, 2.0}, {0.0, 1.0}).p_one_sided, 0.0);
}

TEST(Checkpoint, RoundTripAndCorruption) {
    const auto dir = scratch("ckpt");
    ModelSpec spec;
    spec.input_dim = 3;
    Checkpoint c{{{"arm", "ce"}, {"seed", 4}}, init_params(spec, 4)};
    save_checkpoint(dir / "a.ckpt", c);
    const auto back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.header, c.header);
    EXPECT_TRUE((back.params.array() == c.params.array()).all());

    std::string bytes = read_text(dir / "a.ckpt");
    write_atomic(dir / "b.ckpt", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_checkpoint(dir / "b.ckpt"), IoError);
    bytes[0] = 'X';
    write_atomic(dir / "c.ckpt", bytes);
    EXPECT_THROW(load_checkpoint(dir / "c.ckpt"), IoError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
    for (const auto& e : fs::directory_iterator(dir))
        EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos) << e.path();
    fs::remove_all(dir);
}

TEST(Report, EmptyRecordSetGivesHeadersOnly) {
    const auto dir = scratch("empty");
    write_report({}, dir);
    EXPECT_EQ(read_text(dir / "metrics.csv"),
              "method,n_seeds,auprc_mean,auprc_ci95,auroc_mean,auroc_ci95,recall_at_50pct_precision_mean,"
              "recall_at_50pct_precision_ci95,event_recall_mean,event_recall_ci95\n");
    EXPECT_EQ(read_text(dir / "binned_deltas.csv"), "method,baseline,seed,bin_lo_hours,bin_hi_hours,delta_tpr,delta_tnr\n");
    EXPECT_EQ(read_text(dir / "significance.csv"), "method,baseline,metric,n,mean_diff,t,p_one_sided\n");
    fs::remove_all(dir);
}

TEST(Run, EndToEndDeterministicAndClean) {
    const auto dir = scratch("run");
    const ExperimentConfig cfg = small_experiment();
    const RunRecord r = run_experiment(cfg, dir / "a");
    run_experiment(cfg, dir / "b");
    for (const char* f : {"record.json", "config.json", "seed-1/ce.json", "seed-2/tls.json", "seed-1/tls.ckpt"})
        EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;

    EXPECT_EQ(r.status, "complete");
    EXPECT_EQ(r.entries.size(), 4u);
    for (const auto& e : r.entries) {
        if (e.arm == "tls") {
            ASSERT_TRUE(e.gamma.has_value());
            EXPECT_TRUE(*e.gamma == 0.1 || *e.gamma == 0.4);
        }
    }

    // Aggregates recompute from the persisted per-seed reports.
    RunRecord stored = run_record_from_json(read_json(dir / "a" / "record.json"));
    const auto saved = stored.aggregates;
    compute_aggregates(stored);
    for (const auto& [arm, metrics] : saved)
        for (const auto& [metric, a] : metrics) {
            EXPECT_NEAR(stored.aggregates[arm][metric].mean, a.mean, 1e-12);
            EXPECT_NEAR(stored.aggregates[arm][metric].half_width, a.half_width, 1e-12);
        }

    // Split hygiene.
    const PreparedData d = prepare_data(cfg);
    std::set<std::string> seen;
    for (const auto* part : {&d.split.train, &d.split.val, &d.split.test})
        for (auto i : *part) EXPECT_TRUE(seen.insert(d.stays[i].id).second);

    // Reporting on the run.
    write_report(load_records(dir / "a"), dir / "report");
    const std::string metrics = read_text(dir / "report" / "metrics.csv");
    EXPECT_NE(metrics.find("small/ce,2,"), std::string::npos);
    EXPECT_NE(metrics.find("small/tls,2,"), std::string::npos);
    const std::string deltas = read_text(dir / "report" / "binned_deltas.csv");
    EXPECT_NE(deltas.find("small/tls,small/ce,mean,0,2,"), std::string::npos);
    EXPECT_NE(read_text(dir / "report" / "significance.csv").find("small/tls,small/ce,auprc,2,"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Run, FailingSeedKeepsPartialResults) {
    const auto dir = scratch("fail");
    ExperimentConfig cfg = small_experiment();
    ArmConfig bad;
    bad.name = "mhp";
    bad.objective = ObjectiveKind::multi_horizon;
    bad.h_max_hours = 23.0;  // grid misses the 12 h horizon
    cfg.arms = {cfg.arms.front(), bad};
    EXPECT_THROW(run_experiment(cfg, dir), InvalidInput);
    const Json rec = read_json(dir / "record.json");
    EXPECT_EQ(rec["status"], "failed");
    EXPECT_EQ(rec["error"]["error"], "invalid_input");
    EXPECT_EQ(rec["error"]["seed"], 1);
    EXPECT_TRUE(fs::exists(dir / "seed-1" / "ce.json"));
    fs::remove_all(dir);
}
