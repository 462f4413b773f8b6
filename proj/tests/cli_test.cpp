#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "tls/io.hpp"

using namespace tls;

namespace {

struct Result {
    int status = -1;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("tls_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write_json(dir_ / "gen.json", {{"n_stays", 30}, {"t_min", 25}, {"t_max", 35}, {"rho", 0.9}, {"sigma", 0.5},
                                       {"threshold", 1.2}, {"sustain", 2}, {"informative", 2}, {"distractors", 1},
                                       {"seed", 3}});
        Json exp{{"name", "tiny"},
                 {"data", {{"path", "cohort.json"}}},
                 {"model", {{"embed_dim", 3}, {"hidden_dim", 4}}},
                 {"optimizer", {{"max_epochs", 2}, {"batch_size", 8}}},
                 {"arms",
                  {{{"name", "ce"}, {"objective", "ce"}},
                   {{"name", "tls"}, {"objective", "tls"}, {"smoothing", "exp"}, {"gamma", {0.1, 0.4}}},
                   {{"name", "mhp"}, {"objective", "mhp"}}}},
                 {"seeds", {1, 2}}};
        write_json(dir_ / "exp.json", exp);
    }

    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args, const std::string& env = "") {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = env + " " + std::string(TLS_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
        Result r;
        const int raw = std::system(cmd.c_str());
        r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        r.out = read_text(out);
        r.err = read_text(err);
        return r;
    }

    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

Json error_of(const Result& r) {
    const Json j = Json::parse(r.err);
    EXPECT_TRUE(j.contains("error") && j.contains("message")) << r.err;
    return j;
}

}  // namespace

TEST_F(Cli, UsageErrorsAreJson) {
    auto r = run("");
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "usage");
    r = run("train --config " + p("exp.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "usage");
}

TEST_F(Cli, MissingFilesAndBadConfigs) {
    auto r = run("generate --config " + p("nope.json") + " --out " + p("c.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "io_error");

    write_json(dir_ / "bad.json", {{"rho", 1.5}});
    r = run("generate --config " + p("bad.json") + " --out " + p("c.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "invalid_input");

    write_json(dir_ / "flat.json", {{"sigma", 0.0}, {"initial_risk", 0.0}, {"n_stays", 5}, {"t_min", 10}, {"t_max", 10}});
    r = run("generate --config " + p("flat.json") + " --out " + p("c.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "generation_error");
    EXPECT_FALSE(fs::exists(dir_ / "c.json"));
}

TEST_F(Cli, GenerateIsDeterministic) {
    ASSERT_EQ(run("generate --config " + p("gen.json") + " --out " + p("cohort.json")).status, 0);
    ASSERT_EQ(run("generate --config " + p("gen.json") + " --out " + p("again.json")).status, 0);
    EXPECT_EQ(read_text(dir_ / "cohort.json"), read_text(dir_ / "again.json"));
    const Json doc = read_json(dir_ / "cohort.json");
    EXPECT_EQ(doc["stays"].size(), 30u);
    EXPECT_GT(doc["stats"]["events"].get<int>(), 0);
}

TEST_F(Cli, SweepTrainEvaluateReportAreByteIdentical) {
    ASSERT_EQ(run("generate --config " + p("gen.json") + " --out " + p("cohort.json")).status, 0);

    auto a = run("sweep --config " + p("exp.json") + " --out " + p("runs/a"));
    ASSERT_EQ(a.status, 0) << a.err;
    auto b = run("sweep --config " + p("exp.json") + " --out " + p("runs/b"));
    ASSERT_EQ(b.status, 0) << b.err;
    for (const char* f : {"record.json", "config.json", "seed-1/ce.json", "seed-1/tls.json", "seed-2/mhp.json",
                          "seed-2/tls.ckpt", "seed-1/summary.json"})
        EXPECT_EQ(read_text(dir_ / "runs/a" / f), read_text(dir_ / "runs/b" / f)) << f;

    auto t1 = run("train --config " + p("exp.json") + " --seed 7 --out " + p("train/a"));
    ASSERT_EQ(t1.status, 0) << t1.err;
    auto t2 = run("train --config " + p("exp.json") + " --seed 7 --out " + p("train/b"));
    ASSERT_EQ(t2.status, 0);
    EXPECT_EQ(t1.out, t2.out);
    EXPECT_EQ(read_text(dir_ / "train/a/seed-7/tls.ckpt"), read_text(dir_ / "train/b/seed-7/tls.ckpt"));

    const std::string ckpt = p("runs/a/seed-1/mhp.ckpt");
    auto e1 = run("evaluate --checkpoint " + ckpt + " --data " + p("cohort.json") + " --out " + p("eval1.json"));
    ASSERT_EQ(e1.status, 0) << e1.err;
    auto e2 = run("evaluate --checkpoint " + ckpt + " --data " + p("cohort.json") + " --out " + p("eval2.json"));
    ASSERT_EQ(e2.status, 0);
    EXPECT_EQ(read_text(dir_ / "eval1.json"), read_text(dir_ / "eval2.json"));
    const Json ev = read_json(dir_ / "eval1.json");
    EXPECT_EQ(ev["stays"], 30);
    EXPECT_GE(ev["report"]["auprc"].get<double>(), 0.0);

    auto r1 = run("report --runs " + p("runs/a") + " --out " + p("rep1"));
    ASSERT_EQ(r1.status, 0) << r1.err;
    auto r2 = run("report --runs " + p("runs/b") + " --out " + p("rep2"));
    ASSERT_EQ(r2.status, 0);
    for (const char* f : {"metrics.csv", "per_seed.csv", "pr_curves.csv", "binned_rates.csv", "binned_deltas.csv",
                          "significance.csv"})
        EXPECT_EQ(read_text(dir_ / "rep1" / f), read_text(dir_ / "rep2" / f)) << f;
    EXPECT_NE(read_text(dir_ / "rep1/metrics.csv").find("recall_at_50pct_precision_mean"), std::string::npos);
    EXPECT_NE(read_text(dir_ / "rep1/metrics.csv").find("tiny/mhp,2,"), std::string::npos);
}

TEST_F(Cli, OutputRootFromEnvironment) {
    ASSERT_EQ(run("generate --config " + p("gen.json") + " --out " + p("cohort.json")).status, 0);
    Json exp = read_json(dir_ / "exp.json");
    exp["arms"] = Json::array({{{"name", "ce"}, {"objective", "ce"}}});
    exp["seeds"] = {1};
    write_json(dir_ / "one.json", exp);
    auto r = run("sweep --config " + p("one.json"), "TLS_OUTPUT_ROOT=" + p("root"));
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "root/tiny/record.json"));
}

TEST_F(Cli, CorruptCheckpoint) {
    write_atomic(dir_ / "bad.ckpt", "TLSC-not-really");
    ASSERT_EQ(run("generate --config " + p("gen.json") + " --out " + p("cohort.json")).status, 0);
    auto r = run("evaluate --checkpoint " + p("bad.ckpt") + " --data " + p("cohort.json"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(error_of(r)["error"], "io_error");
}
