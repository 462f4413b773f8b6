// Command-line front end: generate, train, evaluate, sweep, report.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tls/checkpoint.hpp"
#include "tls/cohort.hpp"
#include "tls/experiment.hpp"
#include "tls/report.hpp"

namespace {

using namespace tls;

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

int fail(const std::string& code, const std::string& message, int status = 1) {
    std::cerr << Json{{"error", code}, {"message", message}}.dump() << "\n";
    return status;
}

GenConfig read_gen_config(const std::string& path) {
    const Json j = read_json(path);
    if (j.contains("generator")) return gen_config_from_json(j.at("generator"));
    if (j.contains("data") && j.at("data").contains("generator")) return gen_config_from_json(j.at("data").at("generator"));
    return gen_config_from_json(j);
}

int cmd_generate(const std::string& config, const std::string& out) {
    const GenConfig cfg = read_gen_config(config);
    const Cohort c = generate(cfg);
    Json doc = cohort_to_json(c.stays);
    doc["generator"] = to_json(cfg);
    doc["threshold"] = c.threshold;
    doc["stats"] = to_json(c.stats);
    write_atomic(out, doc.dump() + "\n");
    print_json({{"out", out}, {"threshold", c.threshold}, {"stats", to_json(c.stats)}});
    return 0;
}

ExperimentConfig read_experiment(const std::string& config, const std::string& out) {
    ExperimentConfig cfg = load_experiment(config);
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
}

int cmd_train(const std::string& config, std::uint64_t seed, const std::string& out) {
    const ExperimentConfig cfg = read_experiment(config, out);
    const PreparedData d = prepare_data(cfg);
    write_run_header(cfg, d, cfg.output_dir);
    const auto entries = run_seed(d, cfg, seed, cfg.output_dir);
    print_json(read_json(seed_dir(cfg.output_dir, seed) / "summary.json"));
    return entries.empty() ? 1 : 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Json& h = ckpt.header;
    const ModelSpec model = model_from_json(detail::need(h, "model"));
    const EvalSettings settings = eval_settings_from_json(detail::need(h, "eval_settings"));
    const Scaler scaler = Scaler::from_json(detail::need(h, "scaler"));
    const auto column = detail::need(h, "eval_output").get<std::size_t>();
    const int step_minutes = detail::need(h, "step_minutes").get<int>();
    detail::require(static_cast<std::size_t>(ckpt.params.size()) == ParamLayout(model).total,
                    "checkpoint parameters do not match its model");

    std::vector<Stay> stays = load_cohort(data);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < stays.size(); ++i) {
        detail::require(stays[i].step_minutes == step_minutes, "stay '" + stays[i].id + "' uses a different step length");
        scaler.apply(stays[i]);
        idx.push_back(i);
    }
    const auto preds = predict(stays, idx, ckpt.params, model, column, settings.horizon_steps);
    Json result{{"checkpoint", {{"arm", h.value("arm", "")}, {"seed", h.value("seed", 0)}}},
                {"stays", stays.size()},
                {"report", to_json(evaluate_predictions(preds, settings))}};
    if (out.empty()) {
        print_json(result);
    } else {
        write_json(out, result);
        const Json& r = result["report"];
        print_json({{"out", out}, {"auprc", r["auprc"]}, {"auroc", r["auroc"]}, {"recall_at_precision", r["recall_at_precision"]}});
    }
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& out) {
    const ExperimentConfig cfg = read_experiment(config, out);
    const RunRecord r = run_experiment(cfg, cfg.output_dir);
    Json aggs = Json::object();
    for (const auto& [arm, metrics] : r.aggregates)
        for (const auto& [metric, a] : metrics) aggs[arm][metric] = {{"mean", a.mean}, {"half_width", a.half_width}, {"n", a.n}};
    print_json({{"record", (fs::path(cfg.output_dir) / "record.json").string()}, {"config_hash", r.config_hash}, {"aggregates", aggs}});
    return 0;
}

int cmd_report(const std::string& runs, const std::string& out) {
    const auto records = load_records(runs);
    write_report(records, out);
    print_json({{"records", records.size()}, {"out", out}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal label smoothing experiments"};
    app.require_subcommand(1);

    std::string config, out, checkpoint, data, runs;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort");
    gen->add_option("--config", config, "Generator config (JSON)")->required();
    gen->add_option("--out", out, "Cohort file to write")->required();

    auto* tr = app.add_subcommand("train", "Train and evaluate every arm for one seed");
    tr->add_option("--config", config, "Experiment config (JSON)")->required();
    tr->add_option("--seed", seed, "Training seed")->required();
    tr->add_option("--out", out, "Output directory (default from config)");

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a cohort");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", data, "Cohort file")->required();
    ev->add_option("--out", out, "Report file (default: stdout)");

    auto* sw = app.add_subcommand("sweep", "Run every seed and arm of an experiment");
    sw->add_option("--config", config, "Experiment config (JSON)")->required();
    sw->add_option("--out", out, "Output directory (default from config)");

    auto* rep = app.add_subcommand("report", "Tables from run records");
    rep->add_option("--runs", runs, "Directory searched for record.json files")->required();
    rep->add_option("--out", out, "Directory for CSV tables")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*gen) return cmd_generate(config, out);
        if (*tr) return cmd_train(config, seed, out);
        if (*ev) return cmd_evaluate(checkpoint, data, out);
        if (*sw) return cmd_sweep(config, out);
        if (*rep) return cmd_report(runs, out);
    } catch (const tls::Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return fail("usage", "no subcommand");
}
