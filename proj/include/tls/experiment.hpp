#pragma once
// Experiment runner: data preparation, per-seed training of every arm,
// held-out evaluation, persistence and seed-population aggregates.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tls/checkpoint.hpp"
#include "tls/cohort.hpp"
#include "tls/io.hpp"
#include "tls/metrics.hpp"
#include "tls/model.hpp"
#include "tls/serialize.hpp"
#include "tls/train.hpp"

namespace tls {

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;

    void validate() const {
        detail::require(train > 0.0 && val > 0.0 && test > 0.0, "split fractions must be positive");
        detail::require(std::abs(train + val + test - 1.0) < 1e-9, "split fractions must sum to 1");
    }
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle of stay indices, cut into train / validation / test.
inline SplitIndices split_by_stay(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
    f.validate();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive(seed, 0x5711);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val));
    detail::require(n_train >= 1 && n_val >= 1 && n_train + n_val < n, "too few stays for a three-way split");
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return s;
}

/// Per-feature standardization fitted on training stays.
struct Scaler {
    std::vector<double> mean, scale;

    static Scaler fit(const std::vector<Stay>& stays, const std::vector<std::size_t>& idx) {
        detail::require(!idx.empty(), "cannot fit a scaler on no stays");
        const auto D = stays[idx.front()].features.cols();
        Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(D), sq = Eigen::ArrayXd::Zero(D);
        double count = 0.0;
        for (auto i : idx) {
            const auto& x = stays[i].features;
            detail::require(x.cols() == D, "stays disagree on feature count");
            sum += x.colwise().sum().transpose().array();
            sq += x.array().square().colwise().sum().transpose();
            count += static_cast<double>(x.rows());
        }
        Scaler s;
        for (Eigen::Index j = 0; j < D; ++j) {
            const double m = sum[j] / count;
            const double var = std::max(0.0, sq[j] / count - m * m);
            s.mean.push_back(m);
            s.scale.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
        }
        return s;
    }

    void apply(Stay& stay) const {
        detail::require(static_cast<std::size_t>(stay.features.cols()) == mean.size(),
                        "stay '" + stay.id + "' has " + std::to_string(stay.features.cols()) + " features, expected " +
                            std::to_string(mean.size()));
        for (Eigen::Index j = 0; j < stay.features.cols(); ++j)
            stay.features.col(j) = (stay.features.col(j).array() - mean[static_cast<std::size_t>(j)]) /
                                   scale[static_cast<std::size_t>(j)];
    }

    Json to_json() const { return {{"mean", mean}, {"scale", scale}}; }

    static Scaler from_json(const Json& j) {
        Scaler s;
        s.mean = detail::need(j, "mean").get<std::vector<double>>();
        s.scale = detail::need(j, "scale").get<std::vector<double>>();
        detail::require(s.mean.size() == s.scale.size(), "scaler mean and scale differ in length");
        return s;
    }
};

/// One training recipe. Durations and smoothing strengths are in hours;
/// several gammas make a validation sweep.
struct ArmConfig {
    std::string name;
    ObjectiveKind objective = ObjectiveKind::cross_entropy;
    SmoothingKind smoothing = SmoothingKind::none;
    std::vector<double> gammas;
    std::optional<double> h_min_hours;  // default 0
    std::optional<double> h_max_hours;  // default 2 h
    double h_shift_hours = 0.0;
    std::size_t horizon_count = 11;
    std::optional<double> class_balance;  // default: train prevalence for weighted CE and focal, else 1/2
    double zeta = 2.0;
    double ls_alpha = 0.05;
    bool soft_focal = false;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::optional<GenConfig> generator;
    std::string data_path;           // as written in the config
    std::string resolved_data_path;  // not serialized
    SplitFractions splits;
    std::uint64_t split_seed = 0;
    bool scale_features = true;
    double horizon_hours = 12.0;
    ModelSpec model;
    OptimizerConfig optimizer;
    std::vector<ArmConfig> arms;
    std::vector<std::uint64_t> seeds;
    std::string baseline;
    double precision_floor = 0.5;
    double bin_hours = 2.0;
    std::optional<double> max_dist_hours;  // default 2 h
    std::string output_dir;

    const std::string& baseline_arm() const { return baseline.empty() ? arms.front().name : baseline; }

    void validate() const {
        detail::require(generator.has_value() != !data_path.empty(), "exactly one of 'generator' and 'data' is required");
        splits.validate();
        detail::require(horizon_hours > 0.0, "horizon must be positive");
        detail::require(!arms.empty(), "at least one arm is required");
        detail::require(!seeds.empty(), "seeds must be nonempty");
        std::set<std::string> names;
        for (const auto& a : arms) {
            detail::require(!a.name.empty() && a.name.find_first_of("/\\") == std::string::npos,
                            "arm names must be nonempty and contain no path separators");
            detail::require(names.insert(a.name).second, "duplicate arm '" + a.name + "'");
        }
        detail::require(names.count(baseline_arm()) == 1, "baseline arm '" + baseline + "' is not defined");
        detail::require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), "seeds repeat");
        detail::require(precision_floor > 0.0 && precision_floor <= 1.0, "precision floor must lie in (0, 1]");
        detail::require(bin_hours > 0.0, "bin width must be positive");
        optimizer.validate();
    }
};

// --- config JSON ---------------------------------------------------------------

inline Json to_json(const ArmConfig& a) {
    Json j{{"name", a.name},
           {"objective", std::string(to_string(a.objective))},
           {"smoothing", std::string(to_string(a.smoothing))},
           {"gamma", a.gammas},
           {"h_shift_hours", a.h_shift_hours},
           {"horizon_count", a.horizon_count},
           {"zeta", a.zeta},
           {"ls_alpha", a.ls_alpha},
           {"soft_focal", a.soft_focal}};
    j["h_min_hours"] = detail::optional_json(a.h_min_hours);
    j["h_max_hours"] = detail::optional_json(a.h_max_hours);
    j["class_balance"] = a.class_balance ? Json(*a.class_balance) : Json("auto");
    return j;
}

inline ArmConfig arm_from_json(const Json& j) {
    using detail::get_or;
    ArmConfig a;
    a.name = detail::need(j, "name").get<std::string>();
    a.objective = objective_kind_from_string(get_or<std::string>(j, "objective", "ce"));
    a.smoothing = smoothing_kind_from_string(get_or<std::string>(j, "smoothing", "none"));
    if (j.contains("gamma")) {
        const Json& g = j.at("gamma");
        if (g.is_array()) a.gammas = g.get<std::vector<double>>();
        else if (!g.is_null()) a.gammas = {g.get<double>()};
    }
    a.h_min_hours = detail::optional_from_json(j, "h_min_hours");
    a.h_max_hours = detail::optional_from_json(j, "h_max_hours");
    a.h_shift_hours = get_or(j, "h_shift_hours", a.h_shift_hours);
    a.horizon_count = get_or(j, "horizon_count", a.horizon_count);
    if (j.contains("class_balance") && j.at("class_balance").is_number()) a.class_balance = j.at("class_balance").get<double>();
    a.zeta = get_or(j, "zeta", a.zeta);
    a.ls_alpha = get_or(j, "ls_alpha", a.ls_alpha);
    a.soft_focal = get_or(j, "soft_focal", a.soft_focal);
    const bool needs_gamma = a.objective == ObjectiveKind::temporal_smoothing &&
                             (a.smoothing == SmoothingKind::exp || a.smoothing == SmoothingKind::sigmoid ||
                              a.smoothing == SmoothingKind::concave);
    detail::require(!needs_gamma || !a.gammas.empty(), "arm '" + a.name + "' needs 'gamma'");
    detail::require(a.objective != ObjectiveKind::temporal_smoothing || a.smoothing != SmoothingKind::none,
                    "arm '" + a.name + "' uses tls without a smoothing kind");
    return a;
}

/// Canonical form: everything that affects results, nothing about where
/// they are written.
inline Json to_json(const ExperimentConfig& c) {
    Json arms = Json::array();
    for (const auto& a : c.arms) arms.push_back(to_json(a));
    Json data = c.generator ? Json{{"generator", to_json(*c.generator)}} : Json{{"path", c.data_path}};
    return {{"name", c.name},
            {"data", data},
            {"splits", {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}}},
            {"split_seed", c.split_seed},
            {"scale_features", c.scale_features},
            {"horizon_hours", c.horizon_hours},
            {"model", {{"embed_dim", c.model.embed_dim}, {"hidden_dim", c.model.hidden_dim}, {"l1_embed", c.model.l1_embed}}},
            {"optimizer", to_json(c.optimizer)},
            {"arms", arms},
            {"seeds", c.seeds},
            {"baseline", c.baseline_arm()},
            {"metrics",
             {{"precision_floor", c.precision_floor},
              {"bin_hours", c.bin_hours},
              {"max_dist_hours", detail::optional_json(c.max_dist_hours)}}}};
}

inline std::string default_output_root() {
    const char* env = std::getenv("TLS_OUTPUT_ROOT");
    return env && *env ? std::string(env) : std::string("runs");
}

/// `base_dir` resolves a relative data path.
inline ExperimentConfig experiment_from_json(const Json& j, const fs::path& base_dir = {}) {
    using detail::get_or;
    if (!j.is_object()) throw InvalidInput("experiment config must be an object");
    ExperimentConfig c;
    try {
        c.name = get_or<std::string>(j, "name", c.name);
        const Json& data = detail::need(j, "data");
        if (data.contains("generator")) c.generator = gen_config_from_json(data.at("generator"));
        if (data.contains("path")) {
            c.data_path = data.at("path").get<std::string>();
            const fs::path p(c.data_path);
            c.resolved_data_path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
        }
        if (j.contains("splits")) {
            const Json& s = j.at("splits");
            c.splits.train = get_or(s, "train", c.splits.train);
            c.splits.val = get_or(s, "val", c.splits.val);
            c.splits.test = get_or(s, "test", c.splits.test);
        }
        c.split_seed = get_or(j, "split_seed", c.split_seed);
        c.scale_features = get_or(j, "scale_features", c.scale_features);
        c.horizon_hours = get_or(j, "horizon_hours", c.horizon_hours);
        if (j.contains("model")) {
            const Json& m = j.at("model");
            c.model.embed_dim = get_or(m, "embed_dim", c.model.embed_dim);
            c.model.hidden_dim = get_or(m, "hidden_dim", c.model.hidden_dim);
            c.model.l1_embed = get_or(m, "l1_embed", c.model.l1_embed);
        }
        if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
        for (const auto& a : detail::need(j, "arms")) c.arms.push_back(arm_from_json(a));
        c.seeds = detail::need(j, "seeds").get<std::vector<std::uint64_t>>();
        c.baseline = get_or<std::string>(j, "baseline", "");
        if (j.contains("metrics")) {
            const Json& m = j.at("metrics");
            c.precision_floor = get_or(m, "precision_floor", c.precision_floor);
            c.bin_hours = get_or(m, "bin_hours", c.bin_hours);
            c.max_dist_hours = detail::optional_from_json(m, "max_dist_hours");
        }
        c.output_dir = get_or<std::string>(j, "output_dir", "");
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed experiment config: ") + e.what());
    }
    if (c.output_dir.empty()) c.output_dir = (fs::path(default_output_root()) / c.name).string();
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
    return experiment_from_json(read_json(path), path.parent_path());
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

// --- data ----------------------------------------------------------------------

struct PreparedData {
    std::vector<Stay> stays;  // scaled when the config asks for it
    SplitIndices split;
    int step_minutes = 60;
    std::int64_t horizon_steps = 12;
    Scaler scaler;
    CohortStats stats;
    std::optional<double> threshold;  // generated cohorts only

    double steps_per_hour() const { return 60.0 / step_minutes; }
};

inline std::vector<Stay> load_cohort(const fs::path& path) { return cohort_from_json(read_json(path)); }

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData d;
    if (cfg.generator) {
        Cohort c = generate(*cfg.generator);
        d.stays = std::move(c.stays);
        d.threshold = c.threshold;
    } else {
        d.stays = load_cohort(cfg.resolved_data_path.empty() ? cfg.data_path : cfg.resolved_data_path);
    }
    d.step_minutes = d.stays.front().step_minutes;
    for (const auto& s : d.stays)
        detail::require(s.step_minutes == d.step_minutes && s.features.cols() == d.stays.front().features.cols(),
                        "stays must share step length and feature count");
    d.horizon_steps = to_steps(cfg.horizon_hours * 60.0, d.step_minutes);
    detail::require(d.horizon_steps >= 1, "horizon is shorter than one step");
    d.split = split_by_stay(d.stays.size(), cfg.splits, cfg.split_seed);
    d.scaler = Scaler::fit(d.stays, d.split.train);
    if (!cfg.scale_features) {
        std::fill(d.scaler.mean.begin(), d.scaler.mean.end(), 0.0);
        std::fill(d.scaler.scale.begin(), d.scaler.scale.end(), 1.0);
    }
    for (auto& s : d.stays) d.scaler.apply(s);
    d.stats = cohort_stats(d.stays, d.horizon_steps);
    return d;
}

inline double train_prevalence(const PreparedData& d) {
    CohortStats s;
    for (auto i : d.split.train) add_track(s, d.stays[i].event_track, d.horizon_steps);
    detail::require(s.positive_steps > 0, "training split has no positive steps");
    return s.prevalence();
}

inline EvalSettings eval_settings(const ExperimentConfig& cfg, const PreparedData& d) {
    EvalSettings s;
    s.horizon_steps = d.horizon_steps;
    s.precision_floor = cfg.precision_floor;
    s.bin_width_steps = cfg.bin_hours * d.steps_per_hour();
    s.max_dist_steps = cfg.max_dist_hours.value_or(2.0 * cfg.horizon_hours) * d.steps_per_hour();
    return s;
}

/// Converts an arm (hours) into a step-unit objective. Exponential and
/// concave gammas are rates, the sigmoid gamma is a time scale.
inline ObjectiveSpec resolve_objective(const ArmConfig& arm, std::optional<double> gamma_hours, const PreparedData& d,
                                       const ExperimentConfig& cfg) {
    const double f = d.steps_per_hour();
    ObjectiveSpec o;
    o.kind = arm.objective;
    o.zeta = arm.zeta;
    o.ls_alpha = arm.ls_alpha;
    o.soft_focal = arm.soft_focal;
    o.horizon_count = arm.horizon_count;
    SmoothingSpec& s = o.smoothing;
    s.kind = arm.smoothing;
    s.h_min = arm.h_min_hours.value_or(0.0) * f;
    s.h_max = arm.h_max_hours.value_or(2.0 * cfg.horizon_hours) * f;
    s.h_true = static_cast<double>(d.horizon_steps);
    s.h_shift = arm.h_shift_hours * f;
    s.horizon_count = arm.horizon_count;
    if (gamma_hours) s.gamma = arm.smoothing == SmoothingKind::sigmoid ? *gamma_hours * f : *gamma_hours / f;
    const bool reweight = arm.objective == ObjectiveKind::weighted_cross_entropy || arm.objective == ObjectiveKind::focal;
    o.balance.b1 = arm.class_balance.value_or(reweight ? train_prevalence(d) : 0.5);
    o.validate();
    if (o.kind == ObjectiveKind::temporal_smoothing) Smoother check(o.smoothing);
    return o;
}

inline ModelSpec resolve_model(const ExperimentConfig& cfg, const PreparedData& d, const ObjectiveSpec& o) {
    ModelSpec m = cfg.model;
    m.input_dim = static_cast<std::size_t>(d.stays.front().features.cols());
    m.head = o.multi_output() ? HeadKind::multi_horizon : HeadKind::single;
    m.horizon_count = o.multi_output() ? o.horizon_count : 1;
    m.validate();
    return m;
}

/// Output column scored at evaluation: the true horizon for multi-horizon heads.
inline std::size_t eval_output(const ObjectiveSpec& o, std::int64_t horizon_steps) {
    if (!o.multi_output()) return 0;
    const HorizonGrid grid = o.horizon_grid();
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (std::abs(grid[k] - static_cast<double>(horizon_steps)) < 1e-9) return k;
    throw InvalidInput("multi-horizon grid does not contain the prediction horizon");
}

inline std::vector<StayPrediction> predict(const std::vector<Stay>& stays, const std::vector<std::size_t>& idx,
                                           const ParamVector& params, const ModelSpec& spec, std::size_t column,
                                           std::int64_t horizon_steps) {
    std::vector<StayPrediction> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        const Stay& s = stays[i];
        const Eigen::MatrixXd probs = forward(s.features, params, spec);
        StayPrediction p;
        p.id = s.id;
        p.scores.resize(s.length());
        for (std::size_t t = 0; t < s.length(); ++t) p.scores[t] = probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(column));
        p.event_track = s.event_track;
        p.labels = make_label_track(s, horizon_steps);
        out.push_back(std::move(p));
    }
    return out;
}

// --- runs ----------------------------------------------------------------------

struct CandidateResult {
    std::optional<double> gamma;  // hours
    double val_auprc = 0.0;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs = 0;
};

struct ArmOutcome {
    std::string arm;
    std::uint64_t seed = 0;
    std::optional<double> gamma;
    std::vector<CandidateResult> selection;
    std::vector<EpochRecord> history;
    EvalReport report;
    Checkpoint checkpoint;
};

inline std::vector<Example> make_examples(const PreparedData& d, const std::vector<std::size_t>& idx,
                                          const ObjectiveSpec& o) {
    std::vector<Example> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back({&d.stays[i], make_stay_targets(d.stays[i], d.horizon_steps, o)});
    return out;
}

/// Trains every gamma candidate, keeps the one with the best validation
/// AUPRC (earliest on ties) and evaluates it on the test stays.
inline ArmOutcome run_arm(const PreparedData& d, const ExperimentConfig& cfg, const ArmConfig& arm, std::uint64_t seed) {
    std::vector<std::optional<double>> candidates;
    for (double g : arm.gammas) candidates.emplace_back(g);
    if (candidates.empty()) candidates.emplace_back(std::nullopt);

    ArmOutcome best;
    best.arm = arm.name;
    best.seed = seed;
    double best_auprc = -1.0;
    ParamVector best_params;
    ObjectiveSpec best_objective;
    ModelSpec best_model;
    std::size_t best_epoch = 0;
    for (const auto& gamma : candidates) {
        const ObjectiveSpec o = resolve_objective(arm, gamma, d, cfg);
        const ModelSpec m = resolve_model(cfg, d, o);
        const auto train_set = make_examples(d, d.split.train, o);
        const auto val_set = make_examples(d, d.split.val, o);
        const TrainResult tr = train(train_set, val_set, init_params(m, seed), m, o, cfg.optimizer, Rng::mix(seed));
        const auto column = eval_output(o, d.horizon_steps);
        const auto val_preds = predict(d.stays, d.split.val, tr.params, m, column, d.horizon_steps);
        CandidateResult c;
        c.gamma = gamma;
        c.val_auprc = auprc(ScoredSet::from_predictions(val_preds));
        c.best_epoch = tr.best_epoch;
        c.epochs = tr.history.size();
        c.best_val_loss = tr.history.at(tr.best_epoch - 1).val_loss;
        best.selection.push_back(c);
        if (c.val_auprc > best_auprc) {
            best_auprc = c.val_auprc;
            best.gamma = gamma;
            best.history = tr.history;
            best_params = tr.params;
            best_objective = o;
            best_model = m;
            best_epoch = tr.best_epoch;
        }
    }
    const auto column = eval_output(best_objective, d.horizon_steps);
    const auto settings = eval_settings(cfg, d);
    const auto test_preds = predict(d.stays, d.split.test, best_params, best_model, column, d.horizon_steps);
    best.report = evaluate_predictions(test_preds, settings);
    Json header{{"arm", arm.name},
                {"seed", seed},
                {"gamma", detail::optional_json(best.gamma)},
                {"epoch", best_epoch},
                {"model", to_json(best_model)},
                {"objective", to_json(best_objective)},
                {"eval_output", column},
                {"eval_settings", to_json(settings)},
                {"step_minutes", d.step_minutes},
                {"scaler", d.scaler.to_json()}};
    best.checkpoint = {std::move(header), std::move(best_params)};
    return best;
}

inline Json to_json(const ArmOutcome& a) {
    Json sel = Json::array();
    for (const auto& c : a.selection)
        sel.push_back({{"gamma", detail::optional_json(c.gamma)},
                       {"val_auprc", c.val_auprc},
                       {"best_val_loss", c.best_val_loss},
                       {"best_epoch", c.best_epoch},
                       {"epochs", c.epochs}});
    Json hist = Json::array();
    for (const auto& h : a.history) hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}});
    return {{"arm", a.arm},
            {"seed", a.seed},
            {"gamma", detail::optional_json(a.gamma)},
            {"selection", sel},
            {"history", hist},
            {"report", to_json(a.report)}};
}

struct SeedEntry {
    std::uint64_t seed = 0;
    std::string arm;
    std::optional<double> gamma;
    EvalReport report;
};

struct Aggregate {
    double mean = 0.0;
    double half_width = 0.0;  // 95% normal interval over the seed population
    std::size_t n = 0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.n = values.size();
    if (a.n == 0) return a;
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
    if (a.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.half_width = 1.96 * std::sqrt(ss / static_cast<double>(a.n - 1)) / std::sqrt(static_cast<double>(a.n));
    }
    return a;
}

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"auprc", "auroc", "recall_at_precision", "event_recall"};
    return names;
}

inline std::optional<double> metric_value(const EvalReport& r, const std::string& metric) {
    if (metric == "auprc") return r.auprc;
    if (metric == "auroc") return r.auroc;
    if (metric == "recall_at_precision") return r.recall_at_precision;
    if (metric == "event_recall") return r.event_recall;
    throw InvalidInput("unknown metric '" + metric + "'");
}

struct RunRecord {
    std::string name;
    std::string config_hash;
    std::string baseline;
    std::string status = "complete";
    Json error;  // null unless a seed failed
    int step_minutes = 60;
    EvalSettings eval;
    std::vector<std::string> arms;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedEntry> entries;
    std::map<std::string, std::map<std::string, Aggregate>> aggregates;  // arm -> metric

    std::vector<double> values(const std::string& arm, const std::string& metric) const {
        std::vector<double> out;
        for (const auto& e : entries)
            if (e.arm == arm)
                if (auto v = metric_value(e.report, metric)) out.push_back(*v);
        return out;
    }

    const SeedEntry* find(const std::string& arm, std::uint64_t seed) const {
        for (const auto& e : entries)
            if (e.arm == arm && e.seed == seed) return &e;
        return nullptr;
    }
};

inline void compute_aggregates(RunRecord& r) {
    r.aggregates.clear();
    for (const auto& arm : r.arms)
        for (const auto& metric : metric_names()) {
            const auto v = r.values(arm, metric);
            if (!v.empty()) r.aggregates[arm][metric] = aggregate(v);
        }
}

inline Json to_json(const RunRecord& r) {
    Json entries = Json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"seed", e.seed}, {"arm", e.arm}, {"gamma", detail::optional_json(e.gamma)}, {"report", to_json(e.report)}});
    Json aggs = Json::object();
    for (const auto& [arm, metrics] : r.aggregates)
        for (const auto& [metric, a] : metrics)
            aggs[arm][metric] = {{"mean", a.mean}, {"half_width", a.half_width}, {"n", a.n}};
    return {{"name", r.name},           {"config_hash", r.config_hash}, {"baseline", r.baseline},
            {"status", r.status},       {"error", r.error},             {"step_minutes", r.step_minutes},
            {"eval", to_json(r.eval)},  {"arms", r.arms},               {"seeds", r.seeds},
            {"entries", entries},       {"aggregates", aggs}};
}

inline RunRecord run_record_from_json(const Json& j) {
    using detail::need;
    RunRecord r;
    try {
        r.name = need(j, "name").get<std::string>();
        r.config_hash = need(j, "config_hash").get<std::string>();
        r.baseline = need(j, "baseline").get<std::string>();
        r.status = need(j, "status").get<std::string>();
        r.error = j.value("error", Json());
        r.step_minutes = need(j, "step_minutes").get<int>();
        r.eval = eval_settings_from_json(need(j, "eval"));
        r.arms = need(j, "arms").get<std::vector<std::string>>();
        r.seeds = need(j, "seeds").get<std::vector<std::uint64_t>>();
        for (const auto& e : need(j, "entries")) {
            SeedEntry s;
            s.seed = need(e, "seed").get<std::uint64_t>();
            s.arm = need(e, "arm").get<std::string>();
            s.gamma = detail::optional_from_json(e, "gamma");
            s.report = eval_report_from_json(need(e, "report"));
            r.entries.push_back(std::move(s));
        }
        for (const auto& [arm, metrics] : need(j, "aggregates").items())
            for (const auto& [metric, a] : metrics.items())
                r.aggregates[arm][metric] = {need(a, "mean").get<double>(), need(a, "half_width").get<double>(),
                                             need(a, "n").get<std::size_t>()};
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed run record: ") + e.what());
    }
    return r;
}

inline fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed-" + std::to_string(seed)); }

/// All arms for one seed; writes per-arm summaries and checkpoints.
inline std::vector<SeedEntry> run_seed(const PreparedData& d, const ExperimentConfig& cfg, std::uint64_t seed,
                                       const fs::path& out) {
    std::vector<SeedEntry> entries;
    Json summary = Json::array();
    for (const auto& arm : cfg.arms) {
        ArmOutcome o = run_arm(d, cfg, arm, seed);
        write_json(seed_dir(out, seed) / (arm.name + ".json"), to_json(o));
        save_checkpoint(seed_dir(out, seed) / (arm.name + ".ckpt"), o.checkpoint);
        summary.push_back({{"arm", arm.name},
                           {"gamma", detail::optional_json(o.gamma)},
                           {"auprc", o.report.auprc},
                           {"auroc", o.report.auroc},
                           {"recall_at_precision", o.report.recall_at_precision},
                           {"event_recall", detail::optional_json(o.report.event_recall)}});
        entries.push_back({seed, arm.name, o.gamma, std::move(o.report)});
    }
    write_json(seed_dir(out, seed) / "summary.json", {{"seed", seed}, {"config_hash", config_hash(cfg)}, {"arms", summary}});
    return entries;
}

inline RunRecord empty_record(const ExperimentConfig& cfg, const PreparedData& d) {
    RunRecord r;
    r.name = cfg.name;
    r.config_hash = config_hash(cfg);
    r.baseline = cfg.baseline_arm();
    r.step_minutes = d.step_minutes;
    r.eval = eval_settings(cfg, d);
    for (const auto& a : cfg.arms) r.arms.push_back(a.name);
    r.seeds = cfg.seeds;
    return r;
}

inline void write_run_header(const ExperimentConfig& cfg, const PreparedData& d, const fs::path& out) {
    Json data = to_json(d.stats);
    data["step_minutes"] = d.step_minutes;
    data["horizon_steps"] = d.horizon_steps;
    data["split_sizes"] = {d.split.train.size(), d.split.val.size(), d.split.test.size()};
    if (d.threshold) data["threshold"] = *d.threshold;
    write_json(out / "config.json", {{"config", to_json(cfg)}, {"config_hash", config_hash(cfg)}, {"data", data}});
}

/// Every seed in order, aggregates last. A failing seed leaves a record with
/// status "failed" and the entries gathered so far, then rethrows.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const fs::path& out) {
    const PreparedData d = prepare_data(cfg);
    write_run_header(cfg, d, out);
    RunRecord record = empty_record(cfg, d);
    for (auto seed : cfg.seeds) {
        try {
            auto entries = run_seed(d, cfg, seed, out);
            for (auto& e : entries) record.entries.push_back(std::move(e));
        } catch (const Error& e) {
            record.status = "failed";
            record.error = {{"seed", seed}, {"error", e.code()}, {"message", e.what()}};
            write_json(out / "record.json", to_json(record));
            throw;
        }
    }
    compute_aggregates(record);
    write_json(out / "record.json", to_json(record));
    return record;
}

}  // namespace tls
