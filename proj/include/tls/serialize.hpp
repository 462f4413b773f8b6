#pragma once
// JSON conversions for specs, optimizer settings and evaluation reports.

#include <optional>
#include <string>

#include "tls/io.hpp"
#include "tls/metrics.hpp"
#include "tls/model.hpp"
#include "tls/objectives.hpp"
#include "tls/smoothing.hpp"
#include "tls/train.hpp"

namespace tls {

inline Json to_json(const SmoothingSpec& s) {
    return {{"kind", std::string(to_string(s.kind))},
            {"gamma", s.gamma},
            {"horizon_count", s.horizon_count},
            {"h_shift", s.h_shift},
            {"h_min", s.h_min},
            {"h_max", s.h_max},
            {"h_true", s.h_true}};
}

inline SmoothingSpec smoothing_from_json(const Json& j) {
    using detail::get_or;
    SmoothingSpec s;
    s.kind = smoothing_kind_from_string(get_or<std::string>(j, "kind", "none"));
    s.gamma = get_or(j, "gamma", s.gamma);
    s.horizon_count = get_or(j, "horizon_count", s.horizon_count);
    s.h_shift = get_or(j, "h_shift", s.h_shift);
    s.h_min = get_or(j, "h_min", s.h_min);
    s.h_max = get_or(j, "h_max", s.h_max);
    s.h_true = get_or(j, "h_true", s.h_true);
    return s;
}

inline Json to_json(const ObjectiveSpec& o) {
    return {{"kind", std::string(to_string(o.kind))},
            {"class_balance", o.balance.b1},
            {"zeta", o.zeta},
            {"ls_alpha", o.ls_alpha},
            {"smoothing", to_json(o.smoothing)},
            {"horizon_count", o.horizon_count},
            {"soft_focal", o.soft_focal}};
}

inline ObjectiveSpec objective_from_json(const Json& j) {
    using detail::get_or;
    ObjectiveSpec o;
    o.kind = objective_kind_from_string(get_or<std::string>(j, "kind", "ce"));
    o.balance.b1 = get_or(j, "class_balance", o.balance.b1);
    o.zeta = get_or(j, "zeta", o.zeta);
    o.ls_alpha = get_or(j, "ls_alpha", o.ls_alpha);
    if (j.contains("smoothing")) o.smoothing = smoothing_from_json(j.at("smoothing"));
    o.horizon_count = get_or(j, "horizon_count", o.horizon_count);
    o.soft_focal = get_or(j, "soft_focal", o.soft_focal);
    o.validate();
    return o;
}

inline Json to_json(const ModelSpec& m) {
    return {{"input_dim", m.input_dim},
            {"embed_dim", m.embed_dim},
            {"hidden_dim", m.hidden_dim},
            {"head", m.head == HeadKind::single ? "single" : "multi_horizon"},
            {"horizon_count", m.horizon_count},
            {"l1_embed", m.l1_embed}};
}

inline ModelSpec model_from_json(const Json& j) {
    using detail::get_or;
    ModelSpec m;
    m.input_dim = get_or(j, "input_dim", m.input_dim);
    m.embed_dim = get_or(j, "embed_dim", m.embed_dim);
    m.hidden_dim = get_or(j, "hidden_dim", m.hidden_dim);
    const auto head = get_or<std::string>(j, "head", "single");
    detail::require(head == "single" || head == "multi_horizon", "unknown head '" + head + "'");
    m.head = head == "single" ? HeadKind::single : HeadKind::multi_horizon;
    m.horizon_count = get_or(j, "horizon_count", m.horizon_count);
    m.l1_embed = get_or(j, "l1_embed", m.l1_embed);
    m.validate();
    return m;
}

inline Json to_json(const OptimizerConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},         {"beta2", c.beta2},
            {"epsilon", c.epsilon},             {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
            {"patience", c.patience}};
}

inline OptimizerConfig optimizer_from_json(const Json& j) {
    using detail::get_or;
    OptimizerConfig c;
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.beta1 = get_or(j, "beta1", c.beta1);
    c.beta2 = get_or(j, "beta2", c.beta2);
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.max_epochs = get_or(j, "max_epochs", c.max_epochs);
    c.patience = get_or(j, "patience", c.patience);
    c.validate();
    return c;
}

inline Json to_json(const EvalSettings& s) {
    return {{"horizon_steps", s.horizon_steps},
            {"precision_floor", s.precision_floor},
            {"bin_width_steps", s.bin_width_steps},
            {"max_dist_steps", s.max_dist_steps}};
}

inline EvalSettings eval_settings_from_json(const Json& j) {
    using detail::get_or;
    EvalSettings s;
    s.horizon_steps = get_or(j, "horizon_steps", s.horizon_steps);
    s.precision_floor = get_or(j, "precision_floor", s.precision_floor);
    s.bin_width_steps = get_or(j, "bin_width_steps", s.bin_width_steps);
    s.max_dist_steps = get_or(j, "max_dist_steps", s.max_dist_steps);
    return s;
}

namespace detail {

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::optional<double> optional_from_json(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return number_from_json(j.at(key));
}

inline Json bin_json(const RateBin& b) {
    return {{"lo", number_json(b.lo)},         {"hi", number_json(b.hi)},
            {"positives", b.positives},       {"negatives", b.negatives},
            {"true_pos", b.true_pos},         {"false_pos", b.false_pos},
            {"tpr", optional_json(b.tpr)},    {"fpr", optional_json(b.fpr)},
            {"tnr", optional_json(b.tnr)}};
}

inline RateBin bin_from_json(const Json& j) {
    RateBin b;
    b.lo = number_from_json(need(j, "lo"));
    b.hi = number_from_json(need(j, "hi"));
    b.positives = need(j, "positives").get<std::size_t>();
    b.negatives = need(j, "negatives").get<std::size_t>();
    b.true_pos = need(j, "true_pos").get<std::size_t>();
    b.false_pos = need(j, "false_pos").get<std::size_t>();
    b.tpr = optional_from_json(j, "tpr");
    b.fpr = optional_from_json(j, "fpr");
    b.tnr = optional_from_json(j, "tnr");
    return b;
}

}  // namespace detail

/// Curves travel as parallel arrays to keep files compact.
inline Json to_json(const EvalReport& r) {
    Json pr_t = Json::array(), pr_p = Json::array(), pr_r = Json::array();
    for (const auto& p : r.pr_points) {
        pr_t.push_back(number_json(p.threshold));
        pr_p.push_back(p.precision);
        pr_r.push_back(p.recall);
    }
    Json roc_t = Json::array(), roc_f = Json::array(), roc_r = Json::array();
    for (const auto& p : r.roc_points) {
        roc_t.push_back(number_json(p.threshold));
        roc_f.push_back(p.fpr);
        roc_r.push_back(p.tpr);
    }
    Json bins = Json::array();
    for (const auto& b : r.binned.bins) bins.push_back(detail::bin_json(b));
    return {{"auroc", r.auroc},
            {"auprc", r.auprc},
            {"recall_at_precision", r.recall_at_precision},
            {"threshold", number_json(r.threshold)},
            {"event_recall", detail::optional_json(r.event_recall)},
            {"prevalence", r.prevalence},
            {"pr_curve", {{"threshold", pr_t}, {"precision", pr_p}, {"recall", pr_r}}},
            {"roc_curve", {{"threshold", roc_t}, {"fpr", roc_f}, {"tpr", roc_r}}},
            {"binned",
             {{"bin_width", r.binned.bin_width},
              {"bins", bins},
              {"beyond", detail::bin_json(r.binned.beyond)},
              {"never", detail::bin_json(r.binned.never)}}}};
}

inline EvalReport eval_report_from_json(const Json& j) {
    using detail::need;
    EvalReport r;
    try {
        r.auroc = need(j, "auroc").get<double>();
        r.auprc = need(j, "auprc").get<double>();
        r.recall_at_precision = need(j, "recall_at_precision").get<double>();
        r.threshold = number_from_json(need(j, "threshold"));
        r.event_recall = detail::optional_from_json(j, "event_recall");
        r.prevalence = need(j, "prevalence").get<double>();
        const Json& pr = need(j, "pr_curve");
        for (std::size_t i = 0; i < need(pr, "threshold").size(); ++i)
            r.pr_points.push_back({number_from_json(pr.at("threshold").at(i)), pr.at("precision").at(i).get<double>(),
                                   pr.at("recall").at(i).get<double>()});
        const Json& roc = need(j, "roc_curve");
        for (std::size_t i = 0; i < need(roc, "threshold").size(); ++i)
            r.roc_points.push_back({number_from_json(roc.at("threshold").at(i)), roc.at("fpr").at(i).get<double>(),
                                    roc.at("tpr").at(i).get<double>()});
        const Json& b = need(j, "binned");
        r.binned.bin_width = need(b, "bin_width").get<double>();
        for (const auto& bin : need(b, "bins")) r.binned.bins.push_back(detail::bin_from_json(bin));
        r.binned.beyond = detail::bin_from_json(need(b, "beyond"));
        r.binned.never = detail::bin_from_json(need(b, "never"));
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed evaluation report: ") + e.what());
    }
    return r;
}

}  // namespace tls
