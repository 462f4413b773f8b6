#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tls/error.hpp"
#include "tls/labels.hpp"

namespace tls {

/// Scores of one stay next to its labels, as produced at evaluation time.
struct StayPrediction {
    std::string id;
    std::vector<double> scores;
    std::vector<std::uint8_t> event_track;
    LabelTrack labels;
};

/// Unmasked timesteps pooled across stays.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    std::vector<std::size_t> stay_index;
    std::vector<Distance> dist;

    std::size_t size() const { return scores.size(); }

    std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }

    static ScoredSet from_arrays(std::vector<double> scores, std::vector<std::uint8_t> labels) {
        detail::require(scores.size() == labels.size(), "scores and labels differ in length");
        ScoredSet s;
        s.dist.assign(scores.size(), Distance::never());
        s.stay_index.assign(scores.size(), 0);
        s.scores = std::move(scores);
        s.labels = std::move(labels);
        for (auto l : s.labels) detail::require(l == 0 || l == 1, "labels must be 0 or 1");
        for (double v : s.scores) detail::require(std::isfinite(v), "scores must be finite");
        return s;
    }

    static ScoredSet from_predictions(std::span<const StayPrediction> preds) {
        ScoredSet s;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& p = preds[i];
            detail::require(p.scores.size() == p.labels.hard_label.size(), "stay '" + p.id + "': scores and labels differ in length");
            for (std::size_t t = 0; t < p.scores.size(); ++t) {
                if (p.labels.hard_label[t] == Label::masked) continue;
                detail::require(std::isfinite(p.scores[t]), "stay '" + p.id + "': non-finite score");
                s.scores.push_back(p.scores[t]);
                s.labels.push_back(p.labels.hard_label[t] == Label::positive ? 1 : 0);
                s.stay_index.push_back(i);
                s.dist.push_back(p.labels.dist_to_event[t]);
            }
        }
        return s;
    }
};

/// Confusion counts when predicting positive for score >= threshold.
struct OperatingPoint {
    double threshold;
    std::size_t tp, fp;
};

/// One point per distinct score, thresholds descending; tied scores enter together.
inline std::vector<OperatingPoint> operating_points(const ScoredSet& set) {
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
    std::vector<OperatingPoint> points;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (set.labels[order[i]] ? tp : fp) += 1;
        const bool last_of_tie = i + 1 == order.size() || set.scores[order[i + 1]] != set.scores[order[i]];
        if (last_of_tie) points.push_back({set.scores[order[i]], tp, fp});
    }
    return points;
}

struct PrPoint {
    double threshold, precision, recall;
};

struct RocPoint {
    double threshold, fpr, tpr;
};

inline std::vector<PrPoint> pr_curve(const ScoredSet& set) {
    const std::size_t pos = set.positives();
    if (pos == 0) throw UndefinedMetric("precision-recall curve needs at least one positive");
    std::vector<PrPoint> out;
    for (const auto& op : operating_points(set))
        out.push_back({op.threshold, static_cast<double>(op.tp) / static_cast<double>(op.tp + op.fp),
                       static_cast<double>(op.tp) / static_cast<double>(pos)});
    return out;
}

/// Average precision: sum_n (R_n - R_{n-1}) P_n.
inline double auprc(const ScoredSet& set) {
    double area = 0.0, prev_recall = 0.0;
    for (const auto& p : pr_curve(set)) {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    return area;
}

/// ROC points starting from (0, 0) at threshold +inf.
inline std::vector<RocPoint> roc_curve(const ScoredSet& set) {
    const std::size_t pos = set.positives(), neg = set.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("ROC curve needs both classes");
    std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    for (const auto& op : operating_points(set))
        out.push_back({op.threshold, static_cast<double>(op.fp) / static_cast<double>(neg),
                       static_cast<double>(op.tp) / static_cast<double>(pos)});
    return out;
}

/// Trapezoidal area under the ROC curve. The sum runs over integer counts
/// so the only rounding is the final division.
inline double auroc(const ScoredSet& set) {
    const std::size_t pos = set.positives(), neg = set.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("ROC curve needs both classes");
    std::uint64_t twice_area = 0;
    std::size_t prev_tp = 0, prev_fp = 0;
    for (const auto& op : operating_points(set)) {
        twice_area += static_cast<std::uint64_t>(op.fp - prev_fp) * (op.tp + prev_tp);
        prev_tp = op.tp;
        prev_fp = op.fp;
    }
    return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct RecallAtPrecision {
    double recall = 0.0;
    double threshold = std::numeric_limits<double>::infinity();  // +inf when unattainable
    double precision = 0.0;
};

/// Largest recall among operating points with precision >= floor; ties in
/// recall resolve to the highest such threshold (the most precise point).
inline RecallAtPrecision recall_at_precision(const ScoredSet& set, double floor = 0.5) {
    RecallAtPrecision best;
    const std::size_t pos = set.positives();
    if (pos == 0) return best;
    for (const auto& op : operating_points(set)) {
        const double precision = static_cast<double>(op.tp) / static_cast<double>(op.tp + op.fp);
        const double recall = static_cast<double>(op.tp) / static_cast<double>(pos);
        if (precision >= floor && op.tp > 0 && recall > best.recall) best = {recall, op.threshold, precision};
    }
    return best;
}

/// Fraction of events with at least one unmasked score >= threshold in the
/// `horizon_steps` steps before the event start. Events whose window is empty
/// (start of stay) or fully masked are not counted.
inline double event_recall(std::span<const StayPrediction> preds, std::int64_t horizon_steps, double threshold) {
    detail::require(horizon_steps >= 1, "event window must be at least one step");
    std::size_t eligible = 0, detected = 0;
    for (const auto& p : preds) {
        const auto& ev = p.event_track;
        detail::require(ev.size() == p.scores.size() && ev.size() == p.labels.hard_label.size(),
                        "stay '" + p.id + "': scores, events and labels differ in length");
        for (std::size_t ts = 0; ts < ev.size(); ++ts) {
            if (ev[ts] != 1 || (ts > 0 && ev[ts - 1] == 1)) continue;
            const std::size_t from = ts > static_cast<std::size_t>(horizon_steps) ? ts - static_cast<std::size_t>(horizon_steps) : 0;
            bool any_valid = false, hit = false;
            for (std::size_t t = from; t < ts; ++t) {
                if (p.labels.hard_label[t] == Label::masked) continue;
                any_valid = true;
                if (p.scores[t] >= threshold) hit = true;
            }
            if (!any_valid) continue;
            ++eligible;
            detected += hit;
        }
    }
    if (eligible == 0) throw UndefinedMetric("no eligible events for event recall");
    return static_cast<double>(detected) / static_cast<double>(eligible);
}

struct RateBin {
    double lo = 0.0, hi = 0.0;  // distances in (lo, hi]
    std::size_t positives = 0, negatives = 0;
    std::size_t true_pos = 0, false_pos = 0;
    std::optional<double> tpr, fpr, tnr;
};

struct BinnedRates {
    double bin_width = 1.0;
    std::vector<RateBin> bins;
    RateBin beyond;  // finite distance past the last bin
    RateBin never;   // no upcoming event

    /// Index of the bin containing a distance, or nullopt past the last bin.
    std::optional<std::size_t> bin_of(double dist) const {
        if (!(dist > 0.0)) return std::nullopt;
        const auto k = static_cast<std::size_t>(std::ceil(dist / bin_width)) - 1;
        if (k >= bins.size()) return std::nullopt;
        return k;
    }
};

/// TPR and FPR / TNR at `threshold`, binned by distance to the next event in
/// bins (k w, (k+1) w] up to `max_dist`. Empty bins report no rate.
inline BinnedRates binned_rates(const ScoredSet& set, double threshold, double bin_width, double max_dist) {
    detail::require(bin_width > 0.0 && max_dist > 0.0, "bin width and range must be positive");
    BinnedRates out;
    out.bin_width = bin_width;
    const auto count = static_cast<std::size_t>(std::ceil(max_dist / bin_width - 1e-12));
    for (std::size_t k = 0; k < count; ++k) {
        RateBin b;
        b.lo = static_cast<double>(k) * bin_width;
        b.hi = static_cast<double>(k + 1) * bin_width;
        out.bins.push_back(b);
    }
    out.beyond.lo = static_cast<double>(count) * bin_width;
    out.beyond.hi = std::numeric_limits<double>::infinity();
    out.never.lo = out.never.hi = std::numeric_limits<double>::infinity();

    for (std::size_t i = 0; i < set.size(); ++i) {
        RateBin* bin = nullptr;
        if (!set.dist[i].finite()) {
            bin = &out.never;
        } else if (auto k = out.bin_of(set.dist[i].value())) {
            bin = &out.bins[*k];
        } else {
            bin = &out.beyond;
        }
        const bool flagged = set.scores[i] >= threshold;
        if (set.labels[i]) {
            ++bin->positives;
            bin->true_pos += flagged;
        } else {
            ++bin->negatives;
            bin->false_pos += flagged;
        }
    }
    auto finish = [](RateBin& b) {
        if (b.positives) b.tpr = static_cast<double>(b.true_pos) / static_cast<double>(b.positives);
        if (b.negatives) {
            b.fpr = static_cast<double>(b.false_pos) / static_cast<double>(b.negatives);
            b.tnr = 1.0 - *b.fpr;
        }
    };
    for (auto& b : out.bins) finish(b);
    finish(out.beyond);
    finish(out.never);
    return out;
}

struct EvalSettings {
    std::int64_t horizon_steps = 12;
    double precision_floor = 0.5;
    double bin_width_steps = 2.0;
    double max_dist_steps = 24.0;
};

struct EvalReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double recall_at_precision = 0.0;
    double threshold = std::numeric_limits<double>::infinity();
    std::optional<double> event_recall;
    double prevalence = 0.0;
    std::vector<PrPoint> pr_points;
    std::vector<RocPoint> roc_points;
    BinnedRates binned;
};

/// Full timestep- and event-level evaluation. The alarm threshold is picked on
/// the same predictions at the precision floor.
inline EvalReport evaluate_predictions(std::span<const StayPrediction> preds, const EvalSettings& settings) {
    const ScoredSet set = ScoredSet::from_predictions(preds);
    EvalReport r;
    r.pr_points = pr_curve(set);
    r.roc_points = roc_curve(set);
    r.auprc = auprc(set);
    r.auroc = auroc(set);
    r.prevalence = static_cast<double>(set.positives()) / static_cast<double>(set.size());
    const auto rp = recall_at_precision(set, settings.precision_floor);
    r.recall_at_precision = rp.recall;
    r.threshold = rp.threshold;
    try {
        r.event_recall = event_recall(preds, settings.horizon_steps, r.threshold);
    } catch (const UndefinedMetric&) {
        r.event_recall.reset();
    }
    r.binned = binned_rates(set, r.threshold, settings.bin_width_steps, settings.max_dist_steps);
    return r;
}

}  // namespace tls
