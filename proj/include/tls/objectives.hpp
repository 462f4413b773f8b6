#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tls/error.hpp"
#include "tls/labels.hpp"
#include "tls/smoothing.hpp"

namespace tls {

inline constexpr double kProbabilityFloor = 1e-7;

/// Class reweighting from the positive-class prevalence b(1):
/// omega_c = 1 / (2 b(c)).
struct ClassBalance {
    double b1 = 0.5;

    double w1() const { return 1.0 / (2.0 * b1); }
    double w0() const { return 1.0 / (2.0 * (1.0 - b1)); }

    void validate() const { detail::require(b1 > 0.0 && b1 < 1.0, "class prevalence b1 must lie in (0, 1)"); }
};

struct FocalSpec {
    double zeta = 0.0;
    ClassBalance balance;
};

/// Loss of one prediction and its derivative with respect to that prediction.
struct PointLoss {
    double value = 0.0;
    double d_pred = 0.0;
};

namespace detail {

// Clamped predictions have zero derivative outside the clamp range.
struct Clamped {
    double p;
    bool active;
};

inline Clamped clamp_probability(double p) {
    if (p < kProbabilityFloor) return {kProbabilityFloor, false};
    if (p > 1.0 - kProbabilityFloor) return {1.0 - kProbabilityFloor, false};
    return {p, true};
}

inline PointLoss weighted_ce_point(double pred, double q, double w1, double w0) {
    const auto [p, active] = clamp_probability(pred);
    PointLoss out;
    out.value = -(w1 * q * std::log(p) + w0 * (1.0 - q) * std::log1p(-p));
    out.d_pred = active ? (-w1 * q / p + w0 * (1.0 - q) / (1.0 - p)) : 0.0;
    return out;
}

// Linear in q, so a soft target simply interpolates the two class terms.
inline PointLoss focal_point(double pred, double q, double zeta, double w1, double w0) {
    const auto [p, active] = clamp_probability(pred);
    const double log_p = std::log(p);
    const double log_1mp = std::log1p(-p);
    const double pos_mod = std::pow(1.0 - p, zeta);
    const double neg_mod = std::pow(p, zeta);
    PointLoss out;
    out.value = -(w1 * pos_mod * q * log_p + w0 * neg_mod * (1.0 - q) * log_1mp);
    if (active) {
        const double d_pos = zeta == 0.0 ? 1.0 / p : -zeta * std::pow(1.0 - p, zeta - 1.0) * log_p + pos_mod / p;
        const double d_neg = zeta == 0.0 ? -1.0 / (1.0 - p) : zeta * std::pow(p, zeta - 1.0) * log_1mp - neg_mod / (1.0 - p);
        out.d_pred = -(w1 * q * d_pos + w0 * (1.0 - q) * d_neg);
    }
    return out;
}

inline void require_same_size(std::size_t a, std::size_t b, std::size_t c) {
    require(a == b && b == c, "predictions, targets and mask must have equal length");
}

template <class PointFn>
double masked_mean(std::span<const double> pred, std::span<const double> target, std::span<const std::uint8_t> mask,
                   PointFn&& point) {
    require_same_size(pred.size(), target.size(), mask.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (!mask[t]) continue;
        total += point(pred[t], target[t]).value;
        ++count;
    }
    if (count == 0) throw UndefinedLoss("loss is undefined on a fully masked batch");
    return total / static_cast<double>(count);
}

}  // namespace detail

/// Mean cross-entropy of predictions against (possibly soft) targets over unmasked steps.
inline double bce(std::span<const double> pred, std::span<const double> q, std::span<const std::uint8_t> mask) {
    return detail::masked_mean(pred, q, mask, [](double p, double t) { return detail::weighted_ce_point(p, t, 1.0, 1.0); });
}

inline double weighted_bce(std::span<const double> pred, std::span<const double> q, std::span<const std::uint8_t> mask,
                           const ClassBalance& balance) {
    balance.validate();
    const double w1 = balance.w1(), w0 = balance.w0();
    return detail::masked_mean(pred, q, mask, [=](double p, double t) { return detail::weighted_ce_point(p, t, w1, w0); });
}

/// Focal loss on hard {0, 1} labels.
inline double focal(std::span<const double> pred, std::span<const double> y, std::span<const std::uint8_t> mask,
                    const FocalSpec& spec) {
    spec.balance.validate();
    detail::require(spec.zeta >= 0.0, "focal zeta must be non-negative");
    detail::require_same_size(pred.size(), y.size(), mask.size());
    for (std::size_t t = 0; t < y.size(); ++t)
        if (mask[t]) detail::require(y[t] == 0.0 || y[t] == 1.0, "focal loss requires hard labels");
    const double w1 = spec.balance.w1(), w0 = spec.balance.w0(), zeta = spec.zeta;
    return detail::masked_mean(pred, y, mask, [=](double p, double t) { return detail::focal_point(p, t, zeta, w1, w0); });
}

/// Static binary label smoothing: q = (1 - alpha) y + alpha (1 - y).
inline std::vector<double> ls_targets(std::span<const double> y, double alpha) {
    detail::require(alpha >= 0.0 && alpha <= 1.0, "label smoothing alpha must lie in [0, 1]");
    std::vector<double> q(y.size());
    for (std::size_t t = 0; t < y.size(); ++t) q[t] = (1.0 - alpha) * y[t] + alpha * (1.0 - y[t]);
    return q;
}

/// Multi-horizon cross-entropy: per row, the mean over H horizon columns;
/// then the mean over unmasked rows.
inline double mhp_loss(const Eigen::MatrixXd& pred, const LabelMatrix& labels, std::span<const std::uint8_t> mask) {
    detail::require(static_cast<std::size_t>(pred.rows()) == labels.rows() &&
                        static_cast<std::size_t>(pred.cols()) == labels.cols() && labels.rows() == mask.size(),
                    "multi-horizon predictions, labels and mask shapes differ");
    detail::require(labels.cols() >= 1, "multi-horizon loss needs at least one horizon");
    const double inv_h = 1.0 / static_cast<double>(labels.cols());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < labels.rows(); ++t) {
        if (!mask[t]) continue;
        double row = 0.0;
        for (std::size_t k = 0; k < labels.cols(); ++k)
            row += detail::weighted_ce_point(pred(t, k), as_real(labels(t, k)), 1.0, 1.0).value;
        total += row * inv_h;
        ++count;
    }
    if (count == 0) throw UndefinedLoss("loss is undefined on a fully masked batch");
    return total / static_cast<double>(count);
}

// --- Training objectives -----------------------------------------------------

enum class ObjectiveKind { cross_entropy, weighted_cross_entropy, focal, label_smoothing, temporal_smoothing, multi_horizon };

inline std::string_view to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::cross_entropy: return "ce";
        case ObjectiveKind::weighted_cross_entropy: return "weighted_ce";
        case ObjectiveKind::focal: return "focal";
        case ObjectiveKind::label_smoothing: return "ls";
        case ObjectiveKind::temporal_smoothing: return "tls";
        case ObjectiveKind::multi_horizon: return "mhp";
    }
    return "ce";
}

inline ObjectiveKind objective_kind_from_string(std::string_view name) {
    for (auto k : {ObjectiveKind::cross_entropy, ObjectiveKind::weighted_cross_entropy, ObjectiveKind::focal,
                   ObjectiveKind::label_smoothing, ObjectiveKind::temporal_smoothing, ObjectiveKind::multi_horizon})
        if (to_string(k) == name) return k;
    throw InvalidInput("unknown objective '" + std::string(name) + "'");
}

/// Everything needed to turn a stay's labels into training targets and a
/// per-prediction loss. `balance` also applies to TLS, which gives the
/// smoothed-targets-plus-class-weights combination.
struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::cross_entropy;
    ClassBalance balance;
    double zeta = 0.0;
    double ls_alpha = 0.0;
    SmoothingSpec smoothing;          // tls
    std::size_t horizon_count = 11;   // mhp grid over (h_min, h_max) of `smoothing`
    bool soft_focal = false;          // experimental: focal weighting on smoothed targets

    void validate() const {
        balance.validate();
        detail::require(zeta >= 0.0, "focal zeta must be non-negative");
        detail::require(ls_alpha >= 0.0 && ls_alpha <= 1.0, "label smoothing alpha must lie in [0, 1]");
        if (kind == ObjectiveKind::multi_horizon) detail::require(horizon_count >= 1, "mhp needs at least one horizon");
    }

    PointLoss point(double pred, double target) const {
        const bool focal_weighting = kind == ObjectiveKind::focal || (soft_focal && kind == ObjectiveKind::temporal_smoothing);
        if (focal_weighting) return detail::focal_point(pred, target, zeta, balance.w1(), balance.w0());
        if (kind == ObjectiveKind::weighted_cross_entropy || kind == ObjectiveKind::temporal_smoothing)
            return detail::weighted_ce_point(pred, target, balance.w1(), balance.w0());
        return detail::weighted_ce_point(pred, target, 1.0, 1.0);
    }

    bool multi_output() const { return kind == ObjectiveKind::multi_horizon; }

    HorizonGrid horizon_grid() const {
        return HorizonGrid::uniform(smoothing.h_min, smoothing.h_max, horizon_count);
    }
};

/// Per-step single-output targets for every objective except MHP.
inline TargetTrack make_targets(const LabelTrack& labels, const ObjectiveSpec& objective) {
    detail::require(!objective.multi_output(), "multi-horizon objectives use horizon label matrices");
    if (objective.kind == ObjectiveKind::temporal_smoothing) return smooth_targets(labels, objective.smoothing);
    TargetTrack out;
    out.mask = labels.mask();
    out.q.resize(labels.hard_label.size());
    for (std::size_t t = 0; t < out.q.size(); ++t) out.q[t] = as_real(labels.hard_label[t]);
    if (objective.kind == ObjectiveKind::label_smoothing) out.q = ls_targets(out.q, objective.ls_alpha);
    return out;
}

}  // namespace tls
