#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tls/error.hpp"

namespace tls {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 1 = valid (contributes to losses and metrics), 0 = masked.
using Mask = std::vector<std::uint8_t>;

/// One patient trajectory sampled on a regular clock.
struct Stay {
    std::string id;
    int step_minutes = 60;
    FeatureMatrix features;                 // T x D
    std::vector<std::uint8_t> event_track;  // length T, entries in {0, 1}

    std::size_t length() const { return event_track.size(); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
};

inline void validate(const Stay& stay) {
    detail::require(stay.step_minutes > 0, "stay '" + stay.id + "': step_minutes must be positive");
    detail::require(!stay.event_track.empty(), "stay '" + stay.id + "': empty event track");
    detail::require(static_cast<std::size_t>(stay.features.rows()) == stay.event_track.size(),
                    "stay '" + stay.id + "': feature rows do not match event track length");
    for (auto e : stay.event_track)
        detail::require(e == 0 || e == 1, "stay '" + stay.id + "': event entries must be 0 or 1");
}

/// Converts a duration to whole steps, rounding to nearest with ties up.
inline std::int64_t to_steps(double minutes, int step_minutes) {
    detail::require(step_minutes > 0, "step_minutes must be positive");
    return static_cast<std::int64_t>(std::floor(minutes / step_minutes + 0.5));
}

/// Steps until the next event start; `never()` when no event lies ahead.
class Distance {
public:
    constexpr Distance() = default;
    constexpr explicit Distance(std::int64_t steps) : steps_(steps) {}

    static constexpr Distance never() { return Distance(kNever); }

    constexpr bool finite() const { return steps_ != kNever; }
    constexpr std::int64_t steps() const { return steps_; }
    double value() const {
        return finite() ? static_cast<double>(steps_) : std::numeric_limits<double>::infinity();
    }

    constexpr auto operator<=>(const Distance&) const = default;

private:
    static constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
    std::int64_t steps_ = kNever;
};

enum class Label : std::int8_t { negative = 0, positive = 1, masked = -1 };

/// Ascending horizons (in steps, possibly fractional) for multi-horizon labels
/// and the staircase smoothing parametrization.
class HorizonGrid {
public:
    explicit HorizonGrid(std::vector<double> horizons, std::optional<double> true_horizon = std::nullopt)
        : horizons_(std::move(horizons)) {
        detail::require(!horizons_.empty(), "horizon grid must contain at least one horizon");
        for (std::size_t k = 0; k < horizons_.size(); ++k) {
            detail::require(std::isfinite(horizons_[k]) && horizons_[k] > 0.0, "horizons must be positive and finite");
            if (k > 0) detail::require(horizons_[k] > horizons_[k - 1], "horizon grid must be strictly ascending");
        }
        if (true_horizon) {
            auto it = std::find_if(horizons_.begin(), horizons_.end(),
                                   [&](double v) { return std::abs(v - *true_horizon) <= 1e-9 * std::max(1.0, v); });
            detail::require(it != horizons_.end(), "horizon grid does not contain the true horizon");
            index_of_true_ = static_cast<std::size_t>(it - horizons_.begin());
        }
    }

    /// `count` horizons evenly placed strictly inside (h_min, h_max]:
    /// h_k = h_min + k (h_max - h_min) / (count + 1), k = 1..count.
    /// With (0, 2h) and an odd count the middle horizon is h; for h = 12 and
    /// count = 11 this is {2, 4, ..., 22}.
    static HorizonGrid uniform(double h_min, double h_max, std::size_t count,
                               std::optional<double> true_horizon = std::nullopt) {
        detail::require(count >= 1, "horizon count must be at least 1");
        detail::require(h_min >= 0.0 && h_max > h_min, "horizon range must satisfy 0 <= h_min < h_max");
        std::vector<double> hs(count);
        const double spacing = (h_max - h_min) / static_cast<double>(count + 1);
        for (std::size_t k = 0; k < count; ++k) hs[k] = h_min + static_cast<double>(k + 1) * spacing;
        if (true_horizon) {
            // Snap the exact true horizon onto the grid to absorb rounding.
            for (auto& v : hs)
                if (std::abs(v - *true_horizon) <= 1e-9 * std::max(1.0, v)) v = *true_horizon;
        }
        return HorizonGrid(std::move(hs), true_horizon);
    }

    std::size_t size() const { return horizons_.size(); }
    double operator[](std::size_t k) const { return horizons_[k]; }
    const std::vector<double>& horizons() const { return horizons_; }
    std::optional<std::size_t> index_of_true() const { return index_of_true_; }

private:
    std::vector<double> horizons_;
    std::optional<std::size_t> index_of_true_;
};

/// Distance from every step to the next event start (a 0 -> 1 transition).
/// Zero offsets are excluded, so a step at an event start looks past it.
inline std::vector<Distance> time_to_event(std::span<const std::uint8_t> event_track) {
    detail::require(!event_track.empty(), "event track must be non-empty");
    for (auto e : event_track) detail::require(e == 0 || e == 1, "event entries must be 0 or 1");

    const auto n = static_cast<std::int64_t>(event_track.size());
    std::vector<Distance> dist(event_track.size());
    // Backward sweep: next_start is the closest start strictly after t.
    std::int64_t next_start = -1;
    for (std::int64_t t = n - 1; t >= 0; --t) {
        dist[t] = next_start < 0 ? Distance::never() : Distance(next_start - t);
        const bool is_start = event_track[t] == 1 && t > 0 && event_track[t - 1] == 0;
        if (is_start) next_start = t;
    }
    return dist;
}

inline std::vector<Label> hard_labels(std::span<const Distance> dist, std::span<const std::uint8_t> event_track,
                                      std::int64_t horizon_steps) {
    detail::require(dist.size() == event_track.size(), "distance and event track lengths differ");
    detail::require(horizon_steps >= 1, "horizon must be at least one step");
    std::vector<Label> labels(dist.size());
    for (std::size_t t = 0; t < dist.size(); ++t) {
        if (event_track[t] == 1 || dist[t].steps() == 0)
            labels[t] = Label::masked;
        else if (dist[t].finite() && dist[t].steps() <= horizon_steps)
            labels[t] = Label::positive;
        else
            labels[t] = Label::negative;
    }
    return labels;
}

/// Row-major T x H matrix of labels, one column per horizon.
class LabelMatrix {
public:
    LabelMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, Label::negative) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    Label& operator()(std::size_t t, std::size_t k) { return data_[t * cols_ + k]; }
    Label operator()(std::size_t t, std::size_t k) const { return data_[t * cols_ + k]; }
    bool row_masked(std::size_t t) const { return cols_ > 0 && data_[t * cols_] == Label::masked; }

private:
    std::size_t rows_, cols_;
    std::vector<Label> data_;
};

/// Per-horizon labels: column k is positive iff 0 < dist <= h_k. Rows at
/// event steps are masked across every horizon.
inline LabelMatrix horizon_labels(std::span<const Distance> dist, std::span<const std::uint8_t> event_track,
                                  const HorizonGrid& grid) {
    detail::require(dist.size() == event_track.size(), "distance and event track lengths differ");
    LabelMatrix out(dist.size(), grid.size());
    for (std::size_t t = 0; t < dist.size(); ++t) {
        const bool masked = event_track[t] == 1 || dist[t].steps() == 0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            if (masked)
                out(t, k) = Label::masked;
            else
                out(t, k) = dist[t].value() <= grid[k] ? Label::positive : Label::negative;
        }
    }
    return out;
}

struct LabelTrack {
    std::vector<Distance> dist_to_event;
    std::vector<Label> hard_label;
    std::int64_t horizon_steps = 1;

    Mask mask() const {
        Mask m(hard_label.size());
        for (std::size_t t = 0; t < m.size(); ++t) m[t] = hard_label[t] == Label::masked ? 0 : 1;
        return m;
    }
};

inline LabelTrack make_label_track(const Stay& stay, std::int64_t horizon_steps) {
    validate(stay);
    LabelTrack track;
    track.dist_to_event = time_to_event(stay.event_track);
    track.hard_label = hard_labels(track.dist_to_event, stay.event_track, horizon_steps);
    track.horizon_steps = horizon_steps;
    return track;
}

inline double as_real(Label l) { return l == Label::positive ? 1.0 : 0.0; }

}  // namespace tls
