#pragma once
// Synthetic ICU-like cohorts: a latent AR(1) risk drives event onsets and a
// handful of noisy, lagged feature channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <cstdio>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tls/error.hpp"
#include "tls/io.hpp"
#include "tls/labels.hpp"
#include "tls/random.hpp"

namespace tls {

struct GenConfig {
    std::size_t n_stays = 714;
    std::size_t t_min = 150;
    std::size_t t_max = 250;
    int step_minutes = 60;
    std::size_t informative = 4;
    std::size_t distractors = 4;
    double rho = 0.95;     // latent persistence
    double sigma = 0.3;    // latent innovation scale
    double threshold = 2.0;
    std::optional<double> target_prevalence;  // when set, `threshold` is calibrated to hit it
    std::int64_t horizon_steps = 12;          // horizon used for prevalence
    std::size_t sustain = 3;                  // steps above threshold before an onset
    std::size_t event_length = 6;
    std::size_t onset_delay = 0;              // charted onset lags the trigger by U{0..onset_delay} steps
    double reset_level = 0.0;                 // latent value after an event ends
    std::optional<double> initial_risk;       // default: a stationary draw
    double obs_noise = 0.5;
    std::size_t max_lag = 3;
    std::uint64_t seed = 1;

    double stationary_sd() const { return sigma / std::sqrt(1.0 - rho * rho); }

    void validate() const {
        detail::require(n_stays >= 1, "n_stays must be >= 1");
        detail::require(t_min >= 2 && t_min <= t_max, "stay length range must be nonempty with t_min >= 2");
        detail::require(step_minutes > 0, "step_minutes must be positive");
        detail::require(informative + distractors >= 1, "at least one feature channel is needed");
        detail::require(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
        detail::require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be finite and >= 0");
        detail::require(std::isfinite(threshold), "threshold must be finite");
        detail::require(sustain >= 1 && event_length >= 1, "sustain and event_length must be >= 1");
        detail::require(reset_level < threshold || target_prevalence.has_value(), "reset_level must lie below threshold");
        detail::require(obs_noise >= 0.0 && std::isfinite(obs_noise), "obs_noise must be finite and >= 0");
        detail::require(horizon_steps >= 1, "horizon_steps must be >= 1");
        if (target_prevalence)
            detail::require(*target_prevalence > 0.0 && *target_prevalence < 1.0, "target prevalence must lie in (0, 1)");
    }

    /// Prevalence presets modelled on three clinical tasks: circulatory
    /// failure (4.3%), respiratory failure (38.6%), both at a 12 h horizon,
    /// and decompensation (2.1%) at 24 h.
    static GenConfig preset(std::string_view name) {
        GenConfig c;
        if (name == "circulatory") {
            c.target_prevalence = 0.043;
        } else if (name == "respiratory") {
            c.target_prevalence = 0.386;
            c.sustain = 1;
            c.event_length = 12;
        } else if (name == "decompensation") {
            c.target_prevalence = 0.021;
            c.horizon_steps = 24;
            c.event_length = 1000;  // runs to the end of the stay
        } else {
            throw InvalidInput("unknown generator preset '" + std::string(name) + "'");
        }
        return c;
    }
};

struct LatentPath {
    std::vector<double> risk;
    std::vector<std::uint8_t> events;
};

/// One stay's latent trajectory. The number of draws does not depend on the
/// threshold, so prevalence moves smoothly while calibrating. Charting
/// delays come from `delays` when onset_delay > 0.
inline LatentPath simulate_latent(const GenConfig& cfg, double threshold, std::size_t length, Rng& rng,
                                  Rng* delays = nullptr) {
    LatentPath p;
    p.risk.resize(length);
    p.events.assign(length, 0);
    double r = cfg.initial_risk ? *cfg.initial_risk : cfg.stationary_sd() * rng.normal();
    std::size_t above = 0, waiting = 0, remaining = 0;
    for (std::size_t t = 0; t < length; ++t) {
        const double eps = rng.normal();
        if (t > 0) r = cfg.rho * r + cfg.sigma * eps;
        p.risk[t] = r;
        if (waiting > 0) {  // triggered, not yet charted
            --waiting;
            continue;
        }
        if (remaining > 0) {
            p.events[t] = 1;
            if (--remaining == 0) r = cfg.reset_level;
            continue;
        }
        above = r > threshold ? above + 1 : 0;
        if (above >= cfg.sustain) {
            above = 0;
            waiting = cfg.onset_delay > 0 && delays ? static_cast<std::size_t>(delays->below(cfg.onset_delay + 1)) : 0;
            remaining = cfg.event_length;
            if (waiting == 0) {
                p.events[t] = 1;
                if (--remaining == 0) r = cfg.reset_level;
            }
        }
    }
    return p;
}

struct CohortStats {
    std::size_t stays = 0;
    std::size_t steps = 0;
    std::size_t events = 0;          // onsets (0 -> 1 transitions)
    std::size_t stays_with_event = 0;
    std::size_t positive_steps = 0;  // unmasked steps with an onset within the horizon
    std::size_t unmasked_steps = 0;

    double prevalence() const {
        return unmasked_steps ? static_cast<double>(positive_steps) / static_cast<double>(unmasked_steps) : 0.0;
    }
};

inline void add_track(CohortStats& s, std::span<const std::uint8_t> events, std::int64_t horizon_steps) {
    const auto dist = time_to_event(events);
    ++s.stays;
    s.steps += events.size();
    std::size_t onsets = 0;
    for (std::size_t t = 1; t < events.size(); ++t) onsets += events[t] == 1 && events[t - 1] == 0;
    s.events += onsets;
    s.stays_with_event += onsets > 0;
    for (std::size_t t = 0; t < events.size(); ++t) {
        if (events[t]) continue;
        ++s.unmasked_steps;
        s.positive_steps += dist[t].finite() && dist[t].steps() <= horizon_steps;
    }
}

inline CohortStats cohort_stats(std::span<const Stay> stays, std::int64_t horizon_steps) {
    CohortStats s;
    for (const auto& stay : stays) add_track(s, stay.event_track, horizon_steps);
    return s;
}

namespace detail {

inline Rng length_stream(std::uint64_t seed, std::size_t stay) { return Rng::derive(seed, 3 * stay + 1); }
inline Rng latent_stream(std::uint64_t seed, std::size_t stay) { return Rng::derive(seed, 3 * stay + 2); }
inline Rng feature_stream(std::uint64_t seed, std::size_t stay) { return Rng::derive(seed, 3 * stay + 3); }
inline Rng delay_stream(std::uint64_t seed, std::size_t stay) { return Rng::derive(~seed, stay); }

inline std::size_t stay_length(const GenConfig& cfg, std::size_t i) {
    Rng rng = length_stream(cfg.seed, i);
    return cfg.t_min + static_cast<std::size_t>(rng.below(cfg.t_max - cfg.t_min + 1));
}

inline CohortStats latent_stats(const GenConfig& cfg, double threshold) {
    CohortStats s;
    for (std::size_t i = 0; i < cfg.n_stays; ++i) {
        Rng rng = latent_stream(cfg.seed, i), delays = delay_stream(cfg.seed, i);
        const auto path = simulate_latent(cfg, threshold, stay_length(cfg, i), rng, &delays);
        add_track(s, path.events, cfg.horizon_steps);
    }
    return s;
}

}  // namespace detail

/// Bisection on the threshold so the cohort's positive-step fraction at
/// `cfg.horizon_steps` approaches `target`. Returns the closest threshold seen.
inline double calibrate_threshold(GenConfig cfg, double target, int iterations = 40) {
    detail::require(target > 0.0 && target < 1.0, "target prevalence must lie in (0, 1)");
    double lo = cfg.reset_level, hi = cfg.reset_level + 8.0 * std::max(cfg.stationary_sd(), 1e-3);
    double best = hi, best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double p = detail::latent_stats(cfg, mid).prevalence();
        if (std::abs(p - target) < best_err) {
            best_err = std::abs(p - target);
            best = mid;
        }
        (p > target ? lo : hi) = mid;
    }
    return best;
}

struct Cohort {
    std::vector<Stay> stays;
    double threshold = 0.0;
    CohortStats stats;
};

inline std::string stay_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "stay-%05zu", i);
    return buf;
}

/// One stay, features included. Channel parameters are shared by the cohort.
struct ChannelParams {
    std::vector<double> gain, offset;
    std::vector<std::size_t> lag;
};

inline ChannelParams draw_channels(const GenConfig& cfg) {
    Rng rng = Rng::derive(cfg.seed, 0);
    ChannelParams c;
    const std::size_t D = cfg.informative + cfg.distractors;
    for (std::size_t j = 0; j < D; ++j) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        c.gain.push_back(j < cfg.informative ? sign * rng.uniform(0.5, 1.5) : 0.0);
        c.offset.push_back(rng.normal());
        c.lag.push_back(j < cfg.informative ? static_cast<std::size_t>(rng.below(cfg.max_lag + 1)) : 0);
    }
    return c;
}

inline Stay simulate_stay(const GenConfig& cfg, double threshold, const ChannelParams& channels, std::size_t i) {
    const std::size_t T = detail::stay_length(cfg, i);
    Rng latent = detail::latent_stream(cfg.seed, i), delays = detail::delay_stream(cfg.seed, i);
    const auto path = simulate_latent(cfg, threshold, T, latent, &delays);
    Rng noise = detail::feature_stream(cfg.seed, i);
    const std::size_t D = channels.gain.size();
    Stay s;
    s.id = stay_id(i);
    s.step_minutes = cfg.step_minutes;
    s.features.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < D; ++j) {
            const double eps = noise.normal();
            double x = channels.offset[j];
            if (j < cfg.informative) {
                const std::size_t src = t >= channels.lag[j] ? t - channels.lag[j] : 0;
                x += channels.gain[j] * path.risk[src] + cfg.obs_noise * eps;
            } else {
                x += eps;
            }
            s.features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = x;
        }
    }
    s.event_track = path.events;
    return s;
}

inline Cohort generate(const GenConfig& cfg) {
    cfg.validate();
    Cohort c;
    c.threshold = cfg.target_prevalence ? calibrate_threshold(cfg, *cfg.target_prevalence) : cfg.threshold;
    const auto channels = draw_channels(cfg);
    c.stays.reserve(cfg.n_stays);
    for (std::size_t i = 0; i < cfg.n_stays; ++i) c.stays.push_back(simulate_stay(cfg, c.threshold, channels, i));
    c.stats = cohort_stats(c.stays, cfg.horizon_steps);
    if (c.stats.events == 0)
        throw GenerationError("generated cohort has no events (prevalence " + format_number(c.stats.prevalence()) +
                              " at threshold " + format_number(c.threshold) + ")");
    return c;
}

// --- JSON --------------------------------------------------------------------

inline Json to_json(const GenConfig& c) {
    Json j{{"n_stays", c.n_stays},         {"t_min", c.t_min},
           {"t_max", c.t_max},             {"step_minutes", c.step_minutes},
           {"informative", c.informative}, {"distractors", c.distractors},
           {"rho", c.rho},                 {"sigma", c.sigma},
           {"threshold", c.threshold},     {"horizon_steps", c.horizon_steps},
           {"sustain", c.sustain},         {"event_length", c.event_length},
           {"onset_delay", c.onset_delay}, {"reset_level", c.reset_level},
           {"obs_noise", c.obs_noise},     {"max_lag", c.max_lag},
           {"seed", c.seed}};
    j["target_prevalence"] = c.target_prevalence ? Json(*c.target_prevalence) : Json(nullptr);
    j["initial_risk"] = c.initial_risk ? Json(*c.initial_risk) : Json(nullptr);
    return j;
}

inline GenConfig gen_config_from_json(const Json& j) {
    if (!j.is_object()) throw InvalidInput("generator config must be an object");
    GenConfig c = j.contains("preset") ? GenConfig::preset(j.at("preset").get<std::string>()) : GenConfig{};
    using detail::get_or;
    c.n_stays = get_or(j, "n_stays", c.n_stays);
    c.t_min = get_or(j, "t_min", c.t_min);
    c.t_max = get_or(j, "t_max", c.t_max);
    c.step_minutes = get_or(j, "step_minutes", c.step_minutes);
    c.informative = get_or(j, "informative", c.informative);
    c.distractors = get_or(j, "distractors", c.distractors);
    c.rho = get_or(j, "rho", c.rho);
    c.sigma = get_or(j, "sigma", c.sigma);
    c.threshold = get_or(j, "threshold", c.threshold);
    c.horizon_steps = get_or(j, "horizon_steps", c.horizon_steps);
    c.sustain = get_or(j, "sustain", c.sustain);
    c.event_length = get_or(j, "event_length", c.event_length);
    c.onset_delay = get_or(j, "onset_delay", c.onset_delay);
    c.reset_level = get_or(j, "reset_level", c.reset_level);
    c.obs_noise = get_or(j, "obs_noise", c.obs_noise);
    c.max_lag = get_or(j, "max_lag", c.max_lag);
    c.seed = get_or(j, "seed", c.seed);
    if (j.contains("target_prevalence"))
        c.target_prevalence = j.at("target_prevalence").is_null() ? std::nullopt
                                                                   : std::optional<double>(j.at("target_prevalence").get<double>());
    if (j.contains("initial_risk") && !j.at("initial_risk").is_null()) c.initial_risk = j.at("initial_risk").get<double>();
    c.validate();
    return c;
}

inline Json to_json(const CohortStats& s) {
    return {{"stays", s.stays},
            {"steps", s.steps},
            {"events", s.events},
            {"stays_with_event", s.stays_with_event},
            {"positive_steps", s.positive_steps},
            {"unmasked_steps", s.unmasked_steps},
            {"prevalence", s.prevalence()}};
}

/// {stays: [{id, step_minutes, features: rows, events}]}
inline Json cohort_to_json(std::span<const Stay> stays) {
    Json arr = Json::array();
    for (const auto& s : stays) {
        Json rows = Json::array();
        for (Eigen::Index t = 0; t < s.features.rows(); ++t) {
            Json row = Json::array();
            for (Eigen::Index j = 0; j < s.features.cols(); ++j) row.push_back(s.features(t, j));
            rows.push_back(std::move(row));
        }
        arr.push_back({{"id", s.id}, {"step_minutes", s.step_minutes}, {"features", std::move(rows)}, {"events", s.event_track}});
    }
    return {{"stays", std::move(arr)}};
}

inline std::vector<Stay> cohort_from_json(const Json& doc) {
    const Json& arr = detail::need(doc, "stays");
    if (!arr.is_array()) throw InvalidInput("'stays' must be an array");
    std::vector<Stay> out;
    std::set<std::string> ids;
    try {
        for (const auto& js : arr) {
            Stay s;
            s.id = detail::need(js, "id").get<std::string>();
            s.step_minutes = detail::get_or(js, "step_minutes", 60);
            const Json& rows = detail::need(js, "features");
            const Json& events = detail::need(js, "events");
            detail::require(rows.is_array() && !rows.empty(), "stay '" + s.id + "' has no feature rows");
            const auto T = static_cast<Eigen::Index>(rows.size());
            const auto D = static_cast<Eigen::Index>(rows.at(0).size());
            s.features.resize(T, D);
            for (Eigen::Index t = 0; t < T; ++t) {
                const Json& row = rows.at(static_cast<std::size_t>(t));
                detail::require(row.is_array() && static_cast<Eigen::Index>(row.size()) == D,
                                "stay '" + s.id + "' has ragged feature rows");
                for (Eigen::Index j = 0; j < D; ++j) s.features(t, j) = row.at(static_cast<std::size_t>(j)).get<double>();
            }
            for (const auto& e : events) {
                const int v = e.get<int>();
                detail::require(v == 0 || v == 1, "stay '" + s.id + "' has a non-binary event entry");
                s.event_track.push_back(static_cast<std::uint8_t>(v));
            }
            validate(s);
            detail::require(ids.insert(s.id).second, "duplicate stay id '" + s.id + "'");
            out.push_back(std::move(s));
        }
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed cohort: ") + e.what());
    }
    detail::require(!out.empty(), "cohort has no stays");
    return out;
}

}  // namespace tls
