#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "tls/error.hpp"
#include "tls/model.hpp"
#include "tls/random.hpp"

namespace tls {

struct OptimizerConfig {
    double learning_rate = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 16;  // whole stays per batch
    std::size_t max_epochs = 50;
    std::size_t patience = 10;

    void validate() const {
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
        detail::require(batch_size >= 1 && max_epochs >= 1 && patience >= 1, "batch size, epochs and patience must be >= 1");
    }
};

class Adam {
public:
    Adam(std::size_t size, const OptimizerConfig& cfg)
        : cfg_(cfg), m_(ParamVector::Zero(static_cast<Eigen::Index>(size))), v_(m_) {}

    void step(ParamVector& theta, const ParamVector& grad) {
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        theta.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
    }

private:
    OptimizerConfig cfg_;
    ParamVector m_, v_;
    std::uint64_t t_ = 0;
};

/// A stay paired with its training targets.
struct Example {
    const Stay* stay;
    Targets targets;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ParamVector params;  // best validation-loss epoch
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

inline double dataset_loss(const std::vector<Example>& data, const ParamVector& theta, const ModelSpec& spec,
                           const ObjectiveSpec& objective) {
    std::vector<const Stay*> stays;
    std::vector<const Targets*> targets;
    for (const auto& ex : data) {
        stays.push_back(ex.stay);
        targets.push_back(&ex.targets);
    }
    return mean_loss(stays, targets, theta, spec, objective, /*include_penalty=*/false);
}

/// Mini-batch training with early stopping on validation loss. Batches are
/// whole stays in a seeded order; identical inputs give identical histories.
inline TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set, ParamVector theta,
                         const ModelSpec& spec, const ObjectiveSpec& objective, const OptimizerConfig& cfg,
                         std::uint64_t seed) {
    spec.validate();
    objective.validate();
    cfg.validate();
    detail::require(!train_set.empty() && !val_set.empty(), "training and validation sets must be non-empty");
    for (const auto& tr : train_set)
        for (const auto& va : val_set)
            detail::require(tr.stay != va.stay && tr.stay->id != va.stay->id, "train and validation splits overlap");

    Rng rng(seed);
    Adam adam(static_cast<std::size_t>(theta.size()), cfg);
    TrainResult result;
    result.params = theta;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const Stay*> stays;
    std::vector<const Targets*> targets;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            stays.clear();
            targets.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
                stays.push_back(train_set[order[i]].stay);
                targets.push_back(&train_set[order[i]].targets);
            }
            const auto lg = loss_and_gradient(stays, targets, theta, spec, objective);
            if (!std::isfinite(lg.loss))
                throw NumericFailure("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batches));
            adam.step(theta, lg.grad);
            epoch_loss += lg.loss;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(batches);
        rec.val_loss = dataset_loss(val_set, theta, spec, objective);
        if (!std::isfinite(rec.val_loss))
            throw NumericFailure("validation loss is not finite at epoch " + std::to_string(epoch));
        result.history.push_back(rec);
        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            result.params = theta;
            result.best_epoch = epoch;
        } else if (epoch - result.best_epoch >= cfg.patience) {
            break;
        }
    }
    return result;
}

}  // namespace tls
