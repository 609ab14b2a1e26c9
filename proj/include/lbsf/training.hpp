#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lbsf/behavior_data.hpp"
#include "lbsf/model.hpp"
#include "lbsf/nn/gradcheck.hpp"
#include "lbsf/nn/graph.hpp"

namespace lbsf {

struct TrainConfig {
    double learning_rate = 2e-4;
    std::size_t batch_size = 256;
    std::size_t epochs = 10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::optional<double> grad_clip_norm;
    double pos_weight = 1.0;
    bool early_stopping = false;
    std::size_t patience = 3;
    std::size_t workers = 1;

    void validate() const;
};

// -(1/N) sum [y ln p + (1-y) ln(1-p)], p clamped to [1e-7, 1-1e-7].
// Throws ContractError for N = 0 or mismatched lengths.
double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels);

struct AdamWConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Bias-corrected Adam moments with decoupled decay:
//   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// Non-trainable parameters are left alone.
template <class Real>
class AdamW {
public:
    AdamW() = default;
    AdamW(const nn::ParameterStore<Real>& params, const AdamWConfig& cfg);

    // Throws NumericError naming the first parameter with a non-finite gradient
    // before touching anything.
    void step(nn::ParameterStore<Real>& params, const nn::GradientBuffer<Real>& grads);

    std::uint64_t steps() const noexcept { return m_t; }
    const AdamWConfig& config() const noexcept { return m_cfg; }

private:
    AdamWConfig m_cfg;
    std::vector<std::vector<double>> m_m, m_v;
    std::uint64_t m_t = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> validation_auc;
    std::size_t scored = 0;
    std::size_t skipped = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0; // 1-based; last epoch unless early stopping restored an earlier one
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch BCE training. Users without any active merchant are skipped.
// The model's amount statistics are used as they are; fit them on the
// training split beforehand. Throws EmptyDatasetError when `train_set` has no
// labeled records.
template <class Real>
TrainResult train(const Dataset& train_set, const Dataset* validation, LbsfModel<Real>& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Sets the model's amount statistics from `train_set` when the amount field
// is in use.
template <class Real>
void fit_model_statistics(LbsfModel<Real>& model, const Dataset& train_set);

// Float64 finite-difference check of the mean BCE over the first
// `max_users` labeled, scorable users of `data`. Throws EmptyDatasetError when
// there are none.
nn::GradCheckResult gradient_check(const LbsfModel<double>& model, const Dataset& data, std::size_t max_users = 3,
                                   std::size_t min_coordinates = 200, std::uint64_t seed = 0);

} // namespace lbsf
