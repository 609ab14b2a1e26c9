#include "lbsf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "lbsf/error.hpp"
#include "lbsf/evaluation.hpp"
#include "lbsf/folding.hpp"

namespace lbsf {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("train.learning_rate must be > 0");
    }
    if (batch_size == 0) {
        throw ConfigError("train.batch_size must be >= 1");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw ConfigError("train.eps must be > 0");
    }
    if (weight_decay < 0.0) {
        throw ConfigError("train.weight_decay must be >= 0");
    }
    if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
        throw ConfigError("train.grad_clip_norm must be > 0");
    }
    if (!(pos_weight > 0.0)) {
        throw ConfigError("train.pos_weight must be > 0");
    }
    if (workers == 0) {
        throw ConfigError("train.workers must be >= 1");
    }
}

double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.empty()) {
        throw ContractError("bce_loss: no samples");
    }
    if (probs.size() != labels.size()) {
        throw ContractError("bce_loss: probabilities and labels differ in length");
    }
    constexpr double clamp = 1e-7;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], clamp, 1.0 - clamp);
        total -= labels[i] != 0 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

template <class Real>
AdamW<Real>::AdamW(const nn::ParameterStore<Real>& params, const AdamWConfig& cfg) : m_cfg(cfg) {
    for (const auto& p : params) {
        m_m.emplace_back(p.value.size(), 0.0);
        m_v.emplace_back(p.value.size(), 0.0);
    }
}

template <class Real>
void AdamW<Real>::step(nn::ParameterStore<Real>& params, const nn::GradientBuffer<Real>& grads) {
    if (params.size() != m_m.size() || grads.size() != params.size()) {
        throw ContractError("AdamW: parameter layout changed since construction");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].trainable && !grads[i].all_finite()) {
            throw NumericError("non-finite gradient in parameter '" + params[i].name + "'");
        }
    }
    ++m_t;
    const double b1 = m_cfg.beta1;
    const double b2 = m_cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(m_t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(m_t));
    const double lr = m_cfg.learning_rate;
    const double wd = m_cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) {
            continue;
        }
        auto& theta = params[i].value;
        const auto& g = grads[i];
        auto& m = m_m[i];
        auto& v = m_v[i];
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double gk = static_cast<double>(g[k]);
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            const double t = static_cast<double>(theta[k]);
            theta[k] = static_cast<Real>(t - lr * (m_hat / (std::sqrt(v_hat) + m_cfg.eps) + wd * t));
        }
    }
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Example {
    FoldedUser folded;
    int label = 0;
    bool scorable = false;
};

template <class Real>
std::optional<double> validation_auc(const Dataset* validation, const LbsfModel<Real>& model, std::size_t workers) {
    if (validation == nullptr || validation->empty()) {
        return std::nullopt;
    }
    const EvalReport r = evaluate(*validation, model, 0.10, workers);
    return r.auc;
}

} // namespace

template <class Real>
void fit_model_statistics(LbsfModel<Real>& model, const Dataset& train_set) {
    if (model.config().ablation.use_amount) {
        model.set_amount_stats(fit_amount_stats(train_set));
    }
}

template <class Real>
TrainResult train(const Dataset& train_set, const Dataset* validation, LbsfModel<Real>& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    std::vector<Example> examples;
    for (const auto& rec : train_set.records) {
        if (!rec.label) {
            continue;
        }
        Example ex;
        ex.folded = fold_sequence(rec, model.config().fold);
        ex.label = *rec.label;
        ex.scorable = ex.folded.active_merchants() > 0;
        examples.push_back(std::move(ex));
    }
    if (examples.empty()) {
        throw EmptyDatasetError();
    }

    auto& params = model.params();
    AdamW<Real> opt(params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    nn::GradientBuffer<Real> grads(params);
    const std::size_t workers = cfg.workers;
    std::vector<nn::GradientBuffer<Real>> worker_grads;
    if (workers > 1) {
        worker_grads.assign(workers, nn::GradientBuffer<Real>(params));
    }

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(cfg.seed);

    TrainResult result;
    std::optional<double> best_auc;
    nn::ParameterStore<Real> best_params;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochStats stats;
        stats.epoch = epoch;
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> batch;
            for (std::size_t i = start; i < stop; ++i) {
                if (examples[order[i]].scorable) {
                    batch.push_back(i);
                } else {
                    ++stats.skipped;
                }
            }
            if (batch.empty()) {
                continue;
            }
            const Real seed = Real(1) / static_cast<Real>(batch.size());
            std::vector<double> losses(batch.size(), 0.0);

            auto run = [&](std::size_t lo, std::size_t hi, nn::GradientBuffer<Real>& buf) {
                for (std::size_t b = lo; b < hi; ++b) {
                    const std::size_t pos = batch[b];
                    const Example& ex = examples[order[pos]];
                    std::mt19937_64 drop_rng(mix(cfg.seed ^ mix(epoch * 0x100000001ULL + pos)));
                    nn::ForwardOptions opts{true, model.config().dropout, &drop_rng};
                    nn::Graph<Real> g(&params, &buf);
                    const auto out = model.forward(g, ex.folded, opts);
                    const Real w = ex.label != 0 ? static_cast<Real>(cfg.pos_weight) : Real(1);
                    const nn::Var loss =
                        nn::binary_cross_entropy(g, out.prob, {static_cast<Real>(ex.label)}, {w});
                    losses[b] = static_cast<double>(g.value(loss)[0]);
                    g.backward(loss, seed);
                }
            };

            grads.zero();
            if (workers == 1) {
                run(0, batch.size(), grads);
            } else {
                const std::size_t chunk = (batch.size() + workers - 1) / workers;
                std::vector<std::thread> threads;
                std::vector<std::exception_ptr> errors(workers);
                for (std::size_t w = 0; w < workers; ++w) {
                    worker_grads[w].zero();
                    const std::size_t lo = std::min(batch.size(), w * chunk);
                    const std::size_t hi = std::min(batch.size(), lo + chunk);
                    threads.emplace_back([&, w, lo, hi] {
                        try {
                            run(lo, hi, worker_grads[w]);
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                }
                for (auto& t : threads) {
                    t.join();
                }
                for (auto& e : errors) {
                    if (e) {
                        std::rethrow_exception(e);
                    }
                }
                for (auto& wg : worker_grads) {
                    grads.add(wg);
                }
            }

            if (cfg.grad_clip_norm) {
                const double norm = grads.global_norm();
                if (norm > *cfg.grad_clip_norm) {
                    grads.scale(static_cast<Real>(*cfg.grad_clip_norm / norm));
                }
            }
            opt.step(params, grads);
            for (double l : losses) {
                loss_sum += l;
            }
            stats.scored += batch.size();
        }

        stats.mean_loss = stats.scored > 0 ? loss_sum / static_cast<double>(stats.scored) : 0.0;
        stats.validation_auc = validation_auc(validation, model, workers);
        result.history.push_back(stats);
        result.best_epoch = epoch;
        if (on_epoch) {
            on_epoch(stats);
        }

        if (cfg.early_stopping && stats.validation_auc) {
            if (!best_auc || *stats.validation_auc > *best_auc) {
                best_auc = stats.validation_auc;
                best_params = params;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (cfg.early_stopping && best_auc) {
        for (std::size_t e = 0; e < result.history.size(); ++e) {
            if (result.history[e].validation_auc == best_auc) {
                result.best_epoch = e + 1;
                break;
            }
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i].value = best_params[i].value;
        }
    }
    return result;
}

template class AdamW<float>;
template class AdamW<double>;
template TrainResult train<float>(const Dataset&, const Dataset*, LbsfModel<float>&, const TrainConfig&,
                                  const EpochCallback&);
template TrainResult train<double>(const Dataset&, const Dataset*, LbsfModel<double>&, const TrainConfig&,
                                   const EpochCallback&);
template void fit_model_statistics<float>(LbsfModel<float>&, const Dataset&);
template void fit_model_statistics<double>(LbsfModel<double>&, const Dataset&);

nn::GradCheckResult gradient_check(const LbsfModel<double>& model, const Dataset& data, std::size_t max_users,
                                   std::size_t min_coordinates, std::uint64_t seed) {
    LbsfModel<double> dm = model;
    std::vector<FoldedUser> users;
    std::vector<double> labels;
    for (const auto& r : data.records) {
        if (users.size() == max_users) {
            break;
        }
        FoldedUser f = fold_sequence(r, dm.config().fold);
        if (r.label && f.active_merchants() > 0) {
            users.push_back(std::move(f));
            labels.push_back(*r.label);
        }
    }
    if (users.empty()) {
        throw EmptyDatasetError();
    }
    const auto loss = [&](nn::Graph<double>& g) {
        std::vector<nn::Var> probs;
        for (const auto& u : users) {
            probs.push_back(dm.forward(g, u).prob);
        }
        return nn::binary_cross_entropy(g, nn::concat_rows(g, probs), labels, std::vector<double>(labels.size(), 1.0));
    };
    return nn::finite_diff_check(dm.params(), loss, 1e-4, min_coordinates, seed);
}

} // namespace lbsf
