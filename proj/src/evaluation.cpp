#include "lbsf/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "lbsf/error.hpp"
#include "lbsf/folding.hpp"

namespace lbsf {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels, const char* what) {
    if (scores.size() != labels.size()) {
        throw ContractError(std::string(what) + ": scores and labels differ in length");
    }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads, contiguous chunks.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) {
                    fn(i);
                }
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
}

} // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores, labels, "auc");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int y : labels) {
        pos += y != 0 ? 1 : 0;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
        throw UndefinedMetricError("auc: both classes must be present");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the positive rank sum, with tied groups sharing their average rank.
    double twice_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            ++j;
        }
        const double twice_avg = static_cast<double>(i + 1 + j); // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] != 0) {
                twice_rank_sum += twice_avg;
            }
        }
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double u = (twice_rank_sum - p * (p + 1.0)) / 2.0;
    return u / (p * static_cast<double>(neg));
}

double recall_at_fraction(std::span<const double> scores, std::span<const int> labels, double frac) {
    check_lengths(scores, labels, "recall_at_fraction");
    if (!(frac > 0.0) || frac > 1.0) {
        throw ContractError("recall_at_fraction: fraction must lie in (0, 1]");
    }
    std::size_t pos = 0;
    for (int y : labels) {
        pos += y != 0 ? 1 : 0;
    }
    if (pos == 0) {
        throw UndefinedMetricError("recall_at_fraction: no positives");
    }
    const std::size_t n = scores.size();
    const auto k = std::min(n, static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hit = 0;
    for (std::size_t i = 0; i < k; ++i) {
        hit += labels[idx[i]] != 0 ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(pos);
}

template <class Real>
std::vector<ScoredUser> score_dataset(const Dataset& data, const LbsfModel<Real>& model, std::size_t workers) {
    std::vector<ScoredUser> out(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const auto& rec = data.records[i];
        const ForwardTrace t = model.predict(rec);
        out[i].user_id = rec.user_id;
        out[i].label = rec.label;
        if (t.scorable) {
            out[i].probability = t.probability;
        }
    });
    return out;
}

EvalReport make_report(std::vector<ScoredUser> users, double recall_fraction) {
    EvalReport r;
    r.recall_fraction = recall_fraction;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& u : users) {
        if (!u.probability) {
            ++r.n_unscorable;
            continue;
        }
        ++r.n_scored;
        if (u.label) {
            scores.push_back(*u.probability);
            labels.push_back(*u.label);
        }
    }
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives > 0 && positives < labels.size()) {
        r.auc = auc(scores, labels);
        r.recall_at_10pct = recall_at_fraction(scores, labels, recall_fraction);
    }
    r.users = std::move(users);
    return r;
}

template <class Real>
EvalReport evaluate(const Dataset& data, const LbsfModel<Real>& model, double recall_fraction, std::size_t workers) {
    if (data.empty()) {
        throw EmptyDatasetError();
    }
    return make_report(score_dataset(data, model, workers), recall_fraction);
}

nlohmann::json EvalReport::to_json(bool include_users) const {
    nlohmann::json j;
    j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
    j["recall_at_10pct"] = recall_at_10pct ? nlohmann::json(*recall_at_10pct) : nlohmann::json(nullptr);
    j["recall_fraction"] = recall_fraction;
    j["n_scored"] = n_scored;
    j["n_unscorable"] = n_unscorable;
    if (include_users) {
        auto arr = nlohmann::json::array();
        for (const auto& u : users) {
            nlohmann::json e;
            e["user_id"] = u.user_id;
            e["probability"] = u.probability ? nlohmann::json(*u.probability) : nlohmann::json(nullptr);
            if (u.label) {
                e["label"] = *u.label;
            }
            arr.push_back(std::move(e));
        }
        j["users"] = std::move(arr);
    }
    return j;
}

nlohmann::json AttributionRecord::to_json() const {
    nlohmann::json j;
    j["user_id"] = user_id;
    auto rank = nlohmann::json::array();
    for (const auto& [name, w] : ranking) {
        rank.push_back({{"merchant", name}, {"weight", w}});
    }
    j["ranking"] = std::move(rank);
    auto weeks = nlohmann::json::array();
    for (const auto& wc : weekly) {
        weeks.push_back({{"merchant", wc.merchant}, {"weekly_counts", wc.counts}});
    }
    j["weekly"] = std::move(weeks);
    return j;
}

template <class Real>
AttributionRecord explain_user(const UserRecord& record, const LbsfModel<Real>& model, std::size_t top_k) {
    AttributionRecord out;
    out.user_id = record.user_id;
    const FoldedUser folded = fold_sequence(record, model.config().fold);
    const ForwardTrace t = model.predict(folded);
    if (!t.scorable || t.flat) {
        return out;
    }
    const std::size_t heads = t.cls_attention.rows();
    std::vector<std::pair<std::size_t, double>> ranked; // (slot, weight)
    for (std::size_t slot : t.active_slots) {
        double w = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
            w += t.cls_attention(h, slot);
        }
        ranked.emplace_back(slot, w / static_cast<double>(heads));
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [slot, w] : ranked) {
        out.ranking.emplace_back(*folded.slots[slot].merchant, w);
    }

    const std::int64_t first = record.behaviors.front().timestamp;
    const std::int64_t last = record.behaviors.back().timestamp;
    constexpr std::int64_t week = 7 * 86400;
    const auto n_weeks = static_cast<std::size_t>((last - first) / week + 1);
    for (std::size_t r = 0; r < std::min(top_k, ranked.size()); ++r) {
        const auto& slot = folded.slots[ranked[r].first];
        WeeklyCounts wc;
        wc.merchant = *slot.merchant;
        wc.counts.assign(n_weeks, 0);
        for (const auto& b : slot.behaviors) {
            ++wc.counts[static_cast<std::size_t>((b.timestamp - first) / week)];
        }
        out.weekly.push_back(std::move(wc));
    }
    return out;
}

template <class Real>
std::vector<AttributionRecord> export_attributions(const Dataset& data, const LbsfModel<Real>& model,
                                                   std::size_t top_k, std::size_t workers) {
    std::vector<AttributionRecord> out(data.size());
    parallel_for(data.size(), workers,
                 [&](std::size_t i) { out[i] = explain_user(data.records[i], model, top_k); });
    return out;
}

namespace {

UserRecord bench_user(std::size_t T, std::size_t merchants) {
    UserRecord r;
    r.user_id = "bench";
    for (std::size_t i = 0; i < T; ++i) {
        PaymentBehavior b;
        b.merchant = "merchant " + std::to_string(i % merchants);
        b.description = "purchase " + std::to_string(i % 7);
        b.timestamp = 1700000000 + static_cast<std::int64_t>(i) * 3600;
        b.amount = 10.0 + static_cast<double>(i % 50);
        r.behaviors.push_back(std::move(b));
    }
    return r;
}

template <class Fn>
double median_ms(std::size_t trials, Fn fn) {
    std::vector<double> ms;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const std::size_t n = ms.size();
    return n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
}

} // namespace

std::vector<BenchRow> bench_fold_vs_flat(const std::vector<std::size_t>& t_values, std::size_t merchants,
                                         std::size_t trials, const BenchConfig& cfg) {
    if (merchants == 0 || trials == 0) {
        throw ConfigError("bench: merchants and trials must be positive");
    }
    std::vector<BenchRow> rows;
    for (std::size_t T : t_values) {
        if (T == 0) {
            throw ConfigError("bench: T must be positive");
        }
        ModelConfig mc;
        mc.fold.merchant_slots = merchants;
        mc.fold.max_per_merchant = (T + merchants - 1) / merchants;
        mc.d_model = cfg.d_model;
        mc.n_heads = cfg.n_heads;
        mc.ffn_hidden = cfg.ffn_hidden;
        const LbsfModel<float> folded_model(mc, cfg.seed);
        mc.ablation.use_merchant_folding = false;
        const LbsfModel<float> flat_model(mc, cfg.seed);

        const FoldedUser user = fold_sequence(bench_user(T, merchants), mc.fold);
        BenchRow row;
        row.T = T;
        row.folded_cells = folded_model.predict(user).counters.cells;
        row.flat_cells = flat_model.predict(user).counters.cells;
        row.folded_ms = median_ms(trials, [&] { (void)folded_model.predict(user); });
        row.flat_ms = median_ms(trials, [&] { (void)flat_model.predict(user); });
        rows.push_back(row);
    }
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "T,flat_cells,folded_cells,flat_ms,folded_ms\n";
    for (const auto& r : rows) {
        out << r.T << ',' << r.flat_cells << ',' << r.folded_cells << ',' << r.flat_ms << ',' << r.folded_ms << '\n';
    }
}

#define LBSF_INSTANTIATE_EVAL(R)                                                                                  \
    template std::vector<ScoredUser> score_dataset<R>(const Dataset&, const LbsfModel<R>&, std::size_t);          \
    template EvalReport evaluate<R>(const Dataset&, const LbsfModel<R>&, double, std::size_t);                    \
    template AttributionRecord explain_user<R>(const UserRecord&, const LbsfModel<R>&, std::size_t);              \
    template std::vector<AttributionRecord> export_attributions<R>(const Dataset&, const LbsfModel<R>&,           \
                                                                   std::size_t, std::size_t);

LBSF_INSTANTIATE_EVAL(float)
LBSF_INSTANTIATE_EVAL(double)

} // namespace lbsf
