// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "fixtures.hpp"
#include "lbsf/checkpoint.hpp"
#include "lbsf/evaluation.hpp"
#include "lbsf/nn/graph.hpp"
#include "lbsf/nn/layers.hpp"
#include "lbsf/training.hpp"
#include "oracles.hpp"

using namespace lbsf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Verdict {
    bool pass;
    std::string detail;
};

// ---- shared training runs ----------------------------------------------------------------

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

ModelConfig acceptance_model(bool folding) {
    ModelConfig c;
    c.fold.merchant_slots = 16;
    c.fold.max_per_merchant = 128;
    c.d_model = 64;
    c.n_heads = 4;
    c.ffn_hidden = 256;
    c.ablation.use_merchant_folding = folding;
    return c;
}

TrainConfig acceptance_training(std::uint64_t seed) {
    TrainConfig t;
    t.learning_rate = 2e-4;
    t.batch_size = 64;
    t.epochs = 10;
    t.seed = seed;
    t.workers = 1;
    return t;
}

SynthesisConfig synth(int days, std::uint64_t seed) {
    SynthesisConfig s;
    s.n_users = 2000;
    s.positive_rate = 0.10;
    s.t_span_days = days;
    s.seed = seed;
    return s;
}

struct Run {
    double auc = 0.0;
    double seconds = 0.0;
    std::shared_ptr<LbsfModel<float>> model;
    std::shared_ptr<SyntheticData> test;
};

// Trains on a 2,000-user draw and scores an independent 2,000-user draw from
// the same generator.
Run train_and_score(int days, std::uint64_t seed, bool folding) {
    static std::map<std::tuple<int, std::uint64_t, bool>, Run> cache;
    const auto key = std::make_tuple(days, seed, folding);
    if (const auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    const auto start = Clock::now();
    const Dataset train_set = generate_synthetic(synth(days, seed));
    auto test = std::make_shared<SyntheticData>(generate_synthetic_with_truth(synth(days, 1000 + seed)));
    test->dataset.split = Split::test;
    auto model = std::make_shared<LbsfModel<float>>(acceptance_model(folding), seed);
    fit_model_statistics(*model, train_set);
    train(train_set, nullptr, *model, acceptance_training(seed));
    Run r;
    r.auc = evaluate(test->dataset, *model).auc.value_or(std::nan(""));
    r.seconds = seconds_since(start);
    r.model = model;
    r.test = test;
    std::cerr << fmt("  [run] days=%d seed=%llu %s auc=%.4f (%.0fs)\n", days, static_cast<unsigned long long>(seed),
                     folding ? "lbsf" : "flat", r.auc, r.seconds);
    cache[key] = r;
    return r;
}

// ---- criteria ----------------------------------------------------------------

Verdict gradient_fidelity() {
    const auto data = fixtures::small_synthetic(12, 21);
    LbsfModel<double> m(fixtures::tiny_config(4, 4, 16, 1), 21);
    fit_model_statistics(m, data);
    const auto start = Clock::now();
    const auto r = gradient_check(m, data, 3, 400, 1);
    const double secs = seconds_since(start);
    return {r.max_relative_error < 1e-4 && secs < 60.0,
            fmt("max relative error %.3g over %zu coordinates (worst %s), %.2fs", r.max_relative_error,
                r.coordinates_checked, r.worst_parameter.c_str(), secs)};
}

template <class Real>
double attention_abs_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t heads = std::size_t{1} << (rng() % 3);
    const std::size_t d = heads * (1 + rng() % (16 / heads));
    const std::size_t L = 1 + rng() % 8;
    nn::ParameterStore<Real> store;
    nn::TransformerLayerConfig cfg;
    cfg.d_model = d;
    cfg.n_heads = heads;
    cfg.ffn_hidden = 4;
    const auto ids = nn::add_encoder_layer(store, "layer", cfg, rng);
    oracle::randomize(store, rng, 0.4);
    const auto x = oracle::random_matrix<Real>(L, d, rng);
    const auto mask = oracle::random_mask(L, rng);

    nn::Graph<Real> g(&store);
    const auto mha = nn::multi_head_attention(g, g.constant(x), {{0, L}}, mask, ids.attention, heads);
    const auto ref = oracle::multi_head(oracle::to_mat(x), mask, store, ids.attention, heads);
    double worst = 0;
    for (std::size_t i = 0; i < L; ++i) {
        if (!mask[i]) {
            continue;
        }
        for (std::size_t j = 0; j < d; ++j) {
            worst = std::max(worst, std::abs(static_cast<double>(g.value(mha.out)(i, j)) - ref.out[i][j]));
        }
        const auto& A = (*mha.weights)[0];
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t k = 0; k < L; ++k) {
                worst = std::max(worst, std::abs(static_cast<double>(A[(h * L + i) * L + k]) - ref.weights[h][i][k]));
            }
        }
    }
    return worst;
}

Verdict oracle_equivalence() {
    double worst64 = 0, worst32 = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        worst64 = std::max(worst64, attention_abs_error<double>(s));
        worst32 = std::max(worst32, attention_abs_error<float>(s));
    }
    return {worst64 <= 1e-6,
            fmt("50 instances, max abs error %.3g in 64-bit check mode (float32 build: %.3g)", worst64, worst32)};
}

Verdict metric_oracles() {
    std::mt19937_64 rng(3);
    std::size_t auc_bad = 0, recall_bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 500)(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        std::uniform_int_distribution<int> coarse(0, 15);
        std::uniform_real_distribution<double> fine(0, 1);
        std::bernoulli_distribution pos(0.25), tie(0.3);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = tie(rng) ? coarse(rng) / 15.0 : fine(rng);
            y[i] = pos(rng);
        }
        y[0] = 1;
        y[n - 1] = 0;

        double wins = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1;
                    wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
                }
            }
        }
        auc_bad += auc(s, y) != wins / pairs;

        const std::size_t k = (n + 9) / 10; // exact ceiling of n / 10
        double hits = 0, positives = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t ahead = 0;
            for (std::size_t j = 0; j < n; ++j) {
                ahead += s[j] > s[i] || (s[j] == s[i] && j < i);
            }
            positives += y[i];
            hits += y[i] == 1 && ahead < k;
        }
        recall_bad += recall_at_fraction(s, y) != hits / positives;
    }
    return {auc_bad == 0 && recall_bad == 0,
            fmt("100 tied score sets: %zu auc and %zu recall mismatches against direct counting", auc_bad, recall_bad)};
}

Verdict structural_invariants() {
    constexpr int kCases = 200;
    std::mt19937_64 rng(4);
    std::map<std::string, std::size_t> failures;

    auto layer = [](std::size_t d, std::size_t heads, std::uint64_t seed, nn::ParameterStore<float>& store,
                    nn::TransformerLayerConfig& cfg) {
        cfg.d_model = d;
        cfg.n_heads = heads;
        cfg.ffn_hidden = 2 * d;
        std::mt19937_64 r(seed);
        const auto ids = nn::add_encoder_layer(store, "layer", cfg, r);
        oracle::randomize(store, r, 0.4);
        return ids;
    };

    for (int c = 0; c < kCases; ++c) {
        // softmax rows sum to one
        const auto x = oracle::random_matrix<float>(1 + rng() % 6, 1 + rng() % 9, rng, 20.0);
        const auto y = nn::softmax(x, 1);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double s = 0;
            for (float v : y.row(i)) {
                s += v;
            }
            failures["softmax row sums"] += std::abs(s - 1.0) > 1e-6;
        }
    }

    for (int c = 0; c < kCases; ++c) {
        // masked keys receive zero weight
        const std::size_t L = 2 + rng() % 10;
        nn::ParameterStore<float> store;
        nn::TransformerLayerConfig cfg;
        const auto ids = layer(8, 2, static_cast<std::uint64_t>(c), store, cfg);
        const auto mask = oracle::random_mask(L, rng, 0.5);
        nn::Graph<float> g(&store);
        const auto mha = nn::multi_head_attention(g, g.constant(oracle::random_matrix<float>(L, 8, rng)), {{0, L}},
                                                  mask, ids.attention, 2);
        const auto& A = (*mha.weights)[0];
        bool ok = true;
        for (std::size_t h = 0; h < 2; ++h) {
            for (std::size_t i = 0; i < L; ++i) {
                for (std::size_t j = 0; j < L; ++j) {
                    ok = ok && (mask[j] || A[(h * L + i) * L + j] == 0.0f);
                }
            }
        }
        failures["masked-key zero attention"] += !ok;
    }

    for (int c = 0; c < kCases; ++c) {
        // zero weights leave the residual stream untouched
        const std::size_t L = 1 + rng() % 10;
        nn::ParameterStore<float> store;
        nn::TransformerLayerConfig cfg;
        const auto ids = layer(8, 2, static_cast<std::uint64_t>(c), store, cfg);
        fixtures::zero_params(store, {""});
        const auto x = oracle::random_matrix<float>(L, 8, rng, 3.0);
        const auto mask = oracle::random_mask(L, rng);
        nn::Graph<float> g(&store);
        const auto out = g.value(nn::transformer_encoder_layer(g, g.constant(x), {{0, L}}, mask, ids, cfg).out);
        bool ok = true;
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                ok = ok && out(i, j) == (mask[i] ? x(i, j) : 0.0f);
            }
        }
        failures["residual identity at zero weights"] += !ok;
    }

    const auto cfg = fixtures::tiny_config(6, 6, 16, 2);
    LbsfModel<float> model(cfg, 5);
    std::mt19937_64 prng(6);
    oracle::randomize(model.params(), prng, 0.5);
    model.set_amount_stats({3.0, 1.5});

    for (int c = 0; c < kCases; ++c) {
        // padding: wider per-slot padding and interleaved NULL slots change nothing
        const auto r = fixtures::random_user(rng, 1 + rng() % 6, 8);
        const auto f = fold_sequence(r, cfg.fold);
        const auto base = model.predict(f);
        bool ok = model.predict(f, max_active_len(f) + 1 + rng() % 9).probability == base.probability;
        const std::size_t extra = 1 + rng() % 5;
        auto wider = cfg;
        wider.fold.merchant_slots += extra;
        const auto big = LbsfModel<float>::from_parameters(wider, model.params(), model.amount_stats());
        std::vector<std::size_t> slots(wider.fold.merchant_slots);
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), rng);
        slots.resize(cfg.fold.merchant_slots);
        std::sort(slots.begin(), slots.end());
        ok = ok && big.predict(fixtures::relayout(f, slots, wider.fold.merchant_slots)).probability == base.probability;
        failures["padding invariance"] += !ok;
    }

    double worst_perm = 0;
    for (int c = 0; c < kCases; ++c) {
        // permuting merchant slots
        const auto r = fixtures::random_user(rng, 1 + rng() % 6, 7);
        const auto f = fold_sequence(r, cfg.fold);
        std::vector<std::size_t> perm(cfg.fold.merchant_slots);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const double d = std::abs(model.predict(f).probability -
                                  model.predict(fixtures::relayout(f, perm, perm.size())).probability);
        worst_perm = std::max(worst_perm, d);
        failures["slot permutation"] += d > 1e-5;
    }

    std::size_t total = 0;
    std::string detail;
    for (const auto& [name, n] : failures) {
        total += n;
        detail += fmt("%s %zu/%d failed; ", name.c_str(), n, kCases);
    }
    detail += fmt("worst permutation delta %.3g", worst_perm);
    return {total == 0, detail};
}

Verdict learnability() {
    const Run r = train_and_score(90, kSeeds[0], true);
    return {r.auc >= 0.90 && r.seconds < 600.0,
            fmt("held-out AUC %.4f after 10 epochs on 2,000 users (90 days), %.0fs", r.auc, r.seconds)};
}

Verdict ablation_direction() {
    double lbsf = 0, flat = 0;
    std::string per_seed;
    for (std::uint64_t s : kSeeds) {
        const double a = train_and_score(90, s, true).auc;
        const double b = train_and_score(90, s, false).auc;
        lbsf += a / 3;
        flat += b / 3;
        per_seed += fmt(" %.3f/%.3f", a, b);
    }
    return {lbsf - flat >= 0.03,
            fmt("mean AUC LBSF %.4f vs flat %.4f, difference %.4f (per seed LBSF/flat:%s)", lbsf, flat, lbsf - flat,
                per_seed.c_str())};
}

Verdict length_trend() {
    std::vector<double> means;
    std::string detail = "mean AUC by span:";
    for (int days : {45, 90, 180}) {
        double m = 0;
        for (std::uint64_t s : kSeeds) {
            m += train_and_score(days, s, true).auc / 3;
        }
        means.push_back(m);
        detail += fmt(" %dd %.4f", days, m);
    }
    return {means[0] <= means[1] && means[1] <= means[2], detail};
}

Verdict complexity() {
    BenchConfig bc;
    bc.d_model = 64;
    bc.n_heads = 4;
    bc.ffn_hidden = 256;
    const auto rows = bench_fold_vs_flat({1024, 2048}, 64, 5, bc);
    bool ok = true;
    std::string detail;
    for (const auto& r : rows) {
        const double ratio = static_cast<double>(r.folded_cells) / static_cast<double>(r.flat_cells);
        if (r.T == 1024) {
            ok = ok && ratio <= 0.025;
        }
        ok = ok && r.folded_ms < r.flat_ms;
        detail += fmt("T=%zu cells %llu/%llu (%.2f%%) median ms %.1f vs %.1f; ", r.T,
                      static_cast<unsigned long long>(r.folded_cells), static_cast<unsigned long long>(r.flat_cells),
                      100 * ratio, r.folded_ms, r.flat_ms);
    }
    return {ok, detail};
}

Verdict persistence() {
    const auto data = fixtures::small_synthetic(200, 9);
    auto train_once = [&] {
        LbsfModel<float> m(fixtures::tiny_config(8, 16, 32, 4), 9);
        fit_model_statistics(m, data);
        auto cfg = acceptance_training(9);
        cfg.epochs = 2;
        cfg.batch_size = 16;
        train(data, nullptr, m, cfg);
        std::ostringstream out;
        write_checkpoint(out, m, {});
        return std::make_pair(m, out.str());
    };
    const auto [model, bytes] = train_once();
    const auto again = train_once().second;

    std::istringstream in(bytes);
    const auto loaded = read_checkpoint(in);
    std::mt19937_64 rng(10);
    std::size_t mismatched = 0;
    for (int u = 0; u < 100; ++u) {
        const auto r = fixtures::random_user(rng, 1 + rng() % 12, 20, "u" + std::to_string(u));
        const auto a = model.predict(r), b = loaded.model.predict(r);
        mismatched += a.logit != b.logit || a.probability != b.probability || a.cls_attention != b.cls_attention;
    }
    return {mismatched == 0 && bytes == again,
            fmt("%zu/100 predictions differ after reload; retrain checkpoints %s (%zu bytes)", mismatched,
                bytes == again ? "byte-identical" : "differ", bytes.size())};
}

Verdict explainability() {
    const Run r = train_and_score(90, kSeeds[0], true);
    std::size_t users = 0, hits = 0;
    for (std::size_t i = 0; i < r.test->dataset.records.size(); ++i) {
        const auto& rec = r.test->dataset.records[i];
        const auto& truth = r.test->truth[i];
        if (rec.label != 1 || truth.pattern != PlantedPattern::impulsive_surge) {
            continue;
        }
        ++users;
        const auto ex = explain_user(rec, *r.model, 3);
        const std::size_t top = std::min<std::size_t>(3, ex.ranking.size());
        hits += std::any_of(ex.ranking.begin(), ex.ranking.begin() + static_cast<std::ptrdiff_t>(top),
                            [&](const auto& p) { return p.first == truth.surge_merchant; });
    }
    const double rate = users == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(users);
    return {users >= 100 && rate >= 0.70,
            fmt("surge merchant in CLS top-3 for %zu/%zu held-out surge defaulters (%.1f%%)", hits, users, 100 * rate)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient fidelity", gradient_fidelity},
        {"oracle equivalence", oracle_equivalence},
        {"metric oracles", metric_oracles},
        {"structural invariants", structural_invariants},
        {"synthetic learnability", learnability},
        {"ablation direction", ablation_direction},
        {"sequence-length trend", length_trend},
        {"complexity", complexity},
        {"persistence", persistence},
        {"explainability", explainability},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::stoul(argv[i]));
    }

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.contains(i + 1)) {
            continue;
        }
        Verdict v{false, ""};
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failures += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << v.detail << std::endl;
    }
    return failures;
}
