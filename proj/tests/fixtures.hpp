#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "lbsf/encoding.hpp"
#include "lbsf/folding.hpp"
#include "lbsf/model.hpp"
#include "lbsf/synthetic.hpp"

namespace fixtures {

inline lbsf::ModelConfig tiny_config(std::size_t slots = 4, std::size_t max_len = 6, std::size_t d = 16,
                                     std::size_t heads = 2) {
    lbsf::ModelConfig c;
    c.fold.merchant_slots = slots;
    c.fold.max_per_merchant = max_len;
    c.vocab.hash_buckets = 256;
    c.vocab.token_dim = 8;
    c.d_model = d;
    c.n_heads = heads;
    c.ffn_hidden = 4 * d;
    return c;
}

inline lbsf::Dataset small_synthetic(std::size_t n, std::uint64_t seed, int days = 45) {
    lbsf::SynthesisConfig s;
    s.n_users = n;
    s.seed = seed;
    s.t_span_days = days;
    return lbsf::generate_synthetic(s);
}

// Random user with `merchants` distinct merchants and 1..max_per behaviors each.
inline lbsf::UserRecord random_user(std::mt19937_64& rng, std::size_t merchants, std::size_t max_per,
                                    const std::string& id = "r") {
    static const std::vector<std::string> words{"coffee", "tip", "rent", "noodles", "game", "taxi", "gift", "loan"};
    lbsf::UserRecord r;
    r.user_id = id;
    std::uniform_int_distribution<std::size_t> count(1, max_per);
    std::uniform_int_distribution<std::int64_t> ts(1'700'000'000, 1'707'000'000);
    std::uniform_int_distribution<int> cents(0, 50000);
    std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
    for (std::size_t m = 0; m < merchants; ++m) {
        const std::size_t n = count(rng);
        for (std::size_t k = 0; k < n; ++k) {
            r.behaviors.push_back({"merchant " + std::to_string(m), words[word(rng)] + " " + words[word(rng)], ts(rng),
                                   cents(rng) / 100.0});
        }
    }
    lbsf::sort_chronologically(r.behaviors);
    return r;
}

// Zeroes every parameter whose name starts with one of `prefixes`.
template <class Real>
void zero_params(lbsf::nn::ParameterStore<Real>& store, const std::vector<std::string>& prefixes) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        for (const auto& p : prefixes) {
            if (store[i].name.rfind(p, 0) == 0) {
                store[i].value.fill(Real(0));
            }
        }
    }
}

// Same user laid out over `total` slots, the original slots placed at
// `positions` (ascending or not) and NULL slots everywhere else.
inline lbsf::FoldedUser relayout(const lbsf::FoldedUser& f, const std::vector<std::size_t>& positions,
                                 std::size_t total) {
    lbsf::FoldedUser out;
    out.user_id = f.user_id;
    const std::size_t lmax = f.behavior_masks.empty() ? 0 : f.behavior_masks[0].size();
    out.slots.assign(total, {});
    out.merchant_mask.assign(total, false);
    out.behavior_masks.assign(total, std::vector<bool>(lmax, false));
    for (std::size_t j = 0; j < positions.size(); ++j) {
        out.slots[positions[j]] = f.slots[j];
        out.merchant_mask[positions[j]] = f.merchant_mask[j];
        out.behavior_masks[positions[j]] = f.behavior_masks[j];
    }
    return out;
}

} // namespace fixtures
