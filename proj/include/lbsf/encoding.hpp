#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lbsf/behavior_data.hpp"
#include "lbsf/nn/graph.hpp"
#include "lbsf/nn/layers.hpp"

namespace lbsf {

struct TokenVocab {
    std::size_t hash_buckets = 8192;
    std::size_t token_dim = 64;

    void validate() const;
};

// 64-bit FNV-1a over the UTF-8 bytes.
std::uint64_t fnv1a64(std::string_view text);

// ASCII-lowercases, splits on whitespace and punctuation (ASCII plus common
// CJK/Latin-1 separators), and hashes each token modulo hash_buckets.
std::vector<std::uint32_t> tokenize_text(std::string_view text, const TokenVocab& vocab);

// Mean of the token rows of `table` ([hash_buckets, token_dim]); zeros for
// text without tokens. Returns [1, token_dim].
template <class Real>
nn::Tensor<Real> encode_text(std::string_view text, const TokenVocab& vocab, const nn::Tensor<Real>& table);

// (cos, sin) pairs for month-of-year (T=12), day-of-month (T=31),
// day-of-week (T=7, Sunday = 0), hour-of-day (T=24), in that order, UTC.
inline constexpr std::size_t kTimeFeatureCount = 8;
using TimeFeatures = std::array<double, kTimeFeatureCount>;
TimeFeatures time_embed(std::int64_t epoch_seconds);

// log1p(amount) standardized with statistics frozen from the training split.
struct AmountStats {
    double mean = 0.0;
    double stddev = 1.0;
};
// Throws ConfigError when the training amounts are degenerate (stddev 0).
AmountStats fit_amount_stats(const Dataset& train);
double amount_feature(double amount, const AmountStats& stats);

struct FieldFlags {
    bool description = true;
    bool timing = true;
    bool amount = true;

    bool any() const noexcept { return description || timing || amount; }
    // Width of the concatenated per-behavior input: [text | time | amount].
    std::size_t input_width(std::size_t token_dim) const noexcept {
        return (description ? token_dim : 0) + (timing ? kTimeFeatureCount : 0) + (amount ? 1 : 0);
    }
};

// Parameter layout of the multi-field encoder:
//   encode.token_table        [hash_buckets, token_dim]
//   encode.merchant_table     [hash_buckets, token_dim]  (merchant text, not shared)
//   encode.behavior_fc        [input_width, d_model] + bias
//   encode.merchant_fc        [token_dim, d_model] + bias  (merchant text only)
template <class Real>
class BehaviorEncoder {
public:
    BehaviorEncoder() = default;
    BehaviorEncoder(nn::ParameterStore<Real>& store, const TokenVocab& vocab, std::size_t d_model, FieldFlags fields,
                    bool shared_token_table, bool merchant_text, std::mt19937_64& rng);
    // Rebinds to an existing store that already holds the encoder parameters.
    static BehaviorEncoder bind(const nn::ParameterStore<Real>& store, const TokenVocab& vocab, std::size_t d_model,
                                FieldFlags fields, bool shared_token_table, bool merchant_text);

    // One row per entry; nullptr entries are padding and come out as zero rows.
    nn::Var encode(nn::Graph<Real>& g, const std::vector<const PaymentBehavior*>& rows, const AmountStats& stats) const;
    // Merchant-name text embeddings, [names, d_model]. ContractError when the
    // encoder was built without merchant text.
    nn::Var encode_merchants(nn::Graph<Real>& g, const std::vector<std::string>& names) const;

    // Single behavior, inference only. Returns [1, d_model].
    nn::Tensor<Real> encode_behavior(const nn::ParameterStore<Real>& store, const PaymentBehavior& b,
                                     const AmountStats& stats) const;

    const FieldFlags& fields() const noexcept { return m_fields; }
    std::size_t d_model() const noexcept { return m_d_model; }
    bool has_merchant_text() const noexcept { return m_merchant_text; }

private:
    TokenVocab m_vocab;
    std::size_t m_d_model = 0;
    FieldFlags m_fields;
    bool m_merchant_text = false;
    std::size_t m_token_table = 0;
    std::size_t m_merchant_table = 0;
    nn::LinearIds m_behavior_fc;
    nn::LinearIds m_merchant_fc;
};

} // namespace lbsf
