#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbsf/behavior_data.hpp"
#include "lbsf/encoding.hpp"
#include "lbsf/folding.hpp"
#include "lbsf/nn/graph.hpp"
#include "lbsf/nn/layers.hpp"

namespace lbsf {

struct AblationFlags {
    bool use_merchant_folding = true;
    bool use_amount = true;
    bool use_timing = true;
    bool use_description = true;

    // Throws ConfigError when every behavior field is disabled.
    void validate() const;
    FieldFlags fields() const noexcept { return {use_description, use_timing, use_amount}; }
};

struct ModelConfig {
    FoldConfig fold;
    TokenVocab vocab;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_layers = 1;
    std::size_t ffn_hidden = 512;
    double dropout = 0.0;
    bool shared_token_table = true;
    bool merchant_pos_enc = false;
    AblationFlags ablation;

    void validate() const;
    nn::TransformerLayerConfig layer() const;
};

enum class FusionActivation { gelu, identity };

// Everything predict exposes about one user. Tensors are copied out as
// double regardless of the model's precision.
struct ForwardTrace {
    std::string user_id;
    bool scorable = false;
    bool flat = false;
    std::vector<std::size_t> active_slots;   // slot index per active merchant, ascending
    std::vector<std::string> merchants;      // merchant name per active slot
    nn::Tensor<double> melded;               // [A, d] pooled within-merchant embeddings
    nn::Tensor<double> merchant_embeddings;  // [A, d] after text fusion
    nn::Tensor<double> enhanced;             // [A, d] after across-merchant melding
    nn::Tensor<double> user_embedding;       // [1, d] CLS output (or flat pool)
    nn::Tensor<double> cls_attention;        // [heads, M]; zero on inactive slots; empty when flat
    double logit = 0.0;
    double probability = 0.0;
    nn::AttentionCounters counters;
};

// Parameter names:
//   encode.*                      behavior / merchant text encoder
//   within.layer<i>.*             within-merchant transformer (shared over slots)
//   fusion.weight/.bias           [2d, d] merchant text fusion
//   across.layer<i>.*             across-merchant transformer
//   cls.token                     [1, d]
//   relational.layer0.*           CLS-stage transformer
//   classifier.hidden / .out      d -> d/2 -> 1
//   flat.layer<i>.*               flat-sequence transformer (folding disabled)
template <class Real>
class LbsfModel {
public:
    struct Output {
        nn::Var logit;  // [1, 1]; invalid when the user is unscorable
        nn::Var prob;
    };

    LbsfModel() = default;
    LbsfModel(const ModelConfig& cfg, std::uint64_t seed);
    // Binds to loaded parameters; throws ContractError when a parameter is
    // missing or shaped inconsistently with the config.
    static LbsfModel from_parameters(const ModelConfig& cfg, nn::ParameterStore<Real> params, AmountStats stats);

    template <class Other>
    LbsfModel<Other> cast() const {
        return LbsfModel<Other>::from_parameters(m_cfg, m_params.template cast<Other>(), m_stats);
    }

    const ModelConfig& config() const noexcept { return m_cfg; }
    nn::ParameterStore<Real>& params() noexcept { return m_params; }
    const nn::ParameterStore<Real>& params() const noexcept { return m_params; }
    const AmountStats& amount_stats() const noexcept { return m_stats; }
    void set_amount_stats(const AmountStats& s) noexcept { m_stats = s; }
    const BehaviorEncoder<Real>& encoder() const noexcept { return m_encoder; }

    // Full forward on graph `g` (whose parameter store must be this model's).
    // `pad_to` widens the per-slot padding beyond the longest active slot.
    Output forward(nn::Graph<Real>& g, const FoldedUser& f, const nn::ForwardOptions& opts = {},
                   ForwardTrace* trace = nullptr, std::size_t pad_to = 0) const;

    // Inference. Routes to the flat path when folding is disabled.
    ForwardTrace predict(const FoldedUser& f, std::size_t pad_to = 0) const;
    // Folds with the model's FoldConfig first.
    ForwardTrace predict(const UserRecord& r) const;

    // Stages, exposed for inspection and tests.
    // x: [S*L, d] encoded rows, one segment per slot -> [S, d] pooled.
    nn::Var meld_within_merchant(nn::Graph<Real>& g, nn::Var x, const std::vector<nn::Segment>& segments,
                                 const std::vector<bool>& mask, const nn::ForwardOptions& opts = {}) const;
    nn::Var fuse_merchant_text(nn::Graph<Real>& g, nn::Var h, nn::Var m_text,
                               FusionActivation act = FusionActivation::gelu) const;
    // h: [M, d] slot-indexed; masked slots are excluded and zeroed.
    nn::Var meld_across_merchants(nn::Graph<Real>& g, nn::Var h, const std::vector<bool>& merchant_mask,
                                  const nn::ForwardOptions& opts = {}) const;
    struct ClsOutput {
        nn::Var user;                    // [1, d]
        nn::Tensor<double> attention;    // [heads, M], renormalized over merchants
    };
    ClsOutput relational_learning_cls(nn::Graph<Real>& g, nn::Var h, const std::vector<bool>& merchant_mask,
                                      const nn::ForwardOptions& opts = {}) const;
    nn::Var classify(nn::Graph<Real>& g, nn::Var user) const;

private:
    Output forward_folded(nn::Graph<Real>& g, const FoldedUser& f, const nn::ForwardOptions& opts,
                          ForwardTrace* trace, std::size_t pad_to) const;
    Output forward_flat(nn::Graph<Real>& g, const FoldedUser& f, const nn::ForwardOptions& opts,
                        ForwardTrace* trace) const;

    ModelConfig m_cfg;
    nn::ParameterStore<Real> m_params;
    AmountStats m_stats;
    BehaviorEncoder<Real> m_encoder;
    std::vector<nn::EncoderLayerIds> m_within, m_across, m_flat;
    nn::EncoderLayerIds m_relational;
    nn::LinearIds m_fusion, m_hidden, m_out;
    std::size_t m_cls = 0;
};

// Flat baseline on a raw record: behaviors grouped by selected merchant,
// groups concatenated in slot order, one transformer, masked mean pool,
// classifier. The model must have been built with folding disabled.
template <class Real>
ForwardTrace predict_flat_baseline(const UserRecord& r, const LbsfModel<Real>& model);

// Analytic query-key cell counts for one user with active sub-sequence
// lengths `lengths`: folded = sum L_j^2 + A^2 + (A+1)^2; flat = (sum L_j)^2.
struct AttentionCost {
    std::uint64_t folded = 0;
    std::uint64_t flat = 0;
};
AttentionCost attention_cost(const std::vector<std::size_t>& lengths);

} // namespace lbsf
