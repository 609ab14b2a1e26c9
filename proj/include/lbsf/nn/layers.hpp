#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lbsf/nn/graph.hpp"

namespace lbsf::nn {

struct TransformerLayerConfig {
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_layers = 1;
    std::size_t ffn_hidden = 512;
    double dropout = 0.0;

    void validate() const;
};

struct LinearIds {
    std::size_t weight = 0;
    std::size_t bias = 0;
};

struct AttentionIds {
    LinearIds query, key, value, output;
};

struct EncoderLayerIds {
    std::size_t ln1_gain = 0, ln1_bias = 0;
    AttentionIds attention;
    std::size_t ln2_gain = 0, ln2_bias = 0;
    LinearIds ffn_in, ffn_out;
};

// Weight [in, out] uniform in +-sqrt(6 / (in + out)), bias zero.
template <class Real>
LinearIds add_linear(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
                     std::mt19937_64& rng);

template <class Real>
EncoderLayerIds add_encoder_layer(ParameterStore<Real>& store, const std::string& prefix,
                                  const TransformerLayerConfig& cfg, std::mt19937_64& rng);

template <class Real>
Var apply_linear(Graph<Real>& g, Var x, const LinearIds& ids);

struct ForwardOptions {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;
};

template <class Real>
struct MhaOutput {
    Var out;
    std::shared_ptr<const AttentionWeights<Real>> weights;
};

// Projections, per-segment scaled dot-product attention, output projection.
template <class Real>
MhaOutput<Real> multi_head_attention(Graph<Real>& g, Var x, const std::vector<Segment>& segments,
                                     const std::vector<bool>& mask, const AttentionIds& ids, std::size_t heads);

// Pre-norm block: h = x + MHA(LN(x)); y = h + FFN(LN(h)), GELU inside the
// FFN. Masked rows are zero on output.
template <class Real>
MhaOutput<Real> transformer_encoder_layer(Graph<Real>& g, Var x, const std::vector<Segment>& segments,
                                          const std::vector<bool>& mask, const EncoderLayerIds& ids,
                                          const TransformerLayerConfig& cfg, const ForwardOptions& opts = {});

// Mean over unmasked rows of a single sequence -> [1, d].
template <class Real>
Var average_pool_masked(Graph<Real>& g, Var x, const std::vector<bool>& mask);

// Standard sinusoidal table [length, d]: sin on even columns, cos on odd.
template <class Real>
Tensor<Real> sinusoidal_positions(std::size_t length, std::size_t d);

} // namespace lbsf::nn
