#include "lbsf/nn/layers.hpp"

#include <cmath>

#include "lbsf/error.hpp"

namespace lbsf::nn {

void TransformerLayerConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (n_layers == 0) {
        throw ConfigError("n_layers must be at least 1");
    }
    if (ffn_hidden == 0) {
        throw ConfigError("ffn_hidden must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ConfigError("dropout must lie in [0, 1)");
    }
}

template <class Real>
LinearIds add_linear(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
                     std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<Real> w = Tensor<Real>::matrix(in, out);
    for (auto& v : w.values()) {
        v = static_cast<Real>(dist(rng));
    }
    LinearIds ids;
    ids.weight = store.add(name + ".weight", std::move(w));
    ids.bias = store.add(name + ".bias", Tensor<Real>::matrix(1, out));
    return ids;
}

template <class Real>
EncoderLayerIds add_encoder_layer(ParameterStore<Real>& store, const std::string& prefix,
                                  const TransformerLayerConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    EncoderLayerIds ids;
    ids.ln1_gain = store.add(prefix + ".ln1.gain", Tensor<Real>::matrix(1, d, Real(1)));
    ids.ln1_bias = store.add(prefix + ".ln1.bias", Tensor<Real>::matrix(1, d));
    ids.attention.query = add_linear(store, prefix + ".attn.query", d, d, rng);
    ids.attention.key = add_linear(store, prefix + ".attn.key", d, d, rng);
    ids.attention.value = add_linear(store, prefix + ".attn.value", d, d, rng);
    ids.attention.output = add_linear(store, prefix + ".attn.output", d, d, rng);
    ids.ln2_gain = store.add(prefix + ".ln2.gain", Tensor<Real>::matrix(1, d, Real(1)));
    ids.ln2_bias = store.add(prefix + ".ln2.bias", Tensor<Real>::matrix(1, d));
    ids.ffn_in = add_linear(store, prefix + ".ffn.in", d, cfg.ffn_hidden, rng);
    ids.ffn_out = add_linear(store, prefix + ".ffn.out", cfg.ffn_hidden, d, rng);
    return ids;
}

template <class Real>
Var apply_linear(Graph<Real>& g, Var x, const LinearIds& ids) {
    return linear(g, x, g.param(ids.weight), g.param(ids.bias));
}

template <class Real>
MhaOutput<Real> multi_head_attention(Graph<Real>& g, Var x, const std::vector<Segment>& segments,
                                     const std::vector<bool>& mask, const AttentionIds& ids, std::size_t heads) {
    const Var q = apply_linear(g, x, ids.query);
    const Var k = apply_linear(g, x, ids.key);
    const Var v = apply_linear(g, x, ids.value);
    auto att = attention(g, q, k, v, heads, segments, mask);
    return {apply_linear(g, att.out, ids.output), att.weights};
}

template <class Real>
MhaOutput<Real> transformer_encoder_layer(Graph<Real>& g, Var x, const std::vector<Segment>& segments,
                                          const std::vector<bool>& mask, const EncoderLayerIds& ids,
                                          const TransformerLayerConfig& cfg, const ForwardOptions& opts) {
    if (g.value(x).rank() != 2 || g.value(x).cols() != cfg.d_model) {
        throw ContractError("transformer_encoder_layer: input " + shape_string(g.value(x).shape()) +
                            " does not have width " + std::to_string(cfg.d_model));
    }
    const bool drop = opts.training && opts.dropout > 0.0 && opts.rng != nullptr;

    Var normed = layer_norm(g, x, g.param(ids.ln1_gain), g.param(ids.ln1_bias));
    auto mha = multi_head_attention(g, normed, segments, mask, ids.attention, cfg.n_heads);
    Var attn_out = drop ? dropout(g, mha.out, opts.dropout, *opts.rng) : mha.out;
    Var h = add(g, x, attn_out);

    Var normed2 = layer_norm(g, h, g.param(ids.ln2_gain), g.param(ids.ln2_bias));
    Var ffn = apply_linear(g, gelu(g, apply_linear(g, normed2, ids.ffn_in)), ids.ffn_out);
    if (drop) {
        ffn = dropout(g, ffn, opts.dropout, *opts.rng);
    }
    Var y = mask_rows(g, add(g, h, ffn), mask);
    return {y, mha.weights};
}

template <class Real>
Var average_pool_masked(Graph<Real>& g, Var x, const std::vector<bool>& mask) {
    return segment_mean(g, x, {Segment{0, g.value(x).rows()}}, mask);
}

template <class Real>
Tensor<Real> sinusoidal_positions(std::size_t length, std::size_t d) {
    Tensor<Real> pe = Tensor<Real>::matrix(length, d);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe(pos, i) = static_cast<Real>(std::sin(static_cast<double>(pos) * freq));
            if (i + 1 < d) {
                pe(pos, i + 1) = static_cast<Real>(std::cos(static_cast<double>(pos) * freq));
            }
        }
    }
    return pe;
}

#define LBSF_INSTANTIATE_LAYERS(R)                                                                               \
    template LinearIds add_linear<R>(ParameterStore<R>&, const std::string&, std::size_t, std::size_t,           \
                                     std::mt19937_64&);                                                          \
    template EncoderLayerIds add_encoder_layer<R>(ParameterStore<R>&, const std::string&,                        \
                                                  const TransformerLayerConfig&, std::mt19937_64&);              \
    template Var apply_linear<R>(Graph<R>&, Var, const LinearIds&);                                              \
    template MhaOutput<R> multi_head_attention<R>(Graph<R>&, Var, const std::vector<Segment>&,                   \
                                                  const std::vector<bool>&, const AttentionIds&, std::size_t);   \
    template MhaOutput<R> transformer_encoder_layer<R>(Graph<R>&, Var, const std::vector<Segment>&,              \
                                                       const std::vector<bool>&, const EncoderLayerIds&,         \
                                                       const TransformerLayerConfig&, const ForwardOptions&);    \
    template Var average_pool_masked<R>(Graph<R>&, Var, const std::vector<bool>&);                               \
    template Tensor<R> sinusoidal_positions<R>(std::size_t, std::size_t);

LBSF_INSTANTIATE_LAYERS(float)
LBSF_INSTANTIATE_LAYERS(double)

} // namespace lbsf::nn
