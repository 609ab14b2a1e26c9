#include "lbsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lbsf/error.hpp"

namespace lbsf {

void AblationFlags::validate() const {
    if (!use_amount && !use_timing && !use_description) {
        throw ConfigError("model ablation: at least one of amount, timing, description must be enabled");
    }
}

nn::TransformerLayerConfig ModelConfig::layer() const {
    nn::TransformerLayerConfig c;
    c.d_model = d_model;
    c.n_heads = n_heads;
    c.n_layers = n_layers;
    c.ffn_hidden = ffn_hidden;
    c.dropout = dropout;
    return c;
}

void ModelConfig::validate() const {
    fold.validate();
    vocab.validate();
    ablation.validate();
    layer().validate();
    if (d_model < 2) {
        throw ConfigError("model.d_model must be at least 2");
    }
}

namespace {

template <class Real>
std::vector<nn::EncoderLayerIds> add_stack(nn::ParameterStore<Real>& store, const std::string& prefix,
                                           std::size_t layers, const nn::TransformerLayerConfig& cfg,
                                           std::mt19937_64& rng) {
    std::vector<nn::EncoderLayerIds> out;
    for (std::size_t i = 0; i < layers; ++i) {
        out.push_back(nn::add_encoder_layer(store, prefix + ".layer" + std::to_string(i), cfg, rng));
    }
    return out;
}

// Sigmoid of the logit in double, kept strictly inside (0, 1) so saturated
// single-precision logits still report a valid probability.
double reported_probability(double logit) {
    const double p = 1.0 / (1.0 + std::exp(-logit));
    return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

template <class Real>
nn::Tensor<double> rows_of(const nn::Tensor<Real>& x, const std::vector<std::size_t>& rows) {
    nn::Tensor<double> out = nn::Tensor<double>::matrix(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

} // namespace

template <class Real>
LbsfModel<Real>::LbsfModel(const ModelConfig& cfg, std::uint64_t seed) : m_cfg(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = cfg.d_model;
    const auto layer = cfg.layer();
    const bool folding = cfg.ablation.use_merchant_folding;

    m_encoder = BehaviorEncoder<Real>(m_params, cfg.vocab, d, cfg.ablation.fields(), cfg.shared_token_table, folding,
                                      rng);
    if (folding) {
        m_within = add_stack(m_params, "within", cfg.n_layers, layer, rng);
        m_fusion = nn::add_linear(m_params, "fusion", 2 * d, d, rng);
        m_across = add_stack(m_params, "across", cfg.n_layers, layer, rng);
        std::normal_distribution<double> normal(0.0, 0.02);
        nn::Tensor<Real> cls = nn::Tensor<Real>::matrix(1, d);
        for (auto& v : cls.values()) {
            v = static_cast<Real>(normal(rng));
        }
        m_cls = m_params.add("cls.token", std::move(cls));
        m_relational = nn::add_encoder_layer(m_params, "relational.layer0", layer, rng);
    } else {
        m_flat = add_stack(m_params, "flat", cfg.n_layers, layer, rng);
    }
    const std::size_t hidden = std::max<std::size_t>(1, d / 2);
    m_hidden = nn::add_linear(m_params, "classifier.hidden", d, hidden, rng);
    m_out = nn::add_linear(m_params, "classifier.out", hidden, 1, rng);
}

template <class Real>
LbsfModel<Real> LbsfModel<Real>::from_parameters(const ModelConfig& cfg, nn::ParameterStore<Real> params,
                                                 AmountStats stats) {
    LbsfModel model(cfg, 0);
    if (params.size() != model.m_params.size()) {
        for (const auto& p : params) {
            if (!model.m_params.contains(p.name)) {
                throw ContractError("unexpected parameter '" + p.name + "' for this configuration");
            }
        }
    }
    for (auto& p : model.m_params) {
        if (!params.contains(p.name)) {
            throw ContractError("missing parameter '" + p.name + "'");
        }
        const auto& src = params[params.index_of(p.name)];
        if (!src.value.same_shape(p.value)) {
            throw ContractError("parameter '" + p.name + "' has shape " + nn::shape_string(src.value.shape()) +
                                ", expected " + nn::shape_string(p.value.shape()));
        }
        p.value = src.value;
        p.trainable = src.trainable;
    }
    model.m_stats = stats;
    return model;
}

template <class Real>
nn::Var LbsfModel<Real>::meld_within_merchant(nn::Graph<Real>& g, nn::Var x, const std::vector<nn::Segment>& segments,
                                              const std::vector<bool>& mask, const nn::ForwardOptions& opts) const {
    const auto layer = m_cfg.layer();
    for (const auto& ids : m_within) {
        x = nn::transformer_encoder_layer(g, x, segments, mask, ids, layer, opts).out;
    }
    return nn::segment_mean(g, x, segments, mask);
}

template <class Real>
nn::Var LbsfModel<Real>::fuse_merchant_text(nn::Graph<Real>& g, nn::Var h, nn::Var m_text,
                                            FusionActivation act) const {
    const nn::Var z = nn::apply_linear(g, nn::concat_cols(g, h, m_text), m_fusion);
    return act == FusionActivation::gelu ? nn::gelu(g, z) : z;
}

template <class Real>
nn::Var LbsfModel<Real>::meld_across_merchants(nn::Graph<Real>& g, nn::Var h, const std::vector<bool>& merchant_mask,
                                               const nn::ForwardOptions& opts) const {
    if (std::none_of(merchant_mask.begin(), merchant_mask.end(), [](bool b) { return b; })) {
        throw ContractError("meld_across_merchants: no active merchant");
    }
    const auto layer = m_cfg.layer();
    const std::vector<nn::Segment> seg{{0, merchant_mask.size()}};
    for (const auto& ids : m_across) {
        h = nn::transformer_encoder_layer(g, h, seg, merchant_mask, ids, layer, opts).out;
    }
    return h;
}

template <class Real>
typename LbsfModel<Real>::ClsOutput LbsfModel<Real>::relational_learning_cls(nn::Graph<Real>& g, nn::Var h,
                                                                             const std::vector<bool>& merchant_mask,
                                                                             const nn::ForwardOptions& opts) const {
    if (std::none_of(merchant_mask.begin(), merchant_mask.end(), [](bool b) { return b; })) {
        throw ContractError("relational_learning_cls: no active merchant");
    }
    const std::size_t M = merchant_mask.size();
    std::vector<bool> mask;
    mask.reserve(M + 1);
    mask.push_back(true);
    mask.insert(mask.end(), merchant_mask.begin(), merchant_mask.end());

    const nn::Var seq = nn::concat_rows(g, {g.param(m_cls), h});
    auto res = nn::transformer_encoder_layer(g, seq, {{0, M + 1}}, mask, m_relational, m_cfg.layer(), opts);

    ClsOutput out;
    out.user = nn::slice_rows(g, res.out, 0, 1);
    const auto& w = res.weights->at(0);
    const std::size_t heads = m_cfg.n_heads;
    const std::size_t L = M + 1;
    out.attention = nn::Tensor<double>::matrix(heads, M);
    for (std::size_t hd = 0; hd < heads; ++hd) {
        const Real* row = w.data() + hd * L * L; // query 0 = CLS
        double total = 0.0;
        for (std::size_t k = 1; k < L; ++k) {
            total += static_cast<double>(row[k]);
        }
        for (std::size_t j = 0; j < M; ++j) {
            out.attention(hd, j) = total > 0.0 ? static_cast<double>(row[j + 1]) / total : 0.0;
        }
    }
    return out;
}

template <class Real>
nn::Var LbsfModel<Real>::classify(nn::Graph<Real>& g, nn::Var user) const {
    return nn::apply_linear(g, nn::gelu(g, nn::apply_linear(g, user, m_hidden)), m_out);
}

template <class Real>
typename LbsfModel<Real>::Output LbsfModel<Real>::forward(nn::Graph<Real>& g, const FoldedUser& f,
                                                          const nn::ForwardOptions& opts, ForwardTrace* trace,
                                                          std::size_t pad_to) const {
    if (trace != nullptr) {
        trace->user_id = f.user_id;
    }
    return m_cfg.ablation.use_merchant_folding ? forward_folded(g, f, opts, trace, pad_to)
                                               : forward_flat(g, f, opts, trace);
}

template <class Real>
typename LbsfModel<Real>::Output LbsfModel<Real>::forward_folded(nn::Graph<Real>& g, const FoldedUser& f,
                                                                 const nn::ForwardOptions& opts, ForwardTrace* trace,
                                                                 std::size_t pad_to) const {
    const std::size_t M = m_cfg.fold.merchant_slots;
    const std::size_t d = m_cfg.d_model;
    const std::size_t L = std::max(max_active_len(f), pad_to);
    const PaddedFold pf = pad_and_mask(f, m_cfg.fold, L);

    std::vector<std::size_t> active;
    std::vector<std::string> names;
    std::vector<bool> merchant_mask(M, false);
    for (std::size_t j = 0; j < M; ++j) {
        if (f.slots[j].active() && f.slots[j].active_len() > 0) {
            active.push_back(j);
            names.push_back(*f.slots[j].merchant);
            merchant_mask[j] = true;
        }
    }
    if (trace != nullptr) {
        trace->flat = false;
        trace->active_slots = active;
        trace->merchants = names;
    }
    if (active.empty()) {
        return {};
    }

    // Only unmasked rows are materialized: a masked row is never attended to
    // and is zeroed after every layer, so packing each merchant into a segment
    // of its active length gives the padded result without the padded work.
    std::vector<const PaymentBehavior*> rows;
    std::vector<std::size_t> positions;
    std::vector<nn::Segment> segments;
    for (std::size_t j : active) {
        const std::size_t start = rows.size();
        for (std::size_t k = 0; k < L; ++k) {
            const std::int32_t idx = pf.index[j][k];
            if (idx >= 0) {
                rows.push_back(&f.slots[j].behaviors[static_cast<std::size_t>(idx)]);
                positions.push_back(k);
            }
        }
        segments.push_back({start, rows.size() - start});
    }
    const std::vector<bool> mask(rows.size(), true);

    nn::Var x = m_encoder.encode(g, rows, m_stats);
    {
        const auto pe = nn::sinusoidal_positions<Real>(L, d);
        nn::Tensor<Real> tiled = nn::Tensor<Real>::matrix(rows.size(), d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto src = pe.row(positions[i]);
            std::copy(src.begin(), src.end(), tiled.row(i).begin());
        }
        x = nn::add(g, x, g.constant(std::move(tiled)));
    }

    const nn::Var melded = meld_within_merchant(g, x, segments, mask, opts);
    const nn::Var fused = fuse_merchant_text(g, melded, m_encoder.encode_merchants(g, names));
    nn::Var h = nn::scatter_rows(g, fused, active, M);
    if (m_cfg.merchant_pos_enc) {
        const auto pe = nn::sinusoidal_positions<Real>(M, d);
        nn::Tensor<Real> masked = nn::Tensor<Real>::matrix(M, d);
        for (std::size_t j : active) {
            const auto src = pe.row(j);
            std::copy(src.begin(), src.end(), masked.row(j).begin());
        }
        h = nn::add(g, h, g.constant(std::move(masked)));
    }
    const nn::Var enhanced = meld_across_merchants(g, h, merchant_mask, opts);
    const ClsOutput cls = relational_learning_cls(g, enhanced, merchant_mask, opts);
    Output out;
    out.logit = classify(g, cls.user);
    out.prob = nn::sigmoid(g, out.logit);

    if (trace != nullptr) {
        trace->scorable = true;
        trace->melded = g.value(melded).template cast<double>();
        trace->merchant_embeddings = g.value(fused).template cast<double>();
        trace->enhanced = rows_of(g.value(enhanced), active);
        trace->user_embedding = g.value(cls.user).template cast<double>();
        trace->cls_attention = cls.attention;
        trace->logit = static_cast<double>(g.value(out.logit)[0]);
        trace->probability = reported_probability(trace->logit);
    }
    return out;
}

template <class Real>
typename LbsfModel<Real>::Output LbsfModel<Real>::forward_flat(nn::Graph<Real>& g, const FoldedUser& f,
                                                               const nn::ForwardOptions& opts,
                                                               ForwardTrace* trace) const {
    const std::size_t d = m_cfg.d_model;
    std::vector<const PaymentBehavior*> rows;
    std::vector<std::size_t> active;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < f.slots.size(); ++j) {
        if (!f.slots[j].active() || f.slots[j].behaviors.empty()) {
            continue;
        }
        active.push_back(j);
        names.push_back(*f.slots[j].merchant);
        for (const auto& b : f.slots[j].behaviors) {
            rows.push_back(&b);
        }
    }
    if (trace != nullptr) {
        trace->flat = true;
        trace->active_slots = active;
        trace->merchants = names;
    }
    if (rows.empty()) {
        return {};
    }
    const std::size_t T = rows.size();
    const std::vector<bool> mask(T, true);
    nn::Var x = m_encoder.encode(g, rows, m_stats);
    x = nn::add(g, x, g.constant(nn::sinusoidal_positions<Real>(T, d)));
    const auto layer = m_cfg.layer();
    for (const auto& ids : m_flat) {
        x = nn::transformer_encoder_layer(g, x, {{0, T}}, mask, ids, layer, opts).out;
    }
    const nn::Var pooled = nn::average_pool_masked(g, x, mask);
    Output out;
    out.logit = classify(g, pooled);
    out.prob = nn::sigmoid(g, out.logit);
    if (trace != nullptr) {
        trace->scorable = true;
        trace->user_embedding = g.value(pooled).template cast<double>();
        trace->logit = static_cast<double>(g.value(out.logit)[0]);
        trace->probability = reported_probability(trace->logit);
    }
    return out;
}

template <class Real>
ForwardTrace LbsfModel<Real>::predict(const FoldedUser& f, std::size_t pad_to) const {
    nn::Graph<Real> g(&m_params);
    ForwardTrace trace;
    forward(g, f, {}, &trace, pad_to);
    trace.counters = g.counters();
    return trace;
}

template <class Real>
ForwardTrace LbsfModel<Real>::predict(const UserRecord& r) const {
    return predict(fold_sequence(r, m_cfg.fold));
}

template <class Real>
ForwardTrace predict_flat_baseline(const UserRecord& r, const LbsfModel<Real>& model) {
    if (model.config().ablation.use_merchant_folding) {
        throw ContractError("predict_flat_baseline: model was built with merchant folding enabled");
    }
    return model.predict(r);
}

AttentionCost attention_cost(const std::vector<std::size_t>& lengths) {
    AttentionCost c;
    std::uint64_t total = 0;
    std::uint64_t active = 0;
    for (std::size_t l : lengths) {
        if (l == 0) {
            continue;
        }
        c.folded += static_cast<std::uint64_t>(l) * l;
        total += l;
        ++active;
    }
    if (active > 0) {
        c.folded += active * active + (active + 1) * (active + 1);
    }
    c.flat = total * total;
    return c;
}

template class LbsfModel<float>;
template class LbsfModel<double>;
template ForwardTrace predict_flat_baseline<float>(const UserRecord&, const LbsfModel<float>&);
template ForwardTrace predict_flat_baseline<double>(const UserRecord&, const LbsfModel<double>&);

} // namespace lbsf
