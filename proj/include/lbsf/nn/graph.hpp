#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lbsf/nn/tensor.hpp"

namespace lbsf::nn {

// Handle to a node of a Graph.
struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Contiguous run of rows that attend only among themselves.
struct Segment {
    std::size_t start = 0;
    std::size_t length = 0;
};

// Query-key score entries actually computed by attention ops, counted over
// unmasked queries and keys (heads not multiplied in).
struct AttentionCounters {
    std::uint64_t cells = 0;
    std::vector<std::pair<std::size_t, std::size_t>> matrices; // (queries, keys) per segment
};

// Tape for one forward pass. Nodes are appended in execution order, so
// reverse creation order is a valid topological order for backward.
//
// Parameters are referenced, not copied. When a GradientBuffer is attached,
// parameter gradients accumulate straight into it; without one the graph is
// inference-only and no backward closures are kept.
template <class Real>
class Graph {
public:
    using TensorT = Tensor<Real>;
    using BackwardFn = std::function<void(Graph&, Var self)>;

    explicit Graph(const ParameterStore<Real>* params = nullptr, GradientBuffer<Real>* grads = nullptr);

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return m_grads != nullptr; }

    Var constant(TensorT value);
    Var param(std::size_t index);
    Var param(std::string_view name);

    // Appends an op node. The value is checked for NaN/Inf (NumericError
    // naming `op`). `backward` is dropped when no input requires grad.
    Var emit(const char* op, TensorT value, std::span<const Var> inputs, BackwardFn backward);
    Var emit(const char* op, TensorT value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return emit(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }

    const TensorT& value(Var v) const;
    bool requires_grad(Var v) const { return m_nodes[v.id].requires_grad; }
    // Gradient accumulator, zero-initialized on first use.
    TensorT& grad(Var v);
    const TensorT* grad_if_any(Var v) const;

    // Reverse pass from a single-element node. Throws ContractError if the
    // loss is not scalar or the graph is not recording.
    void backward(Var loss, Real seed = Real(1));

    AttentionCounters& counters() noexcept { return m_counters; }
    const AttentionCounters& counters() const noexcept { return m_counters; }
    std::size_t node_count() const noexcept { return m_nodes.size(); }

private:
    struct Node {
        TensorT value;
        const TensorT* external = nullptr;
        TensorT grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::int64_t param_index = -1;
        BackwardFn backward;
    };

    const ParameterStore<Real>* m_params;
    GradientBuffer<Real>* m_grads;
    std::vector<Node> m_nodes;
    std::unordered_map<std::size_t, Var> m_param_vars;
    AttentionCounters m_counters;
};

// ---- differentiable ops -------------------------------------------------

template <class Real> Var matmul(Graph<Real>& g, Var a, Var b);
// x[n,in] * w[in,out] + bias[1,out]; `bias` may be invalid.
template <class Real> Var linear(Graph<Real>& g, Var x, Var w, Var bias);
template <class Real> Var add(Graph<Real>& g, Var a, Var b);
template <class Real> Var mul(Graph<Real>& g, Var a, Var b);
template <class Real> Var scale(Graph<Real>& g, Var x, Real factor);
template <class Real> Var sum(Graph<Real>& g, Var x);
template <class Real> Var layer_norm(Graph<Real>& g, Var x, Var gamma, Var beta, Real eps = Real(1e-5));
template <class Real> Var gelu(Graph<Real>& g, Var x);
template <class Real> Var sigmoid(Graph<Real>& g, Var x);
// Rows with keep[i] == false become exact zeros.
template <class Real> Var mask_rows(Graph<Real>& g, Var x, const std::vector<bool>& keep);
template <class Real> Var concat_cols(Graph<Real>& g, Var a, Var b);
template <class Real> Var concat_rows(Graph<Real>& g, const std::vector<Var>& parts);
template <class Real> Var slice_rows(Graph<Real>& g, Var x, std::size_t start, std::size_t count);
// out[positions[i]] = x[i]; remaining rows of the [total_rows, d] result are zero.
template <class Real> Var scatter_rows(Graph<Real>& g, Var x, const std::vector<std::size_t>& positions,
                                       std::size_t total_rows);
// Mean of unmasked rows per segment -> [segments, d]. ContractError if a
// segment has no unmasked row.
template <class Real> Var segment_mean(Graph<Real>& g, Var x, const std::vector<Segment>& segments,
                                       const std::vector<bool>& row_mask);
// Row i = mean of table rows listed in bags[i]; an empty bag gives zeros.
template <class Real> Var embedding_bag_mean(Graph<Real>& g, Var table,
                                             const std::vector<std::vector<std::uint32_t>>& bags);

// Per-segment attention weights, each [heads, L, L] (query-major).
template <class Real>
using AttentionWeights = std::vector<Tensor<Real>>;

template <class Real>
struct AttentionOutput {
    Var out;
    std::shared_ptr<const AttentionWeights<Real>> weights;
};

// Scaled dot-product attention with `heads` heads over q/k/v [N, d]. Rows
// attend only within their segment; masked keys get zero weight and masked
// query rows produce zero output.
template <class Real>
AttentionOutput<Real> attention(Graph<Real>& g, Var q, Var k, Var v, std::size_t heads,
                                const std::vector<Segment>& segments, const std::vector<bool>& row_mask);

// Mean binary cross-entropy of probabilities (clamped to [clamp, 1-clamp])
// against labels, with per-sample weights. Gradient is zero where clamped.
template <class Real>
Var binary_cross_entropy(Graph<Real>& g, Var prob, const std::vector<Real>& labels,
                         const std::vector<Real>& weights, Real clamp = Real(1e-7));

template <class Real> Var dropout(Graph<Real>& g, Var x, double rate, std::mt19937_64& rng);

} // namespace lbsf::nn
