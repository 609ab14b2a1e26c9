#include "lbsf/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "lbsf/error.hpp"

namespace lbsf::nn {

namespace {

template <class Real>
void require_matrix(const Tensor<Real>& t, const char* op) {
    if (t.rank() != 2) {
        throw ContractError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

} // namespace

template <class Real>
Graph<Real>::Graph(const ParameterStore<Real>* params, GradientBuffer<Real>* grads)
    : m_params(params), m_grads(grads) {
    if (grads != nullptr && params == nullptr) {
        throw ContractError("graph: gradient buffer without parameters");
    }
    m_nodes.reserve(256);
}

template <class Real>
Var Graph<Real>::constant(TensorT value) {
    Node node;
    node.value = std::move(value);
    m_nodes.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(m_nodes.size() - 1)};
}

template <class Real>
Var Graph<Real>::param(std::size_t index) {
    if (m_params == nullptr || index >= m_params->size()) {
        throw ContractError("graph: parameter index out of range");
    }
    if (auto it = m_param_vars.find(index); it != m_param_vars.end()) {
        return it->second;
    }
    Node node;
    node.external = &(*m_params)[index].value;
    node.param_index = static_cast<std::int64_t>(index);
    node.requires_grad = recording() && (*m_params)[index].trainable;
    m_nodes.push_back(std::move(node));
    Var v{static_cast<std::uint32_t>(m_nodes.size() - 1)};
    m_param_vars.emplace(index, v);
    return v;
}

template <class Real>
Var Graph<Real>::param(std::string_view name) {
    if (m_params == nullptr) {
        throw ContractError("graph: no parameter store attached");
    }
    return param(m_params->index_of(name));
}

template <class Real>
Var Graph<Real>::emit(const char* op, TensorT value, std::span<const Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + op);
    }
    Node node;
    node.value = std::move(value);
    if (recording()) {
        node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                         [&](Var v) { return v.valid() && m_nodes[v.id].requires_grad; });
        if (node.requires_grad) {
            node.backward = std::move(backward);
        }
    }
    m_nodes.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(m_nodes.size() - 1)};
}

template <class Real>
const Tensor<Real>& Graph<Real>::value(Var v) const {
    const Node& n = m_nodes.at(v.id);
    return n.external != nullptr ? *n.external : n.value;
}

template <class Real>
Tensor<Real>& Graph<Real>::grad(Var v) {
    Node& n = m_nodes.at(v.id);
    if (n.param_index >= 0 && m_grads != nullptr) {
        n.has_grad = true;
        return (*m_grads)[static_cast<std::size_t>(n.param_index)];
    }
    if (!n.has_grad) {
        n.grad = TensorT(value(v).shape());
        n.has_grad = true;
    }
    return n.grad;
}

template <class Real>
const Tensor<Real>* Graph<Real>::grad_if_any(Var v) const {
    const Node& n = m_nodes.at(v.id);
    if (!n.has_grad) {
        return nullptr;
    }
    if (n.param_index >= 0 && m_grads != nullptr) {
        return &(*m_grads)[static_cast<std::size_t>(n.param_index)];
    }
    return &n.grad;
}

template <class Real>
void Graph<Real>::backward(Var loss, Real seed) {
    if (!recording()) {
        throw ContractError("backward: graph was built without a gradient buffer");
    }
    if (value(loss).size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + shape_string(value(loss).shape()));
    }
    if (!m_nodes[loss.id].requires_grad) {
        return;
    }
    grad(loss)[0] += seed;
    for (std::int64_t id = loss.id; id >= 0; --id) {
        Node& n = m_nodes[static_cast<std::size_t>(id)];
        if (n.has_grad && n.backward) {
            n.backward(*this, Var{static_cast<std::uint32_t>(id)});
        }
    }
}

// ---- ops ------------------------------------------------------------------

template <class Real>
Var matmul(Graph<Real>& g, Var a, Var b) {
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    require_matrix(A, "matmul");
    require_matrix(B, "matmul");
    if (A.cols() != B.rows()) {
        throw ContractError("matmul: shape mismatch " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
    }
    const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
    Tensor<Real> C = Tensor<Real>::matrix(n, m);
    kernels::gemm_nn(A.data(), B.data(), C.data(), n, k, m);
    return g.emit("matmul", std::move(C), {a, b}, [a, b, n, k, m](Graph<Real>& g, Var self) {
        const auto& dC = g.grad(self);
        if (g.requires_grad(a)) {
            std::vector<Real> bt(k * m);
            kernels::transpose(g.value(b).data(), bt.data(), k, m);
            kernels::gemm_nn(dC.data(), bt.data(), g.grad(a).data(), n, m, k);
        }
        if (g.requires_grad(b)) {
            kernels::gemm_tn(g.value(a).data(), dC.data(), g.grad(b).data(), n, k, m);
        }
    });
}

template <class Real>
Var linear(Graph<Real>& g, Var x, Var w, Var bias) {
    const auto& X = g.value(x);
    const auto& W = g.value(w);
    require_matrix(X, "linear");
    require_matrix(W, "linear");
    if (X.cols() != W.rows()) {
        throw ContractError("linear: shape mismatch " + shape_string(X.shape()) + " x " + shape_string(W.shape()));
    }
    const std::size_t n = X.rows(), in = X.cols(), out = W.cols();
    Tensor<Real> Y = Tensor<Real>::matrix(n, out);
    if (bias.valid()) {
        const auto& B = g.value(bias);
        if (B.size() != out) {
            throw ContractError("linear: bias size mismatch");
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(B.data(), B.data() + out, Y.data() + i * out);
        }
    }
    kernels::gemm_nn(X.data(), W.data(), Y.data(), n, in, out);
    return g.emit("linear", std::move(Y), {x, w, bias}, [x, w, bias, n, in, out](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        if (g.requires_grad(x)) {
            std::vector<Real> wt(in * out);
            kernels::transpose(g.value(w).data(), wt.data(), in, out);
            kernels::gemm_nn(dY.data(), wt.data(), g.grad(x).data(), n, out, in);
        }
        if (g.requires_grad(w)) {
            kernels::gemm_tn(g.value(x).data(), dY.data(), g.grad(w).data(), n, in, out);
        }
        if (bias.valid() && g.requires_grad(bias)) {
            Real* db = g.grad(bias).data();
            for (std::size_t i = 0; i < n; ++i) {
                kernels::axpy(Real(1), dY.data() + i * out, db, out);
            }
        }
    });
}

template <class Real>
Var add(Graph<Real>& g, Var a, Var b) {
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    const bool broadcast = !A.same_shape(B);
    if (broadcast && !(B.rank() == 2 && A.rank() == 2 && B.rows() == 1 && B.cols() == A.cols())) {
        throw ContractError("add: incompatible shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
    }
    Tensor<Real> C = A;
    const std::size_t width = B.size();
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] += B[broadcast ? i % width : i];
    }
    return g.emit("add", std::move(C), {a, b}, [a, b, broadcast, width](Graph<Real>& g, Var self) {
        const auto& dC = g.grad(self);
        if (g.requires_grad(a)) {
            auto& dA = g.grad(a);
            for (std::size_t i = 0; i < dC.size(); ++i) {
                dA[i] += dC[i];
            }
        }
        if (g.requires_grad(b)) {
            auto& dB = g.grad(b);
            for (std::size_t i = 0; i < dC.size(); ++i) {
                dB[broadcast ? i % width : i] += dC[i];
            }
        }
    });
}

template <class Real>
Var mul(Graph<Real>& g, Var a, Var b) {
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    if (!A.same_shape(B)) {
        throw ContractError("mul: shape mismatch");
    }
    Tensor<Real> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] *= B[i];
    }
    return g.emit("mul", std::move(C), {a, b}, [a, b](Graph<Real>& g, Var self) {
        const auto& dC = g.grad(self);
        if (g.requires_grad(a)) {
            auto& dA = g.grad(a);
            const auto& B = g.value(b);
            for (std::size_t i = 0; i < dC.size(); ++i) {
                dA[i] += dC[i] * B[i];
            }
        }
        if (g.requires_grad(b)) {
            auto& dB = g.grad(b);
            const auto& A = g.value(a);
            for (std::size_t i = 0; i < dC.size(); ++i) {
                dB[i] += dC[i] * A[i];
            }
        }
    });
}

template <class Real>
Var scale(Graph<Real>& g, Var x, Real factor) {
    Tensor<Real> Y = g.value(x);
    for (auto& v : Y.values()) {
        v *= factor;
    }
    return g.emit("scale", std::move(Y), {x}, [x, factor](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        auto& dX = g.grad(x);
        for (std::size_t i = 0; i < dY.size(); ++i) {
            dX[i] += factor * dY[i];
        }
    });
}

template <class Real>
Var sum(Graph<Real>& g, Var x) {
    Real s = 0;
    for (Real v : g.value(x).values()) {
        s += v;
    }
    return g.emit("sum", Tensor<Real>({1}, s), {x}, [x](Graph<Real>& g, Var self) {
        const Real d = g.grad(self)[0];
        for (auto& v : g.grad(x).values()) {
            v += d;
        }
    });
}

template <class Real>
Var layer_norm(Graph<Real>& g, Var x, Var gamma, Var beta, Real eps) {
    const auto& X = g.value(x);
    require_matrix(X, "layer_norm");
    const std::size_t n = X.rows(), d = X.cols();
    const auto& G = g.value(gamma);
    const auto& B = g.value(beta);
    if (G.size() != d || B.size() != d) {
        throw ContractError("layer_norm: gain/bias width mismatch");
    }
    auto stats = std::make_shared<std::vector<Real>>(2 * n); // mean, rstd per row
    Tensor<Real> Y = Tensor<Real>::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const Real* xi = X.data() + i * d;
        Real mean = 0;
        for (std::size_t j = 0; j < d; ++j) {
            mean += xi[j];
        }
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            var += (xi[j] - mean) * (xi[j] - mean);
        }
        var /= static_cast<Real>(d);
        const Real rstd = Real(1) / std::sqrt(var + eps);
        (*stats)[2 * i] = mean;
        (*stats)[2 * i + 1] = rstd;
        Real* yi = Y.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            yi[j] = (xi[j] - mean) * rstd * G[j] + B[j];
        }
    }
    return g.emit("layer_norm", std::move(Y), {x, gamma, beta}, [x, gamma, beta, stats, n, d](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        const auto& X = g.value(x);
        const auto& G = g.value(gamma);
        const bool need_x = g.requires_grad(x);
        Tensor<Real>* dX = need_x ? &g.grad(x) : nullptr;
        Tensor<Real>* dG = g.requires_grad(gamma) ? &g.grad(gamma) : nullptr;
        Tensor<Real>* dB = g.requires_grad(beta) ? &g.grad(beta) : nullptr;
        std::vector<Real> xhat(d), dxhat(d);
        for (std::size_t i = 0; i < n; ++i) {
            const Real mean = (*stats)[2 * i];
            const Real rstd = (*stats)[2 * i + 1];
            const Real* xi = X.data() + i * d;
            const Real* dyi = dY.data() + i * d;
            Real mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[j] = (xi[j] - mean) * rstd;
                dxhat[j] = dyi[j] * G[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xhat[j];
                if (dG) (*dG)[j] += dyi[j] * xhat[j];
                if (dB) (*dB)[j] += dyi[j];
            }
            if (dX) {
                mean_dxhat /= static_cast<Real>(d);
                mean_dxhat_xhat /= static_cast<Real>(d);
                Real* dxi = dX->data() + i * d;
                for (std::size_t j = 0; j < d; ++j) {
                    dxi[j] += rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
        }
    });
}

template <class Real>
Var gelu(Graph<Real>& g, Var x) {
    const Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
    Tensor<Real> Y = g.value(x);
    for (auto& v : Y.values()) {
        v = Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2));
    }
    return g.emit("gelu", std::move(Y), {x}, [x, inv_sqrt2](Graph<Real>& g, Var self) {
        const Real inv_sqrt_2pi = Real(1) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
        const auto& dY = g.grad(self);
        const auto& X = g.value(x);
        auto& dX = g.grad(x);
        for (std::size_t i = 0; i < X.size(); ++i) {
            const Real v = X[i];
            const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
            const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
            dX[i] += dY[i] * (cdf + v * pdf);
        }
    });
}

template <class Real>
Var sigmoid(Graph<Real>& g, Var x) {
    Tensor<Real> Y = g.value(x);
    for (auto& v : Y.values()) {
        if (v >= 0) {
            v = Real(1) / (Real(1) + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            v = e / (Real(1) + e);
        }
    }
    return g.emit("sigmoid", std::move(Y), {x}, [x](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        const auto& Y = g.value(self);
        auto& dX = g.grad(x);
        for (std::size_t i = 0; i < Y.size(); ++i) {
            dX[i] += dY[i] * Y[i] * (Real(1) - Y[i]);
        }
    });
}

template <class Real>
Var mask_rows(Graph<Real>& g, Var x, const std::vector<bool>& keep) {
    Tensor<Real> Y = g.value(x);
    require_matrix(Y, "mask_rows");
    if (keep.size() != Y.rows()) {
        throw ContractError("mask_rows: mask length mismatch");
    }
    for (std::size_t i = 0; i < Y.rows(); ++i) {
        if (!keep[i]) {
            std::fill_n(Y.data() + i * Y.cols(), Y.cols(), Real(0));
        }
    }
    return g.emit("mask_rows", std::move(Y), {x}, [x, keep](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        auto& dX = g.grad(x);
        const std::size_t d = dY.cols();
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) {
                kernels::axpy(Real(1), dY.data() + i * d, dX.data() + i * d, d);
            }
        }
    });
}

template <class Real>
Var concat_cols(Graph<Real>& g, Var a, Var b) {
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    require_matrix(A, "concat_cols");
    require_matrix(B, "concat_cols");
    if (A.rows() != B.rows()) {
        throw ContractError("concat_cols: row count mismatch");
    }
    const std::size_t n = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor<Real> C = Tensor<Real>::matrix(n, ca + cb);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(A.data() + i * ca, ca, C.data() + i * (ca + cb));
        std::copy_n(B.data() + i * cb, cb, C.data() + i * (ca + cb) + ca);
    }
    return g.emit("concat_cols", std::move(C), {a, b}, [a, b, n, ca, cb](Graph<Real>& g, Var self) {
        const auto& dC = g.grad(self);
        if (g.requires_grad(a)) {
            auto& dA = g.grad(a);
            for (std::size_t i = 0; i < n; ++i) {
                kernels::axpy(Real(1), dC.data() + i * (ca + cb), dA.data() + i * ca, ca);
            }
        }
        if (g.requires_grad(b)) {
            auto& dB = g.grad(b);
            for (std::size_t i = 0; i < n; ++i) {
                kernels::axpy(Real(1), dC.data() + i * (ca + cb) + ca, dB.data() + i * cb, cb);
            }
        }
    });
}

template <class Real>
Var concat_rows(Graph<Real>& g, const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_rows: no inputs");
    }
    const std::size_t d = g.value(parts[0]).cols();
    std::size_t n = 0;
    for (Var p : parts) {
        require_matrix(g.value(p), "concat_rows");
        if (g.value(p).cols() != d) {
            throw ContractError("concat_rows: column count mismatch");
        }
        n += g.value(p).rows();
    }
    Tensor<Real> C = Tensor<Real>::matrix(n, d);
    std::size_t offset = 0;
    for (Var p : parts) {
        const auto& P = g.value(p);
        std::copy(P.data(), P.data() + P.size(), C.data() + offset);
        offset += P.size();
    }
    return g.emit("concat_rows", std::move(C), std::span<const Var>(parts), [parts](Graph<Real>& g, Var self) {
        const auto& dC = g.grad(self);
        std::size_t offset = 0;
        for (Var p : parts) {
            const std::size_t count = g.value(p).size();
            if (g.requires_grad(p)) {
                kernels::axpy(Real(1), dC.data() + offset, g.grad(p).data(), count);
            }
            offset += count;
        }
    });
}

template <class Real>
Var slice_rows(Graph<Real>& g, Var x, std::size_t start, std::size_t count) {
    const auto& X = g.value(x);
    require_matrix(X, "slice_rows");
    if (start + count > X.rows()) {
        throw ContractError("slice_rows: range out of bounds");
    }
    const std::size_t d = X.cols();
    Tensor<Real> Y = Tensor<Real>::matrix(count, d);
    std::copy_n(X.data() + start * d, count * d, Y.data());
    return g.emit("slice_rows", std::move(Y), {x}, [x, start, count, d](Graph<Real>& g, Var self) {
        kernels::axpy(Real(1), g.grad(self).data(), g.grad(x).data() + start * d, count * d);
    });
}

template <class Real>
Var scatter_rows(Graph<Real>& g, Var x, const std::vector<std::size_t>& positions, std::size_t total_rows) {
    const auto& X = g.value(x);
    require_matrix(X, "scatter_rows");
    if (positions.size() != X.rows()) {
        throw ContractError("scatter_rows: one position per input row required");
    }
    const std::size_t d = X.cols();
    Tensor<Real> Y = Tensor<Real>::matrix(total_rows, d);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= total_rows) {
            throw ContractError("scatter_rows: position out of range");
        }
        std::copy_n(X.data() + i * d, d, Y.data() + positions[i] * d);
    }
    return g.emit("scatter_rows", std::move(Y), {x}, [x, positions, d](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        auto& dX = g.grad(x);
        for (std::size_t i = 0; i < positions.size(); ++i) {
            kernels::axpy(Real(1), dY.data() + positions[i] * d, dX.data() + i * d, d);
        }
    });
}

template <class Real>
Var segment_mean(Graph<Real>& g, Var x, const std::vector<Segment>& segments, const std::vector<bool>& row_mask) {
    const auto& X = g.value(x);
    require_matrix(X, "segment_mean");
    if (row_mask.size() != X.rows()) {
        throw ContractError("segment_mean: mask length mismatch");
    }
    const std::size_t d = X.cols();
    Tensor<Real> Y = Tensor<Real>::matrix(segments.size(), d);
    std::vector<Real> inv_count(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto& seg = segments[s];
        if (seg.start + seg.length > X.rows()) {
            throw ContractError("segment_mean: segment out of range");
        }
        std::size_t count = 0;
        Real* ys = Y.data() + s * d;
        for (std::size_t i = seg.start; i < seg.start + seg.length; ++i) {
            if (row_mask[i]) {
                kernels::axpy(Real(1), X.data() + i * d, ys, d);
                ++count;
            }
        }
        if (count == 0) {
            throw ContractError("average pooling over an all-masked sequence");
        }
        inv_count[s] = Real(1) / static_cast<Real>(count);
        for (std::size_t j = 0; j < d; ++j) {
            ys[j] *= inv_count[s];
        }
    }
    return g.emit("segment_mean", std::move(Y), {x}, [x, segments, row_mask, inv_count, d](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        auto& dX = g.grad(x);
        for (std::size_t s = 0; s < segments.size(); ++s) {
            for (std::size_t i = segments[s].start; i < segments[s].start + segments[s].length; ++i) {
                if (row_mask[i]) {
                    kernels::axpy(inv_count[s], dY.data() + s * d, dX.data() + i * d, d);
                }
            }
        }
    });
}

template <class Real>
Var embedding_bag_mean(Graph<Real>& g, Var table, const std::vector<std::vector<std::uint32_t>>& bags) {
    const auto& T = g.value(table);
    require_matrix(T, "embedding_bag_mean");
    const std::size_t d = T.cols();
    Tensor<Real> Y = Tensor<Real>::matrix(bags.size(), d);
    for (std::size_t i = 0; i < bags.size(); ++i) {
        if (bags[i].empty()) {
            continue;
        }
        Real* yi = Y.data() + i * d;
        for (auto idx : bags[i]) {
            if (idx >= T.rows()) {
                throw ContractError("embedding_bag_mean: index out of range");
            }
            kernels::axpy(Real(1), T.data() + static_cast<std::size_t>(idx) * d, yi, d);
        }
        const Real inv = Real(1) / static_cast<Real>(bags[i].size());
        for (std::size_t j = 0; j < d; ++j) {
            yi[j] *= inv;
        }
    }
    return g.emit("embedding_bag_mean", std::move(Y), {table}, [table, bags, d](Graph<Real>& g, Var self) {
        const auto& dY = g.grad(self);
        auto& dT = g.grad(table);
        for (std::size_t i = 0; i < bags.size(); ++i) {
            if (bags[i].empty()) {
                continue;
            }
            const Real inv = Real(1) / static_cast<Real>(bags[i].size());
            for (auto idx : bags[i]) {
                kernels::axpy(inv, dY.data() + i * d, dT.data() + static_cast<std::size_t>(idx) * d, d);
            }
        }
    });
}

template <class Real>
Var binary_cross_entropy(Graph<Real>& g, Var prob, const std::vector<Real>& labels, const std::vector<Real>& weights,
                         Real clamp) {
    const auto& P = g.value(prob);
    const std::size_t n = P.size();
    if (n == 0) {
        throw ContractError("binary_cross_entropy: no samples");
    }
    if (labels.size() != n || weights.size() != n) {
        throw ContractError("binary_cross_entropy: label/weight count mismatch");
    }
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real p = std::clamp(P[i], clamp, Real(1) - clamp);
        total -= weights[i] * (labels[i] * std::log(p) + (Real(1) - labels[i]) * std::log(Real(1) - p));
    }
    total /= static_cast<Real>(n);
    return g.emit("binary_cross_entropy", Tensor<Real>({1}, total), {prob},
                  [prob, labels, weights, clamp, n](Graph<Real>& g, Var self) {
                      const Real d = g.grad(self)[0] / static_cast<Real>(n);
                      const auto& P = g.value(prob);
                      auto& dP = g.grad(prob);
                      for (std::size_t i = 0; i < n; ++i) {
                          const Real p = P[i];
                          if (p < clamp || p > Real(1) - clamp) {
                              continue;
                          }
                          dP[i] -= d * weights[i] * (labels[i] / p - (Real(1) - labels[i]) / (Real(1) - p));
                      }
                  });
}

template <class Real>
Var dropout(Graph<Real>& g, Var x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) {
        return x;
    }
    if (rate >= 1.0) {
        throw ContractError("dropout: rate must be < 1");
    }
    const auto& X = g.value(x);
    Tensor<Real> M(X.shape());
    std::bernoulli_distribution keep(1.0 - rate);
    const Real scale_kept = static_cast<Real>(1.0 / (1.0 - rate));
    for (auto& m : M.values()) {
        m = keep(rng) ? scale_kept : Real(0);
    }
    return mul(g, x, g.constant(std::move(M)));
}

#define LBSF_INSTANTIATE_OPS(R)                                                                                  \
    template Var matmul<R>(Graph<R>&, Var, Var);                                                                 \
    template Var linear<R>(Graph<R>&, Var, Var, Var);                                                            \
    template Var add<R>(Graph<R>&, Var, Var);                                                                    \
    template Var mul<R>(Graph<R>&, Var, Var);                                                                    \
    template Var scale<R>(Graph<R>&, Var, R);                                                                    \
    template Var sum<R>(Graph<R>&, Var);                                                                         \
    template Var layer_norm<R>(Graph<R>&, Var, Var, Var, R);                                                     \
    template Var gelu<R>(Graph<R>&, Var);                                                                        \
    template Var sigmoid<R>(Graph<R>&, Var);                                                                     \
    template Var mask_rows<R>(Graph<R>&, Var, const std::vector<bool>&);                                         \
    template Var concat_cols<R>(Graph<R>&, Var, Var);                                                            \
    template Var concat_rows<R>(Graph<R>&, const std::vector<Var>&);                                             \
    template Var slice_rows<R>(Graph<R>&, Var, std::size_t, std::size_t);                                        \
    template Var scatter_rows<R>(Graph<R>&, Var, const std::vector<std::size_t>&, std::size_t);                  \
    template Var segment_mean<R>(Graph<R>&, Var, const std::vector<Segment>&, const std::vector<bool>&);         \
    template Var embedding_bag_mean<R>(Graph<R>&, Var, const std::vector<std::vector<std::uint32_t>>&);          \
    template Var binary_cross_entropy<R>(Graph<R>&, Var, const std::vector<R>&, const std::vector<R>&, R);       \
    template Var dropout<R>(Graph<R>&, Var, double, std::mt19937_64&);

LBSF_INSTANTIATE_OPS(float)
LBSF_INSTANTIATE_OPS(double)

template class Graph<float>;
template class Graph<double>;

} // namespace lbsf::nn
