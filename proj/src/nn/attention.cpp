#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "lbsf/error.hpp"
#include "lbsf/nn/graph.hpp"

namespace lbsf::nn {

template <class Real>
AttentionOutput<Real> attention(Graph<Real>& g, Var q, Var k, Var v, std::size_t heads,
                                const std::vector<Segment>& segments, const std::vector<bool>& row_mask) {
    const auto& Q = g.value(q);
    const auto& K = g.value(k);
    const auto& V = g.value(v);
    if (Q.rank() != 2 || !Q.same_shape(K) || !Q.same_shape(V)) {
        throw ContractError("attention: q, k, v must be matrices of equal shape");
    }
    const std::size_t n = Q.rows(), d = Q.cols();
    if (heads == 0 || d % heads != 0) {
        throw ContractError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                            " heads");
    }
    if (row_mask.size() != n) {
        throw ContractError("attention: mask length mismatch");
    }
    const std::size_t dh = d / heads;
    const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));

    auto weights = std::make_shared<AttentionWeights<Real>>();
    weights->reserve(segments.size());
    Tensor<Real> out = Tensor<Real>::matrix(n, d);
    auto& counters = g.counters();

    std::vector<std::size_t> valid;
    std::vector<Real> logits;
    for (const auto& seg : segments) {
        if (seg.start + seg.length > n) {
            throw ContractError("attention: segment out of range");
        }
        const std::size_t L = seg.length;
        valid.clear();
        for (std::size_t i = 0; i < L; ++i) {
            if (row_mask[seg.start + i]) {
                valid.push_back(i);
            }
        }
        if (valid.empty()) {
            throw ContractError("attention: no attendable position");
        }
        counters.cells += static_cast<std::uint64_t>(valid.size()) * valid.size();
        counters.matrices.emplace_back(valid.size(), valid.size());

        Tensor<Real> A({heads, L, L});
        logits.resize(valid.size());
        for (std::size_t h = 0; h < heads; ++h) {
            Real* Ah = A.data() + h * L * L;
            for (std::size_t qi : valid) {
                const Real* qrow = Q.data() + (seg.start + qi) * d + h * dh;
                Real max = -std::numeric_limits<Real>::infinity();
                for (std::size_t t = 0; t < valid.size(); ++t) {
                    const Real* krow = K.data() + (seg.start + valid[t]) * d + h * dh;
                    logits[t] = kernels::dot(qrow, krow, dh) * inv_sqrt;
                    max = std::max(max, logits[t]);
                }
                Real total = 0;
                for (std::size_t t = 0; t < valid.size(); ++t) {
                    logits[t] = std::exp(logits[t] - max);
                    total += logits[t];
                }
                Real* arow = Ah + qi * L;
                Real* orow = out.data() + (seg.start + qi) * d + h * dh;
                for (std::size_t t = 0; t < valid.size(); ++t) {
                    const Real a = logits[t] / total;
                    arow[valid[t]] = a;
                    kernels::axpy(a, V.data() + (seg.start + valid[t]) * d + h * dh, orow, dh);
                }
            }
        }
        weights->push_back(std::move(A));
    }

    Var result = g.emit("attention", std::move(out), {q, k, v},
                        [q, k, v, heads, segments, row_mask, weights, dh, d, inv_sqrt](Graph<Real>& g, Var self) {
        const auto& dO = g.grad(self);
        const auto& Q = g.value(q);
        const auto& K = g.value(k);
        const auto& V = g.value(v);
        Tensor<Real>* dQ = g.requires_grad(q) ? &g.grad(q) : nullptr;
        Tensor<Real>* dK = g.requires_grad(k) ? &g.grad(k) : nullptr;
        Tensor<Real>* dV = g.requires_grad(v) ? &g.grad(v) : nullptr;
        std::vector<std::size_t> valid;
        std::vector<Real> dA;
        for (std::size_t s = 0; s < segments.size(); ++s) {
            const auto& seg = segments[s];
            const std::size_t L = seg.length;
            valid.clear();
            for (std::size_t i = 0; i < L; ++i) {
                if (row_mask[seg.start + i]) {
                    valid.push_back(i);
                }
            }
            dA.resize(valid.size());
            const auto& A = (*weights)[s];
            for (std::size_t h = 0; h < heads; ++h) {
                const Real* Ah = A.data() + h * L * L;
                for (std::size_t qi : valid) {
                    const std::size_t qrow = (seg.start + qi) * d + h * dh;
                    const Real* dorow = dO.data() + qrow;
                    const Real* arow = Ah + qi * L;
                    // dA_j = dO_i . v_j ; dS_j = A_j (dA_j - sum_t A_t dA_t)
                    Real inner = 0;
                    for (std::size_t t = 0; t < valid.size(); ++t) {
                        const std::size_t krow = (seg.start + valid[t]) * d + h * dh;
                        dA[t] = kernels::dot(dorow, V.data() + krow, dh);
                        inner += arow[valid[t]] * dA[t];
                        if (dV) {
                            kernels::axpy(arow[valid[t]], dorow, dV->data() + krow, dh);
                        }
                    }
                    for (std::size_t t = 0; t < valid.size(); ++t) {
                        const std::size_t krow = (seg.start + valid[t]) * d + h * dh;
                        const Real ds = arow[valid[t]] * (dA[t] - inner) * inv_sqrt;
                        if (dQ) {
                            kernels::axpy(ds, K.data() + krow, dQ->data() + qrow, dh);
                        }
                        if (dK) {
                            kernels::axpy(ds, Q.data() + qrow, dK->data() + krow, dh);
                        }
                    }
                }
            }
        }
    });
    return {result, weights};
}

template AttentionOutput<float> attention<float>(Graph<float>&, Var, Var, Var, std::size_t,
                                                 const std::vector<Segment>&, const std::vector<bool>&);
template AttentionOutput<double> attention<double>(Graph<double>&, Var, Var, Var, std::size_t,
                                                   const std::vector<Segment>&, const std::vector<bool>&);

} // namespace lbsf::nn
