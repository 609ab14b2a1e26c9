#include "lbsf/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "lbsf/error.hpp"

namespace lbsf::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

template <class Real>
Tensor<Real>::Tensor(std::vector<std::size_t> shape, Real fill)
    : m_shape(std::move(shape)), m_data(product(m_shape), fill) {}

template <class Real>
Tensor<Real>::Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
    : m_shape(std::move(shape)), m_data(std::move(data)) {
    if (product(m_shape) != m_data.size()) {
        throw ContractError("tensor shape " + shape_string(m_shape) + " does not match " +
                            std::to_string(m_data.size()) + " values");
    }
}

template <class Real>
void Tensor<Real>::fill(Real v) {
    std::fill(m_data.begin(), m_data.end(), v);
}

template <class Real>
bool Tensor<Real>::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](Real v) { return std::isfinite(v); });
}

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ContractError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(x.shape()));
    }
    const auto& shape = x.shape();
    const std::size_t extent = shape[axis];
    if (extent == 0) {
        throw ContractError("softmax: empty axis");
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::size_t outer = x.size() / (extent * inner);

    Tensor<Real> out(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            Real max = x[base];
            for (std::size_t k = 1; k < extent; ++k) {
                max = std::max(max, x[base + k * inner]);
            }
            Real sum = 0;
            for (std::size_t k = 0; k < extent; ++k) {
                const Real e = std::exp(x[base + k * inner] - max);
                out[base + k * inner] = e;
                sum += e;
            }
            for (std::size_t k = 0; k < extent; ++k) {
                out[base + k * inner] /= sum;
            }
        }
    }
    return out;
}

template <class Real>
std::size_t ParameterStore<Real>::add(std::string name, Tensor<Real> value, bool trainable) {
    if (m_index.count(name)) {
        throw ContractError("duplicate parameter name '" + name + "'");
    }
    m_index.emplace(name, m_params.size());
    m_params.push_back({std::move(name), std::move(value), trainable});
    return m_params.size() - 1;
}

template <class Real>
bool ParameterStore<Real>::contains(std::string_view name) const {
    return m_index.count(std::string(name)) != 0;
}

template <class Real>
std::size_t ParameterStore<Real>::index_of(std::string_view name) const {
    auto it = m_index.find(std::string(name));
    if (it == m_index.end()) {
        throw ContractError("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
}

template <class Real>
std::size_t ParameterStore<Real>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : m_params) {
        n += p.value.size();
    }
    return n;
}

template <class Real>
GradientBuffer<Real>::GradientBuffer(const ParameterStore<Real>& params) {
    m_grads.reserve(params.size());
    for (const auto& p : params) {
        m_grads.emplace_back(p.value.shape());
    }
}

template <class Real>
void GradientBuffer<Real>::zero() {
    for (auto& g : m_grads) {
        g.fill(Real(0));
    }
}

template <class Real>
void GradientBuffer<Real>::add(const GradientBuffer& other) {
    for (std::size_t i = 0; i < m_grads.size(); ++i) {
        auto dst = m_grads[i].values();
        auto src = other.m_grads[i].values();
        for (std::size_t k = 0; k < dst.size(); ++k) {
            dst[k] += src[k];
        }
    }
}

template <class Real>
double GradientBuffer<Real>::global_norm() const {
    double sq = 0.0;
    for (const auto& g : m_grads) {
        for (Real v : g.values()) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    return std::sqrt(sq);
}

template <class Real>
void GradientBuffer<Real>::scale(Real factor) {
    for (auto& g : m_grads) {
        for (Real& v : g.values()) {
            v *= factor;
        }
    }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> softmax(const Tensor<float>&, std::size_t);
template Tensor<double> softmax(const Tensor<double>&, std::size_t);
template class ParameterStore<float>;
template class ParameterStore<double>;
template class GradientBuffer<float>;
template class GradientBuffer<double>;

} // namespace lbsf::nn
