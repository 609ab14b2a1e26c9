#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lbsf::nn {

// Dense row-major array. Rank-2 is the working shape; row vectors are [1, d].
template <class Real>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, Real fill = Real(0));
    Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = Real(0)) {
        return Tensor({rows, cols}, fill);
    }

    const std::vector<std::size_t>& shape() const noexcept { return m_shape; }
    std::size_t rank() const noexcept { return m_shape.size(); }
    std::size_t size() const noexcept { return m_data.size(); }
    std::size_t rows() const noexcept { return m_shape.empty() ? 0 : m_shape[0]; }
    std::size_t cols() const noexcept { return m_shape.size() < 2 ? (m_shape.empty() ? 0 : 1) : m_data.size() / m_shape[0]; }

    Real* data() noexcept { return m_data.data(); }
    const Real* data() const noexcept { return m_data.data(); }
    std::span<Real> values() noexcept { return m_data; }
    std::span<const Real> values() const noexcept { return m_data; }
    std::span<Real> row(std::size_t i) noexcept { return {m_data.data() + i * cols(), cols()}; }
    std::span<const Real> row(std::size_t i) const noexcept { return {m_data.data() + i * cols(), cols()}; }

    Real& operator[](std::size_t i) noexcept { return m_data[i]; }
    Real operator[](std::size_t i) const noexcept { return m_data[i]; }
    Real& operator()(std::size_t r, std::size_t c) noexcept { return m_data[r * cols() + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return m_data[r * cols() + c]; }

    void fill(Real v);
    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return m_shape == other.m_shape; }

    template <class Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(m_data.begin(), m_data.end());
        return Tensor<Other>(m_shape, std::move(out));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> m_shape;
    std::vector<Real> m_data;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Max-shifted softmax along `axis`. Throws ContractError for an empty axis.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);

template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    bool trainable = true;
};

// Named parameter collection; insertion order is the canonical order used
// for serialization and gradient reduction.
template <class Real>
class ParameterStore {
public:
    std::size_t add(std::string name, Tensor<Real> value, bool trainable = true);

    std::size_t size() const noexcept { return m_params.size(); }
    Parameter<Real>& operator[](std::size_t i) { return m_params[i]; }
    const Parameter<Real>& operator[](std::size_t i) const { return m_params[i]; }
    auto begin() const { return m_params.begin(); }
    auto end() const { return m_params.end(); }
    auto begin() { return m_params.begin(); }
    auto end() { return m_params.end(); }

    bool contains(std::string_view name) const;
    // Throws ContractError naming the parameter when absent.
    std::size_t index_of(std::string_view name) const;
    std::size_t scalar_count() const;

    template <class Other>
    ParameterStore<Other> cast() const {
        ParameterStore<Other> out;
        for (const auto& p : m_params) {
            out.add(p.name, p.value.template cast<Other>(), p.trainable);
        }
        return out;
    }

private:
    std::vector<Parameter<Real>> m_params;
    std::unordered_map<std::string, std::size_t> m_index;
};

// Gradient accumulators shaped like a ParameterStore.
template <class Real>
class GradientBuffer {
public:
    GradientBuffer() = default;
    explicit GradientBuffer(const ParameterStore<Real>& params);

    void zero();
    void add(const GradientBuffer& other);
    std::size_t size() const noexcept { return m_grads.size(); }
    Tensor<Real>& operator[](std::size_t i) { return m_grads[i]; }
    const Tensor<Real>& operator[](std::size_t i) const { return m_grads[i]; }
    double global_norm() const;
    void scale(Real factor);

private:
    std::vector<Tensor<Real>> m_grads;
};

} // namespace lbsf::nn
