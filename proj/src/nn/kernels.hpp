#pragma once

#include <cstddef>

// Row-major dense kernels. Every output element accumulates over the
// contracted dimension in ascending order, so a row's result does not depend
// on how many other rows share the call.

namespace lbsf::nn::kernels {

// C[n,m] += A[n,k] * B[k,m]
// Rows are processed four at a time to reuse each loaded row of B; every
// element still sees the same c += a * b sequence as the single-row path.
template <class Real>
inline void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t n, std::size_t k, std::size_t m) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        Real* __restrict c0 = c + i * m;
        Real* __restrict c1 = c0 + m;
        Real* __restrict c2 = c1 + m;
        Real* __restrict c3 = c2 + m;
        const Real* a0 = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const Real s0 = a0[p];
            const Real s1 = a0[k + p];
            const Real s2 = a0[2 * k + p];
            const Real s3 = a0[3 * k + p];
            const Real* __restrict bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                const Real bv = bp[j];
                c0[j] += s0 * bv;
                c1[j] += s1 * bv;
                c2[j] += s2 * bv;
                c3[j] += s3 * bv;
            }
        }
    }
    for (; i < n; ++i) {
        Real* __restrict ci = c + i * m;
        const Real* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const Real s = ai[p];
            const Real* __restrict bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                ci[j] += s * bp[j];
            }
        }
    }
}

// C[k,m] += A[n,k]^T * B[n,m], four rows of A/B per pass over C.
template <class Real>
inline void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t n, std::size_t k, std::size_t m) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const Real* a0 = a + i * k;
        const Real* __restrict b0 = b + i * m;
        const Real* __restrict b1 = b0 + m;
        const Real* __restrict b2 = b1 + m;
        const Real* __restrict b3 = b2 + m;
        for (std::size_t p = 0; p < k; ++p) {
            const Real s0 = a0[p];
            const Real s1 = a0[k + p];
            const Real s2 = a0[2 * k + p];
            const Real s3 = a0[3 * k + p];
            if (s0 == Real(0) && s1 == Real(0) && s2 == Real(0) && s3 == Real(0)) {
                continue;
            }
            Real* __restrict cp = c + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                cp[j] += (s0 * b0[j] + s1 * b1[j]) + (s2 * b2[j] + s3 * b3[j]);
            }
        }
    }
    for (; i < n; ++i) {
        const Real* ai = a + i * k;
        const Real* __restrict bi = b + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const Real s = ai[p];
            if (s == Real(0)) {
                continue;
            }
            Real* __restrict cp = c + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                cp[j] += s * bi[j];
            }
        }
    }
}

// out[cols, rows] = in[rows, cols]^T
template <class Real>
inline void transpose(const Real* in, Real* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out[j * rows + i] = in[i * cols + j];
        }
    }
}

template <class Real>
inline Real dot(const Real* a, const Real* b, std::size_t n) {
    Real s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// y[n] += s * x[n]
template <class Real>
inline void axpy(Real s, const Real* __restrict x, Real* __restrict y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += s * x[i];
    }
}

} // namespace lbsf::nn::kernels
