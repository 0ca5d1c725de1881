#pragma once

// Row-major accumulate-into GEMM kernels. Loop orders keep the innermost loop
// contiguous so the compiler can vectorize without reassociating sums; the
// summation order is fixed, so results are reproducible bit-for-bit.

#include <cstddef>
#include <vector>

namespace ctgpt::detail {

/// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + (i + 0) * n;
    T* c1 = c + (i + 1) * n;
    T* c2 = c + (i + 2) * n;
    T* c3 = c + (i + 3) * n;
    const T* a0 = a + (i + 0) * k;
    const T* a1 = a + (i + 1) * k;
    const T* a2 = a + (i + 2) * k;
    const T* a3 = a + (i + 3) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      const T v = arow[p];
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

/// C[m,n] += A^T * B where A is stored [k,m] and B is [k,n].
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T v = arow[i];
      if (v == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

/// Returns the [cols, rows] transpose of a row-major [rows, cols] matrix.
template <typename T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

/// C[m,n] += A[m,k] * B^T where B is stored [n,k].
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  auto bt = transpose(b, n, k);
  gemm_nn(m, k, n, a, bt.data(), c);
}

}  // namespace ctgpt::detail
