#pragma once

// Internal helpers shared by the primitive implementations.

#include <cstdint>
#include <string>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan::kernels {

Shape broadcast_shape(const Shape& a, const Shape& b);
// Strides of `in` viewed at the rank of `out`, zero on broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out);
void check_same_dtype(const Tensor& a, const Tensor& b, const char* op);

// Visits every index of `shape` in row-major order, passing the flat output
// offset and the offsets implied by two stride vectors.
template <typename F>
void for_each_broadcast(const Shape& shape, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F&& f) {
  const std::size_t rank = shape.size();
  const std::int64_t n = numel_of(shape);
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  const std::int64_t inner = shape[rank - 1];
  const std::int64_t ia_step = sa[rank - 1], ib_step = sb[rank - 1];
  for (std::int64_t o = 0; o < n; o += inner) {
    std::int64_t a = ia, b = ib;
    for (std::int64_t j = 0; j < inner; ++j, a += ia_step, b += ib_step) f(o + j, a, b);
    // advance the outer index odometer
    for (int d = static_cast<int>(rank) - 2; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < shape[d]) break;
      ia -= sa[d] * shape[d];
      ib -= sb[d] * shape[d];
      idx[d] = 0;
    }
  }
}

// C[M,N] (+)= A[M,K] · B[K,N], all row-major and contiguous.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) c[i] = T(0);
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] (+)= A[M,K] · B[N,K]^T.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

// C[M,N] (+)= A[K,M]^T · B[K,N].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) c[i] = T(0);
  for (std::int64_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace ascan::kernels
