#include "earlycast/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace earlycast::kernels {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

using v8 = double __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof(v)); }

// Full register tile: acc starts from C and takes one product per k.
template <std::size_t R>
inline void tile(std::size_t j0, std::size_t k, const double* __restrict a, std::size_t lda,
                 const double* __restrict b, std::size_t ldb, double* __restrict c, std::size_t ldc) {
  v8 acc[R][2];
  for (std::size_t r = 0; r < R; ++r) {
    acc[r][0] = load8(c + r * ldc + j0);
    acc[r][1] = load8(c + r * ldc + j0 + 8);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v8 b0 = load8(b + p * ldb + j0);
    const v8 b1 = load8(b + p * ldb + j0 + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[r * lda + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    store8(c + r * ldc + j0, acc[r][0]);
    store8(c + r * ldc + j0 + 8, acc[r][1]);
  }
}

// Remainder columns [j0, n): the B panel and the C block are copied into
// zero-padded 16-wide buffers so the same register tile handles them.
template <std::size_t R>
inline void edge_tile(std::size_t n, std::size_t j0, std::size_t k, const double* a, std::size_t lda,
                      const double* packed_b, double* c, std::size_t ldc) {
  const std::size_t w = n - j0;
  double tmp[R * kTileCols] = {};
  for (std::size_t r = 0; r < R; ++r) std::memcpy(tmp + r * kTileCols, c + r * ldc + j0, w * sizeof(double));
  tile<R>(0, k, a, lda, packed_b, kTileCols, tmp, kTileCols);
  for (std::size_t r = 0; r < R; ++r) std::memcpy(c + r * ldc + j0, tmp + r * kTileCols, w * sizeof(double));
}

template <std::size_t R>
inline void row_block(std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, const double* packed_b, double* c, std::size_t ldc) {
  std::size_t j = 0;
  for (; j + kTileCols <= n; j += kTileCols) tile<R>(j, k, a, lda, b, ldb, c, ldc);
  if (j < n) edge_tile<R>(n, j, k, a, lda, packed_b, c, ldc);
}

// Reduction blocks keep the B panel cache resident. Blocks run in ascending
// order and C round-trips through memory between them, which leaves the
// per-element summation order unchanged.
constexpr std::size_t kDepthBlock = 256;

}  // namespace

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t j_edge = n - n % kTileCols;
  std::vector<double> packed;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t kb = std::min(kDepthBlock, k - p0);
    const double* bp = b + p0 * ldb;
    if (j_edge < n) {
      packed.assign(kb * kTileCols, 0.0);
      for (std::size_t p = 0; p < kb; ++p) std::memcpy(&packed[p * kTileCols], bp + p * ldb + j_edge, (n - j_edge) * sizeof(double));
    }
    std::size_t i = 0;
    for (; i + kTileRows <= m; i += kTileRows) {
      row_block<kTileRows>(n, kb, a + i * lda + p0, lda, bp, ldb, packed.data(), c + i * ldc, ldc);
    }
    for (; i < m; ++i) row_block<1>(n, kb, a + i * lda + p0, lda, bp, ldb, packed.data(), c + i * ldc, ldc);
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, std::size_t ld_src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * ld_src + c];
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::vector<double> at(m * k);
  transpose(k, m, a, lda, at.data());
  gemm_acc(m, n, k, at.data(), k, b, ldb, c, ldc);
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::vector<double> bt(k * n);
  transpose(n, k, b, ldb, bt.data());
  gemm_acc(m, n, k, a, lda, bt.data(), n, c, ldc);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace earlycast::kernels
