#pragma once

#include <cstddef>
#include <vector>

namespace earlycast::kernels {

// Dense row-major kernels. Every output element is accumulated in ascending
// order of the reduction index starting from its prior value, whatever the
// number of rows, so a row's result does not depend on what else shares
// the batch.

/// C[M x N] += A[M x K] * B[K x N].
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// C[M x N] += A^T * B, where A is stored K x M.
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// C[M x N] += A * B^T, where B is stored N x K.
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// dst[cols x rows] = src[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* src, std::size_t ld_src, double* dst);

double sigmoid(double x);

/// Shapes of one batched LSTM cell evaluation.
struct LstmDims {
  std::size_t batch = 0;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

// LSTM cell with gate blocks ordered [input | forget | candidate | output].
// Weights: w is input x 4H, u is H x 4H, b is 4H. The optional recurrent mask
// is batch x 4H, one H-wide mask per gate block applied to h before u.
// `gates` receives post-activation gate values (batch x 4H).

void lstm_forward(const LstmDims& dims, const double* x, const double* h_prev, const double* c_prev,
                  const double* w, const double* u, const double* b, const double* rec_mask,
                  double* gates, double* c_new, double* tanh_c, double* h_new);

/// Gradient of the cell. Accumulates into every non-null output pointer.
void lstm_backward(const LstmDims& dims, const double* x, const double* h_prev, const double* c_prev,
                   const double* w, const double* u, const double* rec_mask, const double* gates,
                   const double* tanh_c, const double* d_h, const double* d_c, double* d_x,
                   double* d_h_prev, double* d_c_prev, double* d_w, double* d_u, double* d_b);

}  // namespace earlycast::kernels
