#include <algorithm>
#include <cmath>
#include <vector>

#include "earlycast/kernels.hpp"

namespace earlycast::kernels {

void lstm_forward(const LstmDims& dims, const double* x, const double* h_prev, const double* c_prev,
                  const double* w, const double* u, const double* b, const double* rec_mask,
                  double* gates, double* c_new, double* tanh_c, double* h_new) {
  const std::size_t n = dims.batch;
  const std::size_t hid = dims.hidden;
  const std::size_t g4 = 4 * hid;

  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < g4; ++j) gates[r * g4 + j] = b[j];
  gemm_acc(n, g4, dims.input, x, dims.input, w, g4, gates, g4);

  if (rec_mask == nullptr) {
    gemm_acc(n, g4, hid, h_prev, hid, u, g4, gates, g4);
  } else {
    std::vector<double> masked(n * hid);
    for (std::size_t g = 0; g < 4; ++g) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < hid; ++j)
          masked[r * hid + j] = h_prev[r * hid + j] * rec_mask[r * g4 + g * hid + j];
      gemm_acc(n, hid, hid, masked.data(), hid, u + g * hid, g4, gates + g * hid, g4);
    }
  }

  for (std::size_t r = 0; r < n; ++r) {
    double* z = gates + r * g4;
    for (std::size_t j = 0; j < hid; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[hid + j]);
      const double cand = std::tanh(z[2 * hid + j]);
      const double og = sigmoid(z[3 * hid + j]);
      z[j] = ig;
      z[hid + j] = fg;
      z[2 * hid + j] = cand;
      z[3 * hid + j] = og;
      const double c = fg * c_prev[r * hid + j] + ig * cand;
      const double tc = std::tanh(c);
      c_new[r * hid + j] = c;
      tanh_c[r * hid + j] = tc;
      h_new[r * hid + j] = og * tc;
    }
  }
}

void lstm_backward(const LstmDims& dims, const double* x, const double* h_prev, const double* c_prev,
                   const double* w, const double* u, const double* rec_mask, const double* gates,
                   const double* tanh_c, const double* d_h, const double* d_c, double* d_x,
                   double* d_h_prev, double* d_c_prev, double* d_w, double* d_u, double* d_b) {
  const std::size_t n = dims.batch;
  const std::size_t hid = dims.hidden;
  const std::size_t g4 = 4 * hid;

  // Pre-activation gradients.
  std::vector<double> dz(n * g4);
  for (std::size_t r = 0; r < n; ++r) {
    const double* gt = gates + r * g4;
    double* dzr = dz.data() + r * g4;
    for (std::size_t j = 0; j < hid; ++j) {
      const std::size_t e = r * hid + j;
      const double ig = gt[j];
      const double fg = gt[hid + j];
      const double cand = gt[2 * hid + j];
      const double og = gt[3 * hid + j];
      const double tc = tanh_c[e];
      const double dh = d_h ? d_h[e] : 0.0;
      const double dc = (d_c ? d_c[e] : 0.0) + dh * og * (1.0 - tc * tc);
      dzr[j] = dc * cand * ig * (1.0 - ig);
      dzr[hid + j] = dc * c_prev[e] * fg * (1.0 - fg);
      dzr[2 * hid + j] = dc * ig * (1.0 - cand * cand);
      dzr[3 * hid + j] = dh * tc * og * (1.0 - og);
      if (d_c_prev) d_c_prev[e] += dc * fg;
    }
  }

  if (d_b) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < g4; ++j) d_b[j] += dz[r * g4 + j];
  }
  if (d_w) gemm_tn_acc(dims.input, g4, n, x, dims.input, dz.data(), g4, d_w, g4);
  if (d_x) gemm_nt_acc(n, dims.input, g4, dz.data(), g4, w, g4, d_x, dims.input);

  if (rec_mask == nullptr) {
    if (d_u) gemm_tn_acc(hid, g4, n, h_prev, hid, dz.data(), g4, d_u, g4);
    if (d_h_prev) gemm_nt_acc(n, hid, g4, dz.data(), g4, u, g4, d_h_prev, hid);
    return;
  }

  std::vector<double> masked(n * hid);
  std::vector<double> d_masked(n * hid);
  for (std::size_t g = 0; g < 4; ++g) {
    if (d_u) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < hid; ++j)
          masked[r * hid + j] = h_prev[r * hid + j] * rec_mask[r * g4 + g * hid + j];
      gemm_tn_acc(hid, hid, n, masked.data(), hid, dz.data() + g * hid, g4, d_u + g * hid, g4);
    }
    if (d_h_prev) {
      std::fill(d_masked.begin(), d_masked.end(), 0.0);
      gemm_nt_acc(n, hid, hid, dz.data() + g * hid, g4, u + g * hid, g4, d_masked.data(), hid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < hid; ++j)
          d_h_prev[r * hid + j] += d_masked[r * hid + j] * rec_mask[r * g4 + g * hid + j];
    }
  }
}

}  // namespace earlycast::kernels
