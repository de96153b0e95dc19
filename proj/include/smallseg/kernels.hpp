#pragma once

#include "smallseg/tensor.hpp"

// Numeric kernels used by the autodiff layer. Each kernel exists twice:
// kern::ref holds plain serial loops kept as the reference implementation,
// kern::omp holds the OpenMP versions used in production. The top-level
// kern:: entry points dispatch on a global switch. Both sides accumulate
// per output element in the same order, so results are bit-identical and
// the test suite can compare them exactly.

namespace smallseg::kern {

bool parallel_enabled();
void set_parallel(bool on);
int thread_count();

#define SMALLSEG_KERNEL_DECLS                                                             \
  /* y(R,N) = x(R,K) @ W(K,N) + b(N); b may be null */                                    \
  void linear_fw(const double* x, const double* W, const double* b, double* y, i64 R,    \
                 i64 K, i64 N);                                                           \
  void linear_bw_x(const double* dy, const double* W, double* dx, i64 R, i64 K, i64 N);  \
  void linear_bw_w(const double* x, const double* dy, double* dW, i64 R, i64 K, i64 N);  \
  void linear_bw_b(const double* dy, double* db, i64 R, i64 N);                          \
                                                                                          \
  /* layer norm over the last dim of x(R,C); saves per-row mean and 1/std */             \
  void layernorm_fw(const double* x, const double* gamma, const double* beta, double* y, \
                    double* mean, double* rstd, i64 R, i64 C, double eps);                \
  void layernorm_bw(const double* x, const double* gamma, const double* dy,              \
                    const double* mean, const double* rstd, double* dx, double* dgamma,  \
                    double* dbeta, i64 R, i64 C);                                         \
                                                                                          \
  /* batch norm over rows of x(R,F); training uses batch stats written to bmean/bvar */  \
  void batchnorm_fw(const double* x, const double* gamma, const double* beta,            \
                    const double* est_mean, const double* est_var, bool training,        \
                    double* bmean, double* bvar, double* y, i64 R, i64 F, double eps);    \
  void batchnorm_bw(const double* x, const double* gamma, const double* dy,              \
                    const double* mean, const double* var, bool training, double* dx,    \
                    double* dgamma, double* dbeta, i64 R, i64 F, double eps);             \
                                                                                          \
  /* conv2d NHWC, stride 1, zero padding, square kernel k */                              \
  void conv2d_fw(const double* x, const double* w, const double* b, double* y, i64 B,    \
                 i64 H, i64 W, i64 Ci, i64 Co, i64 k, i64 pad);                           \
  void conv2d_bw_x(const double* dy, const double* w, double* dx, i64 B, i64 H, i64 W,   \
                   i64 Ci, i64 Co, i64 k, i64 pad);                                       \
  void conv2d_bw_w(const double* x, const double* dy, double* dw, i64 B, i64 H, i64 W,   \
                   i64 Ci, i64 Co, i64 k, i64 pad);                                       \
  void conv2d_bw_b(const double* dy, double* db, i64 B, i64 H, i64 W, i64 Co);           \
                                                                                          \
  /* selective state-space scan over x(B,L,C), state size N:                             \
       h_t = exp(delta_t * A) h_{t-1} + delta_t * Bs_t * x_t                             \
       y_t = <Cs_t, h_t> + D * x_t                                                       \
     delta(B,L,C) is already positive (softplus applied upstream),                       \
     Bs,Cs(B,L,N) are shared across channels, A(C,N), D(C). */                           \
  void scan_fw(const double* x, const double* delta, const double* Bs, const double* Cs, \
               const double* A, const double* D, double* y, i64 B, i64 L, i64 C, i64 N);  \
  void scan_bw(const double* x, const double* delta, const double* Bs, const double* Cs, \
               const double* A, const double* D, const double* gy, double* gx,           \
               double* gdelta, double* gBs, double* gCs, double* gA, double* gD, i64 B,  \
               i64 L, i64 C, i64 N);                                                      \
                                                                                          \
  /* patch-tensor contraction out(b,p,c,e) = sum_j O(b,p,j,c) I(b,p,j) E(b,p,j,e) */     \
  void base_tensor_fw(const double* O, const double* I, const double* E, double* out,    \
                      i64 B, i64 P, i64 J, i64 C, i64 Eh);                                \
  void base_tensor_bw(const double* O, const double* I, const double* E,                 \
                      const double* gout, double* gO, double* gI, double* gE, i64 B,     \
                      i64 P, i64 J, i64 C, i64 Eh);                                       \
                                                                                          \
  /* per-sample segmentation loss: 0.5*CE + 0.5*(1 - mean soft dice over classes >=1).   \
     logits(B,HW,K), gt(B,HW) int class ids; loss/ce/dice are (B). */                    \
  void seg_loss_fw(const double* logits, const int* gt, double* loss, double* ce,        \
                   double* dice, i64 B, i64 HW, i64 K, double eps);                       \
  void seg_loss_bw(const double* logits, const int* gt, const double* gloss,             \
                   double* dlogits, i64 B, i64 HW, i64 K, double eps);

SMALLSEG_KERNEL_DECLS

namespace ref {
SMALLSEG_KERNEL_DECLS
}

namespace omp {
SMALLSEG_KERNEL_DECLS
}

#undef SMALLSEG_KERNEL_DECLS

}  // namespace smallseg::kern
