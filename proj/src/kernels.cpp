#include "smallseg/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace smallseg::kern {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int thread_count() {
#ifdef _OPENMP
  return parallel_enabled() ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

#define SMALLSEG_DISPATCH(fn, ...)            \
  do {                                        \
    if (parallel_enabled())                   \
      omp::fn(__VA_ARGS__);                   \
    else                                      \
      ref::fn(__VA_ARGS__);                   \
  } while (0)

void linear_fw(const double* x, const double* W, const double* b, double* y, i64 R, i64 K,
               i64 N) {
  SMALLSEG_DISPATCH(linear_fw, x, W, b, y, R, K, N);
}
void linear_bw_x(const double* dy, const double* W, double* dx, i64 R, i64 K, i64 N) {
  SMALLSEG_DISPATCH(linear_bw_x, dy, W, dx, R, K, N);
}
void linear_bw_w(const double* x, const double* dy, double* dW, i64 R, i64 K, i64 N) {
  SMALLSEG_DISPATCH(linear_bw_w, x, dy, dW, R, K, N);
}
void linear_bw_b(const double* dy, double* db, i64 R, i64 N) {
  SMALLSEG_DISPATCH(linear_bw_b, dy, db, R, N);
}

void layernorm_fw(const double* x, const double* gamma, const double* beta, double* y,
                  double* mean, double* rstd, i64 R, i64 C, double eps) {
  SMALLSEG_DISPATCH(layernorm_fw, x, gamma, beta, y, mean, rstd, R, C, eps);
}
void layernorm_bw(const double* x, const double* gamma, const double* dy, const double* mean,
                  const double* rstd, double* dx, double* dgamma, double* dbeta, i64 R,
                  i64 C) {
  SMALLSEG_DISPATCH(layernorm_bw, x, gamma, dy, mean, rstd, dx, dgamma, dbeta, R, C);
}

void batchnorm_fw(const double* x, const double* gamma, const double* beta,
                  const double* est_mean, const double* est_var, bool training, double* bmean,
                  double* bvar, double* y, i64 R, i64 F, double eps) {
  SMALLSEG_DISPATCH(batchnorm_fw, x, gamma, beta, est_mean, est_var, training, bmean, bvar, y,
                    R, F, eps);
}
void batchnorm_bw(const double* x, const double* gamma, const double* dy, const double* mean,
                  const double* var, bool training, double* dx, double* dgamma, double* dbeta,
                  i64 R, i64 F, double eps) {
  SMALLSEG_DISPATCH(batchnorm_bw, x, gamma, dy, mean, var, training, dx, dgamma, dbeta, R, F,
                    eps);
}

void conv2d_fw(const double* x, const double* w, const double* b, double* y, i64 B, i64 H,
               i64 W, i64 Ci, i64 Co, i64 k, i64 pad) {
  SMALLSEG_DISPATCH(conv2d_fw, x, w, b, y, B, H, W, Ci, Co, k, pad);
}
void conv2d_bw_x(const double* dy, const double* w, double* dx, i64 B, i64 H, i64 W, i64 Ci,
                 i64 Co, i64 k, i64 pad) {
  SMALLSEG_DISPATCH(conv2d_bw_x, dy, w, dx, B, H, W, Ci, Co, k, pad);
}
void conv2d_bw_w(const double* x, const double* dy, double* dw, i64 B, i64 H, i64 W, i64 Ci,
                 i64 Co, i64 k, i64 pad) {
  SMALLSEG_DISPATCH(conv2d_bw_w, x, dy, dw, B, H, W, Ci, Co, k, pad);
}
void conv2d_bw_b(const double* dy, double* db, i64 B, i64 H, i64 W, i64 Co) {
  SMALLSEG_DISPATCH(conv2d_bw_b, dy, db, B, H, W, Co);
}

void scan_fw(const double* x, const double* delta, const double* Bs, const double* Cs,
             const double* A, const double* D, double* y, i64 B, i64 L, i64 C, i64 N) {
  SMALLSEG_DISPATCH(scan_fw, x, delta, Bs, Cs, A, D, y, B, L, C, N);
}
void scan_bw(const double* x, const double* delta, const double* Bs, const double* Cs,
             const double* A, const double* D, const double* gy, double* gx, double* gdelta,
             double* gBs, double* gCs, double* gA, double* gD, i64 B, i64 L, i64 C, i64 N) {
  SMALLSEG_DISPATCH(scan_bw, x, delta, Bs, Cs, A, D, gy, gx, gdelta, gBs, gCs, gA, gD, B, L, C,
                    N);
}

void base_tensor_fw(const double* O, const double* I, const double* E, double* out, i64 B,
                    i64 P, i64 J, i64 C, i64 Eh) {
  SMALLSEG_DISPATCH(base_tensor_fw, O, I, E, out, B, P, J, C, Eh);
}
void base_tensor_bw(const double* O, const double* I, const double* E, const double* gout,
                    double* gO, double* gI, double* gE, i64 B, i64 P, i64 J, i64 C, i64 Eh) {
  SMALLSEG_DISPATCH(base_tensor_bw, O, I, E, gout, gO, gI, gE, B, P, J, C, Eh);
}

void seg_loss_fw(const double* logits, const int* gt, double* loss, double* ce, double* dice,
                 i64 B, i64 HW, i64 K, double eps) {
  SMALLSEG_DISPATCH(seg_loss_fw, logits, gt, loss, ce, dice, B, HW, K, eps);
}
void seg_loss_bw(const double* logits, const int* gt, const double* gloss, double* dlogits,
                 i64 B, i64 HW, i64 K, double eps) {
  SMALLSEG_DISPATCH(seg_loss_bw, logits, gt, gloss, dlogits, B, HW, K, eps);
}

#undef SMALLSEG_DISPATCH

}  // namespace smallseg::kern
