#include "smallseg/kernels.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

// Serial reference kernels. Kept deliberately simple; the OpenMP versions in
// kernels_omp.cpp must reproduce these bit-for-bit (same per-output
// accumulation order), which the kernel tests check on random inputs.
//
// All backward kernels accumulate (+=) into their gradient outputs.

namespace smallseg::kern::ref {

void linear_fw(const double* x, const double* W, const double* b, double* y, i64 R, i64 K,
               i64 N) {
  for (i64 r = 0; r < R; ++r) {
    const double* xr = x + r * K;
    double* yr = y + r * N;
    for (i64 n = 0; n < N; ++n) yr[n] = b ? b[n] : 0.0;
    for (i64 k = 0; k < K; ++k) {
      const double xv = xr[k];
      const double* wk = W + k * N;
      for (i64 n = 0; n < N; ++n) yr[n] += xv * wk[n];
    }
  }
}

void linear_bw_x(const double* dy, const double* W, double* dx, i64 R, i64 K, i64 N) {
  for (i64 r = 0; r < R; ++r) {
    const double* dyr = dy + r * N;
    double* dxr = dx + r * K;
    for (i64 k = 0; k < K; ++k) {
      const double* wk = W + k * N;
      double acc = 0.0;
      for (i64 n = 0; n < N; ++n) acc += dyr[n] * wk[n];
      dxr[k] += acc;
    }
  }
}

void linear_bw_w(const double* x, const double* dy, double* dW, i64 R, i64 K, i64 N) {
  for (i64 k = 0; k < K; ++k) {
    double* dwk = dW + k * N;
    for (i64 n = 0; n < N; ++n) {
      double acc = 0.0;
      for (i64 r = 0; r < R; ++r) acc += x[r * K + k] * dy[r * N + n];
      dwk[n] += acc;
    }
  }
}

void linear_bw_b(const double* dy, double* db, i64 R, i64 N) {
  for (i64 n = 0; n < N; ++n) {
    double acc = 0.0;
    for (i64 r = 0; r < R; ++r) acc += dy[r * N + n];
    db[n] += acc;
  }
}

void layernorm_fw(const double* x, const double* gamma, const double* beta, double* y,
                  double* mean, double* rstd, i64 R, i64 C, double eps) {
  for (i64 r = 0; r < R; ++r) {
    const double* xr = x + r * C;
    double m = 0.0;
    for (i64 c = 0; c < C; ++c) m += xr[c];
    m /= static_cast<double>(C);
    double v = 0.0;
    for (i64 c = 0; c < C; ++c) {
      const double d = xr[c] - m;
      v += d * d;
    }
    v /= static_cast<double>(C);
    const double rs = 1.0 / std::sqrt(v + eps);
    mean[r] = m;
    rstd[r] = rs;
    double* yr = y + r * C;
    for (i64 c = 0; c < C; ++c) yr[c] = (xr[c] - m) * rs * gamma[c] + beta[c];
  }
}

void layernorm_bw(const double* x, const double* gamma, const double* dy, const double* mean,
                  const double* rstd, double* dx, double* dgamma, double* dbeta, i64 R,
                  i64 C) {
  for (i64 r = 0; r < R; ++r) {
    const double* xr = x + r * C;
    const double* dyr = dy + r * C;
    const double m = mean[r];
    const double rs = rstd[r];
    double sum_g = 0.0, sum_gx = 0.0;
    for (i64 c = 0; c < C; ++c) {
      const double xhat = (xr[c] - m) * rs;
      const double g = dyr[c] * gamma[c];
      sum_g += g;
      sum_gx += g * xhat;
    }
    const double inv_c = 1.0 / static_cast<double>(C);
    double* dxr = dx + r * C;
    for (i64 c = 0; c < C; ++c) {
      const double xhat = (xr[c] - m) * rs;
      const double g = dyr[c] * gamma[c];
      dxr[c] += rs * (g - inv_c * sum_g - xhat * inv_c * sum_gx);
    }
  }
  for (i64 c = 0; c < C; ++c) {
    double dg = 0.0, db = 0.0;
    for (i64 r = 0; r < R; ++r) {
      const double xhat = (x[r * C + c] - mean[r]) * rstd[r];
      dg += dy[r * C + c] * xhat;
      db += dy[r * C + c];
    }
    dgamma[c] += dg;
    dbeta[c] += db;
  }
}

void batchnorm_fw(const double* x, const double* gamma, const double* beta,
                  const double* est_mean, const double* est_var, bool training, double* bmean,
                  double* bvar, double* y, i64 R, i64 F, double eps) {
  for (i64 f = 0; f < F; ++f) {
    double m, v;
    if (training) {
      m = 0.0;
      for (i64 r = 0; r < R; ++r) m += x[r * F + f];
      m /= static_cast<double>(R);
      v = 0.0;
      for (i64 r = 0; r < R; ++r) {
        const double d = x[r * F + f] - m;
        v += d * d;
      }
      v /= static_cast<double>(R);
      bmean[f] = m;
      bvar[f] = v;
    } else {
      m = est_mean[f];
      v = est_var[f];
    }
    const double rs = 1.0 / std::sqrt(v + eps);
    for (i64 r = 0; r < R; ++r)
      y[r * F + f] = (x[r * F + f] - m) * rs * gamma[f] + beta[f];
  }
}

void batchnorm_bw(const double* x, const double* gamma, const double* dy, const double* mean,
                  const double* var, bool training, double* dx, double* dgamma, double* dbeta,
                  i64 R, i64 F, double eps) {
  for (i64 f = 0; f < F; ++f) {
    const double m = mean[f];
    const double rs = 1.0 / std::sqrt(var[f] + eps);
    double sum_dy = 0.0, sum_dyx = 0.0;
    for (i64 r = 0; r < R; ++r) {
      const double xhat = (x[r * F + f] - m) * rs;
      sum_dy += dy[r * F + f];
      sum_dyx += dy[r * F + f] * xhat;
    }
    dgamma[f] += sum_dyx;
    dbeta[f] += sum_dy;
    if (training) {
      const double inv_r = 1.0 / static_cast<double>(R);
      for (i64 r = 0; r < R; ++r) {
        const double xhat = (x[r * F + f] - m) * rs;
        dx[r * F + f] +=
            gamma[f] * rs * (dy[r * F + f] - inv_r * sum_dy - xhat * inv_r * sum_dyx);
      }
    } else {
      for (i64 r = 0; r < R; ++r) dx[r * F + f] += gamma[f] * rs * dy[r * F + f];
    }
  }
}

void conv2d_fw(const double* x, const double* w, const double* b, double* y, i64 B, i64 H,
               i64 W, i64 Ci, i64 Co, i64 k, i64 pad) {
  for (i64 bi = 0; bi < B; ++bi) {
    for (i64 oh = 0; oh < H; ++oh) {
      for (i64 ow = 0; ow < W; ++ow) {
        double* yo = y + ((bi * H + oh) * W + ow) * Co;
        for (i64 co = 0; co < Co; ++co) yo[co] = b ? b[co] : 0.0;
        for (i64 kh = 0; kh < k; ++kh) {
          const i64 ih = oh - pad + kh;
          if (ih < 0 || ih >= H) continue;
          for (i64 kw = 0; kw < k; ++kw) {
            const i64 iw = ow - pad + kw;
            if (iw < 0 || iw >= W) continue;
            const double* xi = x + ((bi * H + ih) * W + iw) * Ci;
            const double* wk = w + (kh * k + kw) * Ci * Co;
            for (i64 ci = 0; ci < Ci; ++ci) {
              const double xv = xi[ci];
              const double* wc = wk + ci * Co;
              for (i64 co = 0; co < Co; ++co) yo[co] += xv * wc[co];
            }
          }
        }
      }
    }
  }
}

void conv2d_bw_x(const double* dy, const double* w, double* dx, i64 B, i64 H, i64 W, i64 Ci,
                 i64 Co, i64 k, i64 pad) {
  for (i64 bi = 0; bi < B; ++bi) {
    for (i64 ih = 0; ih < H; ++ih) {
      for (i64 iw = 0; iw < W; ++iw) {
        double* dxi = dx + ((bi * H + ih) * W + iw) * Ci;
        for (i64 kh = 0; kh < k; ++kh) {
          const i64 oh = ih + pad - kh;
          if (oh < 0 || oh >= H) continue;
          for (i64 kw = 0; kw < k; ++kw) {
            const i64 ow = iw + pad - kw;
            if (ow < 0 || ow >= W) continue;
            const double* dyo = dy + ((bi * H + oh) * W + ow) * Co;
            const double* wk = w + (kh * k + kw) * Ci * Co;
            for (i64 ci = 0; ci < Ci; ++ci) {
              const double* wc = wk + ci * Co;
              double acc = 0.0;
              for (i64 co = 0; co < Co; ++co) acc += dyo[co] * wc[co];
              dxi[ci] += acc;
            }
          }
        }
      }
    }
  }
}

void conv2d_bw_w(const double* x, const double* dy, double* dw, i64 B, i64 H, i64 W, i64 Ci,
                 i64 Co, i64 k, i64 pad) {
  for (i64 kh = 0; kh < k; ++kh) {
    for (i64 kw = 0; kw < k; ++kw) {
      for (i64 ci = 0; ci < Ci; ++ci) {
        for (i64 co = 0; co < Co; ++co) {
          double acc = 0.0;
          for (i64 bi = 0; bi < B; ++bi) {
            for (i64 oh = 0; oh < H; ++oh) {
              const i64 ih = oh - pad + kh;
              if (ih < 0 || ih >= H) continue;
              for (i64 ow = 0; ow < W; ++ow) {
                const i64 iw = ow - pad + kw;
                if (iw < 0 || iw >= W) continue;
                acc += x[((bi * H + ih) * W + iw) * Ci + ci] *
                       dy[((bi * H + oh) * W + ow) * Co + co];
              }
            }
          }
          dw[((kh * k + kw) * Ci + ci) * Co + co] += acc;
        }
      }
    }
  }
}

void conv2d_bw_b(const double* dy, double* db, i64 B, i64 H, i64 W, i64 Co) {
  for (i64 co = 0; co < Co; ++co) {
    double acc = 0.0;
    for (i64 i = 0; i < B * H * W; ++i) acc += dy[i * Co + co];
    db[co] += acc;
  }
}

namespace {
constexpr i64 kMaxState = 32;
}

void scan_fw(const double* x, const double* delta, const double* Bs, const double* Cs,
             const double* A, const double* D, double* y, i64 B, i64 L, i64 C, i64 N) {
  if (N > kMaxState) throw std::invalid_argument("scan_fw: state size too large");
  for (i64 b = 0; b < B; ++b) {
    for (i64 c = 0; c < C; ++c) {
      std::array<double, kMaxState> h{};
      const double* Ac = A + c * N;
      for (i64 t = 0; t < L; ++t) {
        const i64 tc = (b * L + t) * C + c;
        const double dt = delta[tc];
        const double xv = x[tc];
        const double* bs = Bs + (b * L + t) * N;
        const double* cs = Cs + (b * L + t) * N;
        double out = D[c] * xv;
        for (i64 n = 0; n < N; ++n) {
          h[n] = std::exp(dt * Ac[n]) * h[n] + dt * bs[n] * xv;
          out += cs[n] * h[n];
        }
        y[tc] = out;
      }
    }
  }
}

// The backward pass recomputes the state trajectory for each (b, c) chain into
// a scratch buffer, then runs the adjoint recurrence in reverse. Gradients for
// the shared A and D are accumulated per batch entry first and reduced in
// fixed order so the OpenMP version can match bit-for-bit.
void scan_bw(const double* x, const double* delta, const double* Bs, const double* Cs,
             const double* A, const double* D, const double* gy, double* gx, double* gdelta,
             double* gBs, double* gCs, double* gA, double* gD, i64 B, i64 L, i64 C, i64 N) {
  if (N > kMaxState) throw std::invalid_argument("scan_bw: state size too large");
  std::vector<double> gA_part(static_cast<size_t>(B * C * N), 0.0);
  std::vector<double> gD_part(static_cast<size_t>(B * C), 0.0);
  std::vector<double> hist(static_cast<size_t>(L * N));
  for (i64 b = 0; b < B; ++b) {
    double* gAp = gA_part.data() + b * C * N;
    double* gDp = gD_part.data() + b * C;
    for (i64 c = 0; c < C; ++c) {
      const double* Ac = A + c * N;
      // recompute states
      std::array<double, kMaxState> h{};
      for (i64 t = 0; t < L; ++t) {
        const i64 tc = (b * L + t) * C + c;
        const double dt = delta[tc];
        const double xv = x[tc];
        const double* bs = Bs + (b * L + t) * N;
        for (i64 n = 0; n < N; ++n) {
          h[n] = std::exp(dt * Ac[n]) * h[n] + dt * bs[n] * xv;
          hist[t * N + n] = h[n];
        }
      }
      // adjoint sweep
      std::array<double, kMaxState> gh{};
      for (i64 t = L - 1; t >= 0; --t) {
        const i64 tc = (b * L + t) * C + c;
        const double dt = delta[tc];
        const double xv = x[tc];
        const double g = gy[tc];
        const double* bs = Bs + (b * L + t) * N;
        const double* cs = Cs + (b * L + t) * N;
        double* gbs = gBs + (b * L + t) * N;
        double* gcs = gCs + (b * L + t) * N;
        gDp[c] += g * xv;
        double gxv = D[c] * g;
        double gdt = 0.0;
        for (i64 n = 0; n < N; ++n) {
          gh[n] += cs[n] * g;
          gcs[n] += hist[t * N + n] * g;
          const double abar = std::exp(dt * Ac[n]);
          const double hprev = t > 0 ? hist[(t - 1) * N + n] : 0.0;
          gdt += gh[n] * (abar * Ac[n] * hprev + bs[n] * xv);
          gAp[c * N + n] += gh[n] * abar * dt * hprev;
          gbs[n] += gh[n] * dt * xv;
          gxv += gh[n] * dt * bs[n];
          gh[n] *= abar;
        }
        gx[tc] += gxv;
        gdelta[tc] += gdt;
      }
    }
  }
  for (i64 c = 0; c < C; ++c) {
    for (i64 n = 0; n < N; ++n) {
      double acc = 0.0;
      for (i64 b = 0; b < B; ++b) acc += gA_part[(b * C + c) * N + n];
      gA[c * N + n] += acc;
    }
    double accd = 0.0;
    for (i64 b = 0; b < B; ++b) accd += gD_part[b * C + c];
    gD[c] += accd;
  }
}

void base_tensor_fw(const double* O, const double* I, const double* E, double* out, i64 B,
                    i64 P, i64 J, i64 C, i64 Eh) {
  for (i64 b = 0; b < B; ++b) {
    for (i64 p = 0; p < P; ++p) {
      const i64 bp = b * P + p;
      double* o = out + bp * C * Eh;
      for (i64 i = 0; i < C * Eh; ++i) o[i] = 0.0;
      for (i64 j = 0; j < J; ++j) {
        const double iv = I[bp * J + j];
        const double* ov = O + (bp * J + j) * C;
        const double* ev = E + (bp * J + j) * Eh;
        for (i64 c = 0; c < C; ++c) {
          const double oi = ov[c] * iv;
          double* oc = o + c * Eh;
          for (i64 e = 0; e < Eh; ++e) oc[e] += oi * ev[e];
        }
      }
    }
  }
}

void base_tensor_bw(const double* O, const double* I, const double* E, const double* gout,
                    double* gO, double* gI, double* gE, i64 B, i64 P, i64 J, i64 C, i64 Eh) {
  for (i64 b = 0; b < B; ++b) {
    for (i64 p = 0; p < P; ++p) {
      const i64 bp = b * P + p;
      const double* go = gout + bp * C * Eh;
      for (i64 j = 0; j < J; ++j) {
        const double iv = I[bp * J + j];
        const double* ov = O + (bp * J + j) * C;
        const double* ev = E + (bp * J + j) * Eh;
        double* gov = gO + (bp * J + j) * C;
        double* gev = gE + (bp * J + j) * Eh;
        double gi = 0.0;
        for (i64 c = 0; c < C; ++c) {
          const double* gc = go + c * Eh;
          double dot_ge = 0.0;
          for (i64 e = 0; e < Eh; ++e) dot_ge += gc[e] * ev[e];
          gov[c] += dot_ge * iv;
          gi += dot_ge * ov[c];
        }
        gI[bp * J + j] += gi;
        for (i64 e = 0; e < Eh; ++e) {
          double acc = 0.0;
          for (i64 c = 0; c < C; ++c) acc += go[c * Eh + e] * ov[c] * iv;
          gev[e] += acc;
        }
      }
    }
  }
}

namespace {

// Per-sample loss shared by fw and bw. Writes softmax probabilities for one
// pixel into p (K entries).
inline void pixel_softmax(const double* z, double* p, i64 K) {
  double m = z[0];
  for (i64 k = 1; k < K; ++k) m = std::max(m, z[k]);
  double s = 0.0;
  for (i64 k = 0; k < K; ++k) {
    p[k] = std::exp(z[k] - m);
    s += p[k];
  }
  const double inv = 1.0 / s;
  for (i64 k = 0; k < K; ++k) p[k] *= inv;
}

}  // namespace

void seg_loss_fw(const double* logits, const int* gt, double* loss, double* ce, double* dice,
                 i64 B, i64 HW, i64 K, double eps) {
  std::vector<double> p(static_cast<size_t>(K));
  std::vector<double> U(static_cast<size_t>(K)), S(static_cast<size_t>(K)),
      G(static_cast<size_t>(K));
  for (i64 b = 0; b < B; ++b) {
    std::fill(U.begin(), U.end(), 0.0);
    std::fill(S.begin(), S.end(), 0.0);
    std::fill(G.begin(), G.end(), 0.0);
    double ce_sum = 0.0;
    for (i64 i = 0; i < HW; ++i) {
      const double* z = logits + (b * HW + i) * K;
      pixel_softmax(z, p.data(), K);
      const int g = gt[b * HW + i];
      ce_sum -= std::log(std::max(p[g], 1e-300));
      for (i64 k = 0; k < K; ++k) S[k] += p[k];
      U[g] += p[g];
      G[g] += 1.0;
    }
    double dice_mean = 0.0;
    for (i64 k = 1; k < K; ++k)
      dice_mean += (2.0 * U[k] + eps) / (S[k] + G[k] + eps);
    dice_mean /= static_cast<double>(K - 1);
    const double ce_b = ce_sum / static_cast<double>(HW);
    const double dice_term = 1.0 - dice_mean;
    ce[b] = ce_b;
    dice[b] = dice_term;
    loss[b] = 0.5 * ce_b + 0.5 * dice_term;
  }
}

void seg_loss_bw(const double* logits, const int* gt, const double* gloss, double* dlogits,
                 i64 B, i64 HW, i64 K, double eps) {
  std::vector<double> p(static_cast<size_t>(K)), dlp(static_cast<size_t>(K));
  std::vector<double> U(static_cast<size_t>(K)), S(static_cast<size_t>(K)),
      G(static_cast<size_t>(K));
  std::vector<double> dU(static_cast<size_t>(K)), dS(static_cast<size_t>(K));
  for (i64 b = 0; b < B; ++b) {
    std::fill(U.begin(), U.end(), 0.0);
    std::fill(S.begin(), S.end(), 0.0);
    std::fill(G.begin(), G.end(), 0.0);
    for (i64 i = 0; i < HW; ++i) {
      const double* z = logits + (b * HW + i) * K;
      pixel_softmax(z, p.data(), K);
      const int g = gt[b * HW + i];
      for (i64 k = 0; k < K; ++k) S[k] += p[k];
      U[g] += p[g];
      G[g] += 1.0;
    }
    // d(loss)/d(dice_k sums): loss has -0.5/(K-1) * dice_k
    const double w = -0.5 / static_cast<double>(K - 1);
    for (i64 k = 1; k < K; ++k) {
      const double denom = S[k] + G[k] + eps;
      dU[k] = w * 2.0 / denom;
      dS[k] = w * (-(2.0 * U[k] + eps) / (denom * denom));
    }
    const double gl = gloss[b];
    const double inv_hw = 1.0 / static_cast<double>(HW);
    for (i64 i = 0; i < HW; ++i) {
      const double* z = logits + (b * HW + i) * K;
      pixel_softmax(z, p.data(), K);
      const int g = gt[b * HW + i];
      // gradient w.r.t. probabilities from the dice part
      double dot = 0.0;
      for (i64 k = 0; k < K; ++k) {
        double d = 0.0;
        if (k >= 1) {
          d = dS[k];
          if (k == g) d += dU[k];
        }
        dlp[k] = d;
        dot += d * p[k];
      }
      double* dz = dlogits + (b * HW + i) * K;
      for (i64 k = 0; k < K; ++k) {
        double grad = p[k] * (dlp[k] - dot);                       // dice part via softmax
        grad += 0.5 * inv_hw * (p[k] - (k == g ? 1.0 : 0.0));      // cross entropy part
        dz[k] += gl * grad;
      }
    }
  }
}

}  // namespace smallseg::kern::ref
