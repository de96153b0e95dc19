#include "smallseg/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "smallseg/kernels.hpp"

namespace smallseg::ag {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

i64 rows_for(const Tensor& t, i64 last) { return t.numel() / last; }

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(Graph& g, Var a, Var b) {
  require(g.val(a).same_shape(g.val(b)), "add: shape mismatch");
  Tensor out(g.val(a).shape());
  const double* pa = g.val(a).data();
  const double* pb = g.val(b).data();
  double* po = out.data();
  const i64 n = out.numel();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return g.make(std::move(out), {a, b}, [a, b](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    for (Var p : {a, b}) {
      if (!gr.wants(p)) continue;
      Tensor& gp = gr.grad(p);
      for (i64 i = 0; i < go.numel(); ++i) gp[i] += go[i];
    }
  });
}

Var sub(Graph& g, Var a, Var b) {
  require(g.val(a).same_shape(g.val(b)), "sub: shape mismatch");
  Tensor out(g.val(a).shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] - g.val(b)[i];
  return g.make(std::move(out), {a, b}, [a, b](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(a)) {
      Tensor& ga = gr.grad(a);
      for (i64 i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (gr.wants(b)) {
      Tensor& gb = gr.grad(b);
      for (i64 i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  require(g.val(a).same_shape(g.val(b)), "mul: shape mismatch");
  Tensor out(g.val(a).shape());
  const double* pa = g.val(a).data();
  const double* pb = g.val(b).data();
  double* po = out.data();
  const i64 n = out.numel();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  return g.make(std::move(out), {a, b}, [a, b](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(a)) {
      Tensor& ga = gr.grad(a);
      const Tensor& vb = gr.val(b);
      for (i64 i = 0; i < go.numel(); ++i) ga[i] += go[i] * vb[i];
    }
    if (gr.wants(b)) {
      Tensor& gb = gr.grad(b);
      const Tensor& va = gr.val(a);
      for (i64 i = 0; i < go.numel(); ++i) gb[i] += go[i] * va[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  Tensor out(g.val(a).shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] * s;
  return g.make(std::move(out), {a}, [a, s](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (!gr.wants(a)) return;
    Tensor& ga = gr.grad(a);
    for (i64 i = 0; i < go.numel(); ++i) ga[i] += go[i] * s;
  });
}

Var add_scalar(Graph& g, Var a, double c) {
  Tensor out(g.val(a).shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = g.val(a)[i] + c;
  return g.make(std::move(out), {a}, [a](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (!gr.wants(a)) return;
    Tensor& ga = gr.grad(a);
    for (i64 i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
}

Var add_many(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "add_many: empty");
  Tensor out = g.val(xs[0]);
  for (size_t k = 1; k < xs.size(); ++k) {
    require(g.val(xs[k]).same_shape(out), "add_many: shape mismatch");
    const double* p = g.val(xs[k]).data();
    for (i64 i = 0; i < out.numel(); ++i) out[i] += p[i];
  }
  std::vector<Var> parents = xs;
  return g.make(std::move(out), parents, [xs](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    for (Var p : xs) {
      if (!gr.wants(p)) continue;
      Tensor& gp = gr.grad(p);
      for (i64 i = 0; i < go.numel(); ++i) gp[i] += go[i];
    }
  });
}

Var sigmoid(Graph& g, Var x) {
  Tensor out(g.val(x).shape());
  const double* px = g.val(x).data();
  double* po = out.data();
  const i64 n = out.numel();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) po[i] = 1.0 / (1.0 + std::exp(-px[i]));
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    const Tensor& y = gr.val(self);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var relu(Graph& g, Var x) {
  Tensor out(g.val(x).shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = g.val(x)[i] > 0.0 ? g.val(x)[i] : 0.0;
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    const Tensor& vx = gr.val(x);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i)
      if (vx[i] > 0.0) gx[i] += go[i];
  });
}

Var softplus(Graph& g, Var x) {
  Tensor out(g.val(x).shape());
  const double* px = g.val(x).data();
  double* po = out.data();
  const i64 n = out.numel();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i)
    po[i] = px[i] > 30.0 ? px[i] : std::log1p(std::exp(px[i]));
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    const Tensor& vx = gr.val(x);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i)
      gx[i] += go[i] / (1.0 + std::exp(-vx[i]));
  });
}

Var neg_exp(Graph& g, Var x) {
  Tensor out(g.val(x).shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = -std::exp(g.val(x)[i]);
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    const Tensor& y = gr.val(self);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i) gx[i] += go[i] * y[i];
  });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

Var reshape(Graph& g, Var x, std::vector<i64> shape) {
  Tensor out = g.val(x).reshaped(std::move(shape));
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i) gx[i] += go[i];
  });
}

Var concat_last(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_last: empty");
  const Tensor& first = g.val(xs[0]);
  const i64 lead = rows_for(first, first.shape().back());
  i64 total = 0;
  std::vector<i64> widths;
  for (Var v : xs) {
    const Tensor& t = g.val(v);
    require(rows_for(t, t.shape().back()) == lead, "concat_last: leading dims mismatch");
    widths.push_back(t.shape().back());
    total += t.shape().back();
  }
  std::vector<i64> shape = first.shape();
  shape.back() = total;
  Tensor out(shape);
  i64 off = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const Tensor& t = g.val(xs[k]);
    const i64 w = widths[k];
    for (i64 r = 0; r < lead; ++r)
      for (i64 c = 0; c < w; ++c) out[r * total + off + c] = t[r * w + c];
    off += w;
  }
  std::vector<Var> parents = xs;
  return g.make(std::move(out), parents, [xs, widths, lead, total](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    i64 off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      const i64 w = widths[k];
      if (gr.wants(xs[k])) {
        Tensor& gx = gr.grad(xs[k]);
        for (i64 r = 0; r < lead; ++r)
          for (i64 c = 0; c < w; ++c) gx[r * w + c] += go[r * total + off + c];
      }
      off += w;
    }
  });
}

Var stack_last(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "stack_last: empty");
  const i64 n = g.val(xs[0]).numel();
  const i64 K = static_cast<i64>(xs.size());
  for (Var v : xs) require(g.val(v).numel() == n, "stack_last: size mismatch");
  std::vector<i64> shape = g.val(xs[0]).shape();
  shape.push_back(K);
  Tensor out(shape);
  for (i64 k = 0; k < K; ++k) {
    const Tensor& t = g.val(xs[static_cast<size_t>(k)]);
    for (i64 i = 0; i < n; ++i) out[i * K + k] = t[i];
  }
  std::vector<Var> parents = xs;
  return g.make(std::move(out), parents, [xs, n, K](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    for (i64 k = 0; k < K; ++k) {
      Var p = xs[static_cast<size_t>(k)];
      if (!gr.wants(p)) continue;
      Tensor& gp = gr.grad(p);
      for (i64 i = 0; i < n; ++i) gp[i] += go[i * K + k];
    }
  });
}

Var slice_last(Graph& g, Var x, i64 from, i64 count) {
  const Tensor& t = g.val(x);
  const i64 C = t.shape().back();
  require(from >= 0 && from + count <= C, "slice_last: out of range");
  const i64 lead = rows_for(t, C);
  std::vector<i64> shape = t.shape();
  shape.back() = count;
  Tensor out(shape);
  for (i64 r = 0; r < lead; ++r)
    for (i64 c = 0; c < count; ++c) out[r * count + c] = t[r * C + from + c];
  return g.make(std::move(out), {x}, [x, from, count, C, lead](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (i64 r = 0; r < lead; ++r)
      for (i64 c = 0; c < count; ++c) gx[r * C + from + c] += go[r * count + c];
  });
}

// ---------------------------------------------------------------------------
// dense / norm layers
// ---------------------------------------------------------------------------

Var linear(Graph& g, Var x, Var W, Var b) {
  const Tensor& xt = g.val(x);
  const Tensor& wt = g.val(W);
  require(wt.ndim() == 2, "linear: W must be 2-D");
  const i64 K = wt.dim(0), N = wt.dim(1);
  require(xt.shape().back() == K, "linear: inner dim mismatch");
  const i64 R = rows_for(xt, K);
  const double* bp = nullptr;
  if (b != kNoVar) {
    require(g.val(b).numel() == N, "linear: bias size mismatch");
    bp = g.val(b).data();
  }
  std::vector<i64> shape = xt.shape();
  shape.back() = N;
  Tensor out(shape);
  kern::linear_fw(xt.data(), wt.data(), bp, out.data(), R, K, N);
  std::vector<Var> parents = b == kNoVar ? std::vector<Var>{x, W} : std::vector<Var>{x, W, b};
  return g.make(std::move(out), parents, [x, W, b, R, K, N](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(x))
      kern::linear_bw_x(go.data(), gr.val(W).data(), gr.grad(x).data(), R, K, N);
    if (gr.wants(W))
      kern::linear_bw_w(gr.val(x).data(), go.data(), gr.grad(W).data(), R, K, N);
    if (b != kNoVar && gr.wants(b)) kern::linear_bw_b(go.data(), gr.grad(b).data(), R, N);
  });
}

Var layernorm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor& xt = g.val(x);
  const i64 C = xt.shape().back();
  require(g.val(gamma).numel() == C && g.val(beta).numel() == C, "layernorm: scale size");
  const i64 R = rows_for(xt, C);
  Tensor out(xt.shape());
  Tensor mean({R}), rstd({R});
  kern::layernorm_fw(xt.data(), g.val(gamma).data(), g.val(beta).data(), out.data(),
                     mean.data(), rstd.data(), R, C, eps);
  return g.make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, R, C, mean, rstd](Graph& gr, Var self) {
                  const Tensor& go = gr.grad(self);
                  Tensor scratch_dx, scratch_dg, scratch_db;
                  double* dxp = gr.wants(x) ? gr.grad(x).data() : nullptr;
                  if (!dxp) {
                    scratch_dx = Tensor(gr.val(x).shape());
                    dxp = scratch_dx.data();
                  }
                  double* dgp = gr.wants(gamma) ? gr.grad(gamma).data() : nullptr;
                  if (!dgp) {
                    scratch_dg = Tensor({C});
                    dgp = scratch_dg.data();
                  }
                  double* dbp = gr.wants(beta) ? gr.grad(beta).data() : nullptr;
                  if (!dbp) {
                    scratch_db = Tensor({C});
                    dbp = scratch_db.data();
                  }
                  kern::layernorm_bw(gr.val(x).data(), gr.val(gamma).data(), go.data(),
                                     mean.data(), rstd.data(), dxp, dgp, dbp, R, C);
                });
}

Var batchnorm(Graph& g, Var x, Var gamma, Var beta, Parameter* run_mean, Parameter* run_var,
              bool training, double momentum, double eps) {
  const Tensor& xt = g.val(x);
  const i64 F = xt.shape().back();
  require(g.val(gamma).numel() == F && g.val(beta).numel() == F, "batchnorm: scale size");
  require(run_mean->value.numel() == F && run_var->value.numel() == F,
          "batchnorm: running stat size");
  const i64 R = rows_for(xt, F);
  Tensor out(xt.shape());
  Tensor bmean({F}), bvar({F});
  kern::batchnorm_fw(xt.data(), g.val(gamma).data(), g.val(beta).data(),
                     run_mean->value.data(), run_var->value.data(), training, bmean.data(),
                     bvar.data(), out.data(), R, F, eps);
  Tensor used_mean = training ? bmean : run_mean->value;
  Tensor used_var = training ? bvar : run_var->value;
  if (training) {
    g.staged_stats.push_back({run_mean, bmean, momentum});
    g.staged_stats.push_back({run_var, bvar, momentum});
  }
  return g.make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, R, F, used_mean, used_var, training, eps](Graph& gr,
                                                                           Var self) {
                  const Tensor& go = gr.grad(self);
                  Tensor scratch_dx, scratch_dg, scratch_db;
                  double* dxp = gr.wants(x) ? gr.grad(x).data() : nullptr;
                  if (!dxp) {
                    scratch_dx = Tensor(gr.val(x).shape());
                    dxp = scratch_dx.data();
                  }
                  double* dgp = gr.wants(gamma) ? gr.grad(gamma).data() : nullptr;
                  if (!dgp) {
                    scratch_dg = Tensor({F});
                    dgp = scratch_dg.data();
                  }
                  double* dbp = gr.wants(beta) ? gr.grad(beta).data() : nullptr;
                  if (!dbp) {
                    scratch_db = Tensor({F});
                    dbp = scratch_db.data();
                  }
                  kern::batchnorm_bw(gr.val(x).data(), gr.val(gamma).data(), go.data(),
                                     used_mean.data(), used_var.data(), training, dxp, dgp,
                                     dbp, R, F, eps);
                });
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

namespace {

struct Dims4 {
  i64 B, H, W, C;
};

Dims4 dims4(const Tensor& t, const char* what) {
  require(t.ndim() == 4, what);
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

}  // namespace

Var conv2d(Graph& g, Var x, Var w, Var b, i64 k, i64 pad) {
  const auto d = dims4(g.val(x), "conv2d: x must be 4-D");
  const Tensor& wt = g.val(w);
  require(wt.ndim() == 4 && wt.dim(0) == k && wt.dim(1) == k && wt.dim(2) == d.C,
          "conv2d: weight shape");
  require(pad == (k - 1) / 2 && k % 2 == 1, "conv2d: only same-padding supported");
  const i64 Co = wt.dim(3);
  const double* bp = nullptr;
  if (b != kNoVar) {
    require(g.val(b).numel() == Co, "conv2d: bias size");
    bp = g.val(b).data();
  }
  Tensor out({d.B, d.H, d.W, Co});
  kern::conv2d_fw(g.val(x).data(), wt.data(), bp, out.data(), d.B, d.H, d.W, d.C, Co, k, pad);
  std::vector<Var> parents = b == kNoVar ? std::vector<Var>{x, w} : std::vector<Var>{x, w, b};
  return g.make(std::move(out), parents, [x, w, b, d, Co, k, pad](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(x))
      kern::conv2d_bw_x(go.data(), gr.val(w).data(), gr.grad(x).data(), d.B, d.H, d.W, d.C,
                        Co, k, pad);
    if (gr.wants(w))
      kern::conv2d_bw_w(gr.val(x).data(), go.data(), gr.grad(w).data(), d.B, d.H, d.W, d.C,
                        Co, k, pad);
    if (b != kNoVar && gr.wants(b))
      kern::conv2d_bw_b(go.data(), gr.grad(b).data(), d.B, d.H, d.W, Co);
  });
}

Var gap(Graph& g, Var x) {
  const auto d = dims4(g.val(x), "gap: x must be 4-D");
  Tensor out({d.B, d.C});
  const double inv = 1.0 / static_cast<double>(d.H * d.W);
  const Tensor& xt = g.val(x);
  for (i64 b = 0; b < d.B; ++b)
    for (i64 c = 0; c < d.C; ++c) {
      double acc = 0.0;
      for (i64 i = 0; i < d.H * d.W; ++i) acc += xt[(b * d.H * d.W + i) * d.C + c];
      out[b * d.C + c] = acc * inv;
    }
  return g.make(std::move(out), {x}, [x, d, inv](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (i64 b = 0; b < d.B; ++b)
      for (i64 i = 0; i < d.H * d.W; ++i)
        for (i64 c = 0; c < d.C; ++c)
          gx[(b * d.H * d.W + i) * d.C + c] += go[b * d.C + c] * inv;
  });
}

Var channel_scale(Graph& g, Var x, Var s) {
  const auto d = dims4(g.val(x), "channel_scale: x must be 4-D");
  require(g.val(s).ndim() == 2 && g.val(s).dim(0) == d.B && g.val(s).dim(1) == d.C,
          "channel_scale: s must be (B,C)");
  Tensor out(g.val(x).shape());
  const Tensor& xt = g.val(x);
  const Tensor& st = g.val(s);
  const i64 hw = d.H * d.W;
#pragma omp parallel for schedule(static)
  for (i64 b = 0; b < d.B; ++b)
    for (i64 i = 0; i < hw; ++i)
      for (i64 c = 0; c < d.C; ++c)
        out[(b * hw + i) * d.C + c] = xt[(b * hw + i) * d.C + c] * st[b * d.C + c];
  return g.make(std::move(out), {x, s}, [x, s, d, hw](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(x)) {
      Tensor& gx = gr.grad(x);
      const Tensor& st = gr.val(s);
      for (i64 b = 0; b < d.B; ++b)
        for (i64 i = 0; i < hw; ++i)
          for (i64 c = 0; c < d.C; ++c)
            gx[(b * hw + i) * d.C + c] += go[(b * hw + i) * d.C + c] * st[b * d.C + c];
    }
    if (gr.wants(s)) {
      Tensor& gs = gr.grad(s);
      const Tensor& xt = gr.val(x);
      for (i64 b = 0; b < d.B; ++b)
        for (i64 c = 0; c < d.C; ++c) {
          double acc = 0.0;
          for (i64 i = 0; i < hw; ++i)
            acc += go[(b * hw + i) * d.C + c] * xt[(b * hw + i) * d.C + c];
          gs[b * d.C + c] += acc;
        }
    }
  });
}

namespace {

// shared index-permutation machinery: out[i] = in[perm[i]]
Var permute_op(Graph& g, Var x, std::vector<i64> perm, std::vector<i64> out_shape,
               const char* what) {
  const Tensor& xt = g.val(x);
  require(static_cast<i64>(perm.size()) == Tensor::compute_numel(out_shape), what);
  Tensor out(out_shape);
  const double* px = xt.data();
  double* po = out.data();
  const i64 n = out.numel();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) po[i] = px[perm[static_cast<size_t>(i)]];
  auto pm = std::make_shared<std::vector<i64>>(std::move(perm));
  return g.make(std::move(out), {x}, [x, pm](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < go.numel(); ++i) gx[(*pm)[static_cast<size_t>(i)]] += go[i];
  });
}

}  // namespace

Var space_to_depth(Graph& g, Var x, i64 f) {
  const auto d = dims4(g.val(x), "space_to_depth: x must be 4-D");
  require(d.H % f == 0 && d.W % f == 0, "space_to_depth: dims not divisible");
  const i64 Ho = d.H / f, Wo = d.W / f, Co = f * f * d.C;
  std::vector<i64> perm(static_cast<size_t>(d.B * Ho * Wo * Co));
  i64 i = 0;
  for (i64 b = 0; b < d.B; ++b)
    for (i64 oh = 0; oh < Ho; ++oh)
      for (i64 ow = 0; ow < Wo; ++ow)
        for (i64 dh = 0; dh < f; ++dh)
          for (i64 dw = 0; dw < f; ++dw)
            for (i64 c = 0; c < d.C; ++c)
              perm[static_cast<size_t>(i++)] =
                  ((b * d.H + oh * f + dh) * d.W + ow * f + dw) * d.C + c;
  return permute_op(g, x, std::move(perm), {d.B, Ho, Wo, Co}, "space_to_depth");
}

Var depth_to_space(Graph& g, Var x, i64 f) {
  const auto d = dims4(g.val(x), "depth_to_space: x must be 4-D");
  require(d.C % (f * f) == 0, "depth_to_space: channels not divisible");
  const i64 Co = d.C / (f * f), Ho = d.H * f, Wo = d.W * f;
  std::vector<i64> perm(static_cast<size_t>(d.B * Ho * Wo * Co));
  i64 i = 0;
  for (i64 b = 0; b < d.B; ++b)
    for (i64 h = 0; h < Ho; ++h)
      for (i64 w = 0; w < Wo; ++w)
        for (i64 c = 0; c < Co; ++c) {
          const i64 ih = h / f, iw = w / f, dh = h % f, dw = w % f;
          perm[static_cast<size_t>(i++)] =
              ((b * d.H + ih) * d.W + iw) * d.C + (dh * f + dw) * Co + c;
        }
  return permute_op(g, x, std::move(perm), {d.B, Ho, Wo, Co}, "depth_to_space");
}

Var avg_pool(Graph& g, Var x, i64 f) {
  const auto d = dims4(g.val(x), "avg_pool: x must be 4-D");
  require(d.H % f == 0 && d.W % f == 0, "avg_pool: dims not divisible");
  if (f == 1) {
    // keep the node count down for the degenerate case
    Tensor out = g.val(x);
    return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
      if (!gr.wants(x)) return;
      const Tensor& go = gr.grad(self);
      Tensor& gx = gr.grad(x);
      for (i64 i = 0; i < go.numel(); ++i) gx[i] += go[i];
    });
  }
  const i64 Ho = d.H / f, Wo = d.W / f;
  const double inv = 1.0 / static_cast<double>(f * f);
  Tensor out({d.B, Ho, Wo, d.C});
  const Tensor& xt = g.val(x);
  for (i64 b = 0; b < d.B; ++b)
    for (i64 oh = 0; oh < Ho; ++oh)
      for (i64 ow = 0; ow < Wo; ++ow)
        for (i64 c = 0; c < d.C; ++c) {
          double acc = 0.0;
          for (i64 dh = 0; dh < f; ++dh)
            for (i64 dw = 0; dw < f; ++dw)
              acc += xt[((b * d.H + oh * f + dh) * d.W + ow * f + dw) * d.C + c];
          out[((b * Ho + oh) * Wo + ow) * d.C + c] = acc * inv;
        }
  return g.make(std::move(out), {x}, [x, d, f, Ho, Wo, inv](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad(x);
    for (i64 b = 0; b < d.B; ++b)
      for (i64 oh = 0; oh < Ho; ++oh)
        for (i64 ow = 0; ow < Wo; ++ow)
          for (i64 c = 0; c < d.C; ++c) {
            const double gv = go[((b * Ho + oh) * Wo + ow) * d.C + c] * inv;
            for (i64 dh = 0; dh < f; ++dh)
              for (i64 dw = 0; dw < f; ++dw)
                gx[((b * d.H + oh * f + dh) * d.W + ow * f + dw) * d.C + c] += gv;
          }
  });
}

Var upsample_nearest(Graph& g, Var x, i64 f) {
  const auto d = dims4(g.val(x), "upsample_nearest: x must be 4-D");
  const i64 Ho = d.H * f, Wo = d.W * f;
  std::vector<i64> perm(static_cast<size_t>(d.B * Ho * Wo * d.C));
  i64 i = 0;
  for (i64 b = 0; b < d.B; ++b)
    for (i64 h = 0; h < Ho; ++h)
      for (i64 w = 0; w < Wo; ++w)
        for (i64 c = 0; c < d.C; ++c)
          perm[static_cast<size_t>(i++)] = ((b * d.H + h / f) * d.W + w / f) * d.C + c;
  return permute_op(g, x, std::move(perm), {d.B, Ho, Wo, d.C}, "upsample_nearest");
}

// ---------------------------------------------------------------------------
// scan traversal orders
// ---------------------------------------------------------------------------

namespace {

// position of sequence step t on the (H, W) grid for each traversal order
inline i64 dir_offset(int dir, i64 t, i64 H, i64 W) {
  const i64 L = H * W;
  switch (dir) {
    case 0: return t;
    case 1: return L - 1 - t;
    case 2: {
      const i64 w = t / H, h = t % H;
      return h * W + w;
    }
    case 3: {
      const i64 tr = L - 1 - t;
      const i64 w = tr / H, h = tr % H;
      return h * W + w;
    }
    default: throw std::invalid_argument("bad scan direction");
  }
}

}  // namespace

Var gather_dir(Graph& g, Var x, int dir) {
  const auto d = dims4(g.val(x), "gather_dir: x must be 4-D");
  const i64 L = d.H * d.W;
  std::vector<i64> perm(static_cast<size_t>(d.B * L * d.C));
  i64 i = 0;
  for (i64 b = 0; b < d.B; ++b)
    for (i64 t = 0; t < L; ++t) {
      const i64 pos = dir_offset(dir, t, d.H, d.W);
      for (i64 c = 0; c < d.C; ++c) perm[static_cast<size_t>(i++)] = (b * L + pos) * d.C + c;
    }
  return permute_op(g, x, std::move(perm), {d.B, L, d.C}, "gather_dir");
}

Var scatter_dir(Graph& g, Var s, int dir, i64 H, i64 W) {
  const Tensor& st = g.val(s);
  require(st.ndim() == 3 && st.dim(1) == H * W, "scatter_dir: bad input");
  const i64 B = st.dim(0), L = H * W, C = st.dim(2);
  std::vector<i64> perm(static_cast<size_t>(B * L * C));
  // out[b, pos, c] = in[b, t, c]; build as gather from the inverse map
  std::vector<i64> inv(static_cast<size_t>(L));
  for (i64 t = 0; t < L; ++t) inv[static_cast<size_t>(dir_offset(dir, t, H, W))] = t;
  i64 i = 0;
  for (i64 b = 0; b < B; ++b)
    for (i64 pos = 0; pos < L; ++pos) {
      const i64 t = inv[static_cast<size_t>(pos)];
      for (i64 c = 0; c < C; ++c) perm[static_cast<size_t>(i++)] = (b * L + t) * C + c;
    }
  return permute_op(g, s, std::move(perm), {B, H, W, C}, "scatter_dir");
}

// ---------------------------------------------------------------------------
// selective scan
// ---------------------------------------------------------------------------

Var selective_scan(Graph& g, Var x, Var delta, Var Bs, Var Cs, Var A, Var D) {
  const Tensor& xt = g.val(x);
  require(xt.ndim() == 3, "selective_scan: x must be (B,L,C)");
  const i64 B = xt.dim(0), L = xt.dim(1), C = xt.dim(2);
  require(g.val(delta).same_shape(xt), "selective_scan: delta shape");
  const Tensor& bst = g.val(Bs);
  require(bst.ndim() == 3 && bst.dim(0) == B && bst.dim(1) == L, "selective_scan: Bs shape");
  const i64 N = bst.dim(2);
  require(g.val(Cs).same_shape(bst), "selective_scan: Cs shape");
  require(g.val(A).ndim() == 2 && g.val(A).dim(0) == C && g.val(A).dim(1) == N,
          "selective_scan: A shape");
  require(g.val(D).numel() == C, "selective_scan: D shape");
  Tensor out({B, L, C});
  kern::scan_fw(xt.data(), g.val(delta).data(), bst.data(), g.val(Cs).data(),
                g.val(A).data(), g.val(D).data(), out.data(), B, L, C, N);
  return g.make(std::move(out), {x, delta, Bs, Cs, A, D},
                [x, delta, Bs, Cs, A, D, B, L, C, N](Graph& gr, Var self) {
                  const Tensor& go = gr.grad(self);
                  auto buf_for = [&](Var p, Tensor& scratch) -> double* {
                    if (gr.wants(p)) return gr.grad(p).data();
                    scratch = Tensor(gr.val(p).shape());
                    return scratch.data();
                  };
                  Tensor sx, sd, sb, sc, sa, sD;
                  double* gx = buf_for(x, sx);
                  double* gd = buf_for(delta, sd);
                  double* gb = buf_for(Bs, sb);
                  double* gc = buf_for(Cs, sc);
                  double* ga = buf_for(A, sa);
                  double* gD = buf_for(D, sD);
                  kern::scan_bw(gr.val(x).data(), gr.val(delta).data(), gr.val(Bs).data(),
                                gr.val(Cs).data(), gr.val(A).data(), gr.val(D).data(),
                                go.data(), gx, gd, gb, gc, ga, gD, B, L, C, N);
                });
}

// ---------------------------------------------------------------------------
// patch attention pieces
// ---------------------------------------------------------------------------

Var partition(Graph& g, Var x, i64 d) {
  const auto s = dims4(g.val(x), "partition: x must be 4-D");
  require(d > 0 && s.H % d == 0 && s.W % d == 0, "partition: d must divide dims");
  const i64 P = (s.H / d) * (s.W / d), J = d * d;
  std::vector<i64> perm(static_cast<size_t>(s.B * P * J * s.C));
  const i64 tiles_w = s.W / d;
  i64 i = 0;
  for (i64 b = 0; b < s.B; ++b)
    for (i64 p = 0; p < P; ++p) {
      const i64 th = p / tiles_w, tw = p % tiles_w;
      for (i64 j = 0; j < J; ++j) {
        const i64 h = th * d + j / d, w = tw * d + j % d;
        for (i64 c = 0; c < s.C; ++c)
          perm[static_cast<size_t>(i++)] = ((b * s.H + h) * s.W + w) * s.C + c;
      }
    }
  return permute_op(g, x, std::move(perm), {s.B, P, J, s.C}, "partition");
}

Var inverse_partition(Graph& g, Var x, i64 H, i64 W) {
  const Tensor& t = g.val(x);
  require(t.ndim() == 4, "inverse_partition: x must be (B,P,J,C)");
  const i64 B = t.dim(0), P = t.dim(1), J = t.dim(2), C = t.dim(3);
  const i64 d = static_cast<i64>(std::llround(std::sqrt(static_cast<double>(J))));
  require(d * d == J && P * J == H * W && H % d == 0 && W % d == 0,
          "inverse_partition: inconsistent dims");
  const i64 tiles_w = W / d;
  std::vector<i64> perm(static_cast<size_t>(B * H * W * C));
  i64 i = 0;
  for (i64 b = 0; b < B; ++b)
    for (i64 h = 0; h < H; ++h)
      for (i64 w = 0; w < W; ++w) {
        const i64 p = (h / d) * tiles_w + (w / d);
        const i64 j = (h % d) * d + (w % d);
        for (i64 c = 0; c < C; ++c)
          perm[static_cast<size_t>(i++)] = ((b * P + p) * J + j) * C + c;
      }
  return permute_op(g, x, std::move(perm), {B, H, W, C}, "inverse_partition");
}

Var base_tensor(Graph& g, Var O, Var I, Var E) {
  const Tensor& ot = g.val(O);
  const Tensor& it = g.val(I);
  const Tensor& et = g.val(E);
  require(ot.ndim() == 4 && et.ndim() == 4 && it.ndim() == 3, "base_tensor: ranks");
  const i64 B = ot.dim(0), P = ot.dim(1), J = ot.dim(2), C = ot.dim(3);
  const i64 Eh = et.dim(3);
  require(it.dim(0) == B && it.dim(1) == P && it.dim(2) == J, "base_tensor: I shape");
  require(et.dim(0) == B && et.dim(1) == P && et.dim(2) == J, "base_tensor: E shape");
  Tensor out({B, P, C, Eh});
  kern::base_tensor_fw(ot.data(), it.data(), et.data(), out.data(), B, P, J, C, Eh);
  return g.make(std::move(out), {O, I, E}, [O, I, E, B, P, J, C, Eh](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    auto buf_for = [&](Var p, Tensor& scratch) -> double* {
      if (gr.wants(p)) return gr.grad(p).data();
      scratch = Tensor(gr.val(p).shape());
      return scratch.data();
    };
    Tensor so, si, se;
    double* gO = buf_for(O, so);
    double* gI = buf_for(I, si);
    double* gE = buf_for(E, se);
    kern::base_tensor_bw(gr.val(O).data(), gr.val(I).data(), gr.val(E).data(), go.data(), gO,
                         gI, gE, B, P, J, C, Eh);
  });
}

Var weighted_aggregate(Graph& g, Var A, Var W) {
  const Tensor& at = g.val(A);
  require(at.ndim() == 4, "weighted_aggregate: A must be (B,P,C,E)");
  require(g.val(W).same_shape(at), "weighted_aggregate: shape mismatch");
  const i64 B = at.dim(0), P = at.dim(1), CE = at.dim(2) * at.dim(3);
  Tensor out({B, P});
  const Tensor& wt = g.val(W);
  for (i64 bp = 0; bp < B * P; ++bp) {
    double acc = 0.0;
    for (i64 i = 0; i < CE; ++i) acc += at[bp * CE + i] * wt[bp * CE + i];
    out[bp] = acc;
  }
  return g.make(std::move(out), {A, W}, [A, W, B, P, CE](Graph& gr, Var self) {
    const Tensor& go = gr.grad(self);
    if (gr.wants(A)) {
      Tensor& ga = gr.grad(A);
      const Tensor& wt = gr.val(W);
      for (i64 bp = 0; bp < B * P; ++bp)
        for (i64 i = 0; i < CE; ++i) ga[bp * CE + i] += go[bp] * wt[bp * CE + i];
    }
    if (gr.wants(W)) {
      Tensor& gw = gr.grad(W);
      const Tensor& at = gr.val(A);
      for (i64 bp = 0; bp < B * P; ++bp)
        for (i64 i = 0; i < CE; ++i) gw[bp * CE + i] += go[bp] * at[bp * CE + i];
    }
  });
}

Var broadcast_patch(Graph& g, Var m, i64 d, i64 H, i64 W) {
  const Tensor& mt = g.val(m);
  require(mt.ndim() == 2, "broadcast_patch: m must be (B,P)");
  const i64 B = mt.dim(0), P = mt.dim(1);
  require(P * d * d == H * W && H % d == 0 && W % d == 0, "broadcast_patch: dims");
  const i64 tiles_w = W / d;
  Tensor out({B, H, W});
  for (i64 b = 0; b < B; ++b)
    for (i64 h = 0; h < H; ++h)
      for (i64 w = 0; w < W; ++w)
        out[(b * H + h) * W + w] = mt[b * P + (h / d) * tiles_w + (w / d)];
  return g.make(std::move(out), {m}, [m, d, H, W, B, P, tiles_w](Graph& gr, Var self) {
    if (!gr.wants(m)) return;
    const Tensor& go = gr.grad(self);
    Tensor& gm = gr.grad(m);
    for (i64 b = 0; b < B; ++b)
      for (i64 h = 0; h < H; ++h)
        for (i64 w = 0; w < W; ++w)
          gm[b * P + (h / d) * tiles_w + (w / d)] += go[(b * H + h) * W + w];
  });
}

// ---------------------------------------------------------------------------
// losses / reductions
// ---------------------------------------------------------------------------

Var seg_loss(Graph& g, Var logits, const std::vector<int>& gt, double eps, Tensor* ce,
             Tensor* dice) {
  const Tensor& lt = g.val(logits);
  require(lt.ndim() == 4, "seg_loss: logits must be (B,H,W,K)");
  const i64 B = lt.dim(0), HW = lt.dim(1) * lt.dim(2), K = lt.dim(3);
  require(K >= 2, "seg_loss: need at least two classes");
  require(static_cast<i64>(gt.size()) == B * HW, "seg_loss: gt size mismatch");
  Tensor loss({B}), ce_t({B}), dice_t({B});
  kern::seg_loss_fw(lt.data(), gt.data(), loss.data(), ce_t.data(), dice_t.data(), B, HW, K,
                    eps);
  if (ce) *ce = ce_t;
  if (dice) *dice = dice_t;
  auto gt_copy = std::make_shared<std::vector<int>>(gt);
  return g.make(std::move(loss), {logits}, [logits, gt_copy, B, HW, K, eps](Graph& gr,
                                                                            Var self) {
    if (!gr.wants(logits)) return;
    const Tensor& go = gr.grad(self);
    kern::seg_loss_bw(gr.val(logits).data(), gt_copy->data(), go.data(),
                      gr.grad(logits).data(), B, HW, K, eps);
  });
}

Var weighted_mean(Graph& g, Var x, const std::vector<double>& w) {
  const Tensor& xt = g.val(x);
  require(static_cast<i64>(w.size()) == xt.numel(), "weighted_mean: size mismatch");
  double wsum = 0.0, acc = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    wsum += w[i];
    acc += w[i] * xt[static_cast<i64>(i)];
  }
  require(wsum > 0.0, "weighted_mean: weights sum to zero");
  Tensor out({1});
  out[0] = acc / wsum;
  auto wc = std::make_shared<std::vector<double>>(w);
  return g.make(std::move(out), {x}, [x, wc, wsum](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const double gl = gr.grad(self)[0];
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < gx.numel(); ++i) gx[i] += gl * (*wc)[static_cast<size_t>(i)] / wsum;
  });
}

Var sum_all(Graph& g, Var x) {
  const Tensor& xt = g.val(x);
  double acc = 0.0;
  for (i64 i = 0; i < xt.numel(); ++i) acc += xt[i];
  Tensor out({1});
  out[0] = acc;
  return g.make(std::move(out), {x}, [x](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const double gl = gr.grad(self)[0];
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < gx.numel(); ++i) gx[i] += gl;
  });
}

Var dot_const(Graph& g, Var x, Tensor w) {
  const Tensor& xt = g.val(x);
  require(w.numel() == xt.numel(), "dot_const: size mismatch");
  double acc = 0.0;
  for (i64 i = 0; i < xt.numel(); ++i) acc += xt[i] * w[i];
  Tensor out({1});
  out[0] = acc;
  return g.make(std::move(out), {x}, [x, w](Graph& gr, Var self) {
    if (!gr.wants(x)) return;
    const double gl = gr.grad(self)[0];
    Tensor& gx = gr.grad(x);
    for (i64 i = 0; i < gx.numel(); ++i) gx[i] += gl * w[i];
  });
}

}  // namespace smallseg::ag
