#pragma once

#include <vector>

#include "smallseg/graph.hpp"

// Differentiable op builders. Every function appends nodes to the graph and
// returns the result Var. Shapes are validated eagerly; kernels do the math.

namespace smallseg::ag {

// elementwise
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double c);
Var add_many(Graph& g, const std::vector<Var>& xs);
Var sigmoid(Graph& g, Var x);
Var relu(Graph& g, Var x);
Var softplus(Graph& g, Var x);
Var neg_exp(Graph& g, Var x);  // y = -exp(x)

// shape plumbing
Var reshape(Graph& g, Var x, std::vector<i64> shape);
Var concat_last(Graph& g, const std::vector<Var>& xs);
Var stack_last(Graph& g, const std::vector<Var>& xs);
Var slice_last(Graph& g, Var x, i64 from, i64 count);

// dense / norm layers; x may have any leading dims, last dim is K
Var linear(Graph& g, Var x, Var W, Var b = kNoVar);
Var layernorm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);
Var batchnorm(Graph& g, Var x, Var gamma, Var beta, Parameter* run_mean, Parameter* run_var,
              bool training, double momentum = 0.1, double eps = 1e-5);

// spatial ops on NHWC maps
Var conv2d(Graph& g, Var x, Var w, Var b, i64 k, i64 pad);
Var gap(Graph& g, Var x);                         // (B,H,W,C) -> (B,C)
Var channel_scale(Graph& g, Var x, Var s);        // x(B,H,W,C) * s(B,C)
Var space_to_depth(Graph& g, Var x, i64 f);       // (B,H,W,C) -> (B,H/f,W/f,f*f*C)
Var depth_to_space(Graph& g, Var x, i64 f);       // inverse of the above
Var avg_pool(Graph& g, Var x, i64 f);
Var upsample_nearest(Graph& g, Var x, i64 f);

// four 2D traversal orders for the scan: 0 row-major, 1 row-major reversed,
// 2 column-major, 3 column-major reversed
Var gather_dir(Graph& g, Var x, int dir);               // (B,H,W,C) -> (B,L,C)
Var scatter_dir(Graph& g, Var s, int dir, i64 H, i64 W);  // inverse

// selective state-space scan (see kernels.hpp for the recurrence)
Var selective_scan(Graph& g, Var x, Var delta, Var Bs, Var Cs, Var A, Var D);

// patch attention pieces
Var partition(Graph& g, Var x, i64 d);                   // (B,H,W,C) -> (B,P,d*d,C)
Var inverse_partition(Graph& g, Var x, i64 H, i64 W);    // (B,P,J,C) -> (B,H,W,C)
Var base_tensor(Graph& g, Var O, Var I, Var E);          // -> (B,P,C,E)
Var weighted_aggregate(Graph& g, Var A, Var W);          // (B,P,C,E)x2 -> (B,P)
Var broadcast_patch(Graph& g, Var m, i64 d, i64 H, i64 W);  // (B,P) -> (B,H,W)

// losses / reductions
/// Per-sample loss 0.5*CE + 0.5*(1 - mean soft dice over foreground classes).
/// gt holds class ids, row-major (B*H*W). Optional ce/dice receive the two
/// components for logging.
Var seg_loss(Graph& g, Var logits, const std::vector<int>& gt, double eps = 1e-6,
             Tensor* ce = nullptr, Tensor* dice = nullptr);
Var weighted_mean(Graph& g, Var x, const std::vector<double>& w);  // -> scalar
Var sum_all(Graph& g, Var x);                                      // -> scalar
Var dot_const(Graph& g, Var x, Tensor w);                          // -> scalar, sum(w*x)

}  // namespace smallseg::ag
