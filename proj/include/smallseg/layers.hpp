#pragma once

#include <string>

#include "smallseg/ops.hpp"
#include "smallseg/rng.hpp"

namespace smallseg::net {

struct LinearM {
  ag::Parameter* w = nullptr;
  ag::Parameter* b = nullptr;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 in, i64 out, Rng& rng,
            bool bias = true, bool zero = false);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

struct LayerNormM {
  ag::Parameter* gamma = nullptr;
  ag::Parameter* beta = nullptr;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 dim);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

/// Squeeze/excite/scale channel gate with residual: out = x + s(x) * x where
/// s = sigmoid(fc2(relu(fc1(gap(x))))). fc2 is zero-initialized so training
/// starts at a uniform 1.5x scaling.
struct ChannelGate {
  LinearM fc1, fc2;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 channels, i64 reduction,
            Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

/// Parameters of one scan direction: state-transition log-magnitudes, skip
/// gain, and the input-dependent projections producing delta, B and C.
struct ScanDir {
  ag::Parameter* a_log = nullptr;   // (D,N); A = -exp(a_log)
  ag::Parameter* d_skip = nullptr;  // (D)
  LinearM dt_lo;                    // (D, dt_rank), no bias
  LinearM dt;                       // (dt_rank, D) with bias
  LinearM b_proj;                   // (D, N), no bias
  LinearM c_proj;                   // (D, N), no bias
};

/// Four-direction 2-D selective scan. The input is projected to an inner
/// width plus a gate; each traversal order runs the shared input through its
/// own state parameters; outputs are re-aligned to the grid, summed,
/// sigmoid-gated and projected back to C channels.
struct SelectiveScan2d {
  i64 channels = 0, inner = 0, state = 0, dt_rank = 0;
  LinearM in_proj;   // C -> 2*inner (scan input | gate)
  LinearM out_proj;  // inner -> C
  ScanDir dirs[4];
  void init(ag::ParamStore& ps, const std::string& prefix, i64 channels, i64 inner,
            i64 state, Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;  // (B,H,W,C) -> (B,H,W,C)
};

/// Scan block: pre-norm SS2D with an inner residual, channel gate, and an
/// outer residual through a final projection. No depthwise convolution.
struct ScanBlock {
  LayerNormM norm1, norm2;
  SelectiveScan2d ssm;
  ChannelGate gate;
  bool use_gate = true;
  LinearM proj;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 channels, i64 state,
            i64 expand, i64 reduction, bool with_gate, Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

/// Non-overlapping 4x4 patch projection + layer norm: (B,H,W,3) -> (B,H/4,W/4,C0).
struct PatchEmbed {
  LinearM proj;
  LayerNormM norm;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 out_dim, Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var img) const;
};

/// 2x2 neighborhood concat (TL,TR,BL,BR order) + linear 4C -> 2C.
struct PatchMerge {
  LinearM reduce;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 channels, Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

/// Linear growth + pixel rearrangement: in_channels -> factor^2 * out_channels
/// then depth-to-space. The usual decoder step is (C, C/2, factor 2), i.e.
/// linear to 2C then rearrangement to C/2 channels at twice the resolution.
struct PatchExpand {
  LinearM grow;
  i64 factor = 2;
  void init(ag::ParamStore& ps, const std::string& prefix, i64 in_channels, i64 out_channels,
            i64 factor, Rng& rng);
  ag::Var fwd(ag::Graph& g, ag::Var x) const;
};

}  // namespace smallseg::net
