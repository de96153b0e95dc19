#pragma once

#include <string>
#include <vector>

#include "smallseg/layers.hpp"

namespace smallseg::attn {

/// Fixed 3x3 Sobel magnitude on the channel-mean image, replicate padding;
/// (B,g,g,3) -> (B,g,g,1). Constant images give exactly zero everywhere.
Tensor sobel_magnitude(const Tensor& img);

/// Plain (non-graph) average pooling for constant image inputs.
Tensor pool_image(const Tensor& img, i64 factor);

enum class Modulation { kStrict, kResidual };

/// Everything the modulation produces for one decoder stage.
struct StageAttentionOut {
  ag::Var modulated = ag::kNoVar;    // (B,g,g,Nc)
  std::vector<ag::Var> class_maps;   // fused per-category maps (B,g,g)
};

/// Patch-tensor cross-feature attention for one decoder stage. Pyramid
/// features (embedded image, embedded Sobel edges, per-category projections
/// of the decoder features) are partitioned at several patch scales; at each
/// scale an einsum contraction over within-patch pixels forms the base
/// tensor, an MLP on the concatenated patch features yields dynamic weights
/// in (0,1), and the weighted aggregate gives one scalar per patch. Scale
/// maps are broadcast back to the grid, summed, and used to modulate the
/// stage's predicted mask.
struct StageAttention {
  i64 grid = 0;
  i64 img_ch = 8, edge_ch = 8, num_classes = 2, hidden = 32;
  std::vector<i64> scales;

  ag::Parameter *img7_w = nullptr, *img7_b = nullptr;  // (7,7,3,C)
  ag::Parameter *img3_w = nullptr, *img3_b = nullptr;  // (3,3,C,C)
  ag::Parameter *edge_w = nullptr, *edge_b = nullptr;  // (3,3,1,E)
  net::LinearM cat_proj;                               // decoder features -> Nc

  struct ScaleMlp {
    i64 d = 0;
    net::LinearM fc1;  // d*d*(C+Nc+E) -> hidden
    ag::Parameter *bn_gamma = nullptr, *bn_beta = nullptr;
    ag::Parameter *bn_mean = nullptr, *bn_var = nullptr;  // running stats (buffers)
    net::LinearM fc2;  // hidden -> C*E, zero-initialized
  };
  std::vector<ScaleMlp> mlps;

  /// Creates parameters. candidate_scales are clipped to divisors of the grid.
  void init(ag::ParamStore& ps, const std::string& prefix, i64 grid_side, i64 feat_channels,
            i64 n_classes, i64 img_channels, i64 edge_channels, i64 mlp_hidden,
            const std::vector<int>& candidate_scales, Rng& rng);

  /// Builds the three aligned pyramid branches. `image` is the full-resolution
  /// input; it is average-pooled to the stage grid before embedding.
  ag::Var embed_image(ag::Graph& g, const Tensor& image) const;
  ag::Var embed_edges(ag::Graph& g, const Tensor& image) const;
  ag::Var per_category(ag::Graph& g, ag::Var dec_feat) const;

  /// Fused per-category attention maps A^k at this grid.
  std::vector<ag::Var> attention_maps(ag::Graph& g, ag::Var p_o, ag::Var p_e, ag::Var r,
                                      bool training) const;

  /// Modulates the stage mask: strict A*M, or residual (1+A)*M.
  StageAttentionOut modulate(ag::Graph& g, ag::Var stage_mask, ag::Var dec_feat,
                             const Tensor& image, Modulation mode, bool training) const;
};

}  // namespace smallseg::attn
