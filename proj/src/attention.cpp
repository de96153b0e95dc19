#include "smallseg/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smallseg::attn {

Tensor sobel_magnitude(const Tensor& img) {
  if (img.ndim() != 4) throw std::invalid_argument("sobel_magnitude: need (B,H,W,C)");
  const i64 B = img.dim(0), H = img.dim(1), W = img.dim(2), C = img.dim(3);
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  Tensor out({B, H, W, 1});
  for (i64 b = 0; b < B; ++b) {
    auto gray = [&](i64 y, i64 x) {
      y = std::clamp<i64>(y, 0, H - 1);  // replicate padding
      x = std::clamp<i64>(x, 0, W - 1);
      double acc = 0.0;
      for (i64 c = 0; c < C; ++c) acc += img[((b * H + y) * W + x) * C + c];
      return acc / static_cast<double>(C);
    };
    for (i64 y = 0; y < H; ++y)
      for (i64 x = 0; x < W; ++x) {
        double gx = 0.0, gy = 0.0;
        for (i64 dy = -1; dy <= 1; ++dy)
          for (i64 dx = -1; dx <= 1; ++dx) {
            const double v = gray(y + dy, x + dx);
            gx += kx[dy + 1][dx + 1] * v;
            gy += ky[dy + 1][dx + 1] * v;
          }
        out[(b * H + y) * W + x] = std::sqrt(gx * gx + gy * gy);
      }
  }
  return out;
}

Tensor pool_image(const Tensor& img, i64 factor) {
  if (img.ndim() != 4) throw std::invalid_argument("pool_image: need (B,H,W,C)");
  const i64 B = img.dim(0), H = img.dim(1), W = img.dim(2), C = img.dim(3);
  if (H % factor != 0 || W % factor != 0)
    throw std::invalid_argument("pool_image: factor must divide dims");
  if (factor == 1) return img;
  const i64 Ho = H / factor, Wo = W / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Tensor out({B, Ho, Wo, C});
  for (i64 b = 0; b < B; ++b)
    for (i64 oh = 0; oh < Ho; ++oh)
      for (i64 ow = 0; ow < Wo; ++ow)
        for (i64 c = 0; c < C; ++c) {
          double acc = 0.0;
          for (i64 dh = 0; dh < factor; ++dh)
            for (i64 dw = 0; dw < factor; ++dw)
              acc += img[((b * H + oh * factor + dh) * W + ow * factor + dw) * C + c];
          out[((b * Ho + oh) * Wo + ow) * C + c] = acc * inv;
        }
  return out;
}

void StageAttention::init(ag::ParamStore& ps, const std::string& prefix, i64 grid_side,
                          i64 feat_channels, i64 n_classes, i64 img_channels,
                          i64 edge_channels, i64 mlp_hidden,
                          const std::vector<int>& candidate_scales, Rng& rng) {
  grid = grid_side;
  img_ch = img_channels;
  edge_ch = edge_channels;
  num_classes = n_classes;
  hidden = mlp_hidden;
  scales.clear();
  for (int d : candidate_scales)
    if (d > 0 && d <= grid && grid % d == 0) scales.push_back(d);
  if (scales.empty())
    throw std::invalid_argument("StageAttention: no patch scale divides grid side " +
                                std::to_string(grid));

  img7_w = ps.add(prefix + ".img7.w", ag::init_fanin({7, 7, 3, img_ch}, rng));
  img7_b = ps.add(prefix + ".img7.b", Tensor({img_ch}));
  img3_w = ps.add(prefix + ".img3.w", ag::init_fanin({3, 3, img_ch, img_ch}, rng));
  img3_b = ps.add(prefix + ".img3.b", Tensor({img_ch}));
  edge_w = ps.add(prefix + ".edge.w", ag::init_fanin({3, 3, 1, edge_ch}, rng));
  edge_b = ps.add(prefix + ".edge.b", Tensor({edge_ch}));
  cat_proj.init(ps, prefix + ".cat", feat_channels, num_classes, rng);

  for (i64 d : scales) {
    ScaleMlp m;
    m.d = d;
    const i64 in_dim = d * d * (img_ch + num_classes + edge_ch);
    m.fc1.init(ps, prefix + ".d" + std::to_string(d) + ".fc1", in_dim, hidden, rng);
    m.bn_gamma = ps.add(prefix + ".d" + std::to_string(d) + ".bn.g", Tensor::full({hidden}, 1.0));
    m.bn_beta = ps.add(prefix + ".d" + std::to_string(d) + ".bn.b", Tensor({hidden}));
    m.bn_mean =
        ps.add(prefix + ".d" + std::to_string(d) + ".bn.rm", Tensor({hidden}), false);
    m.bn_var = ps.add(prefix + ".d" + std::to_string(d) + ".bn.rv",
                      Tensor::full({hidden}, 1.0), false);
    // zero-initialized so dynamic weights start at sigmoid(0) = 0.5
    m.fc2.init(ps, prefix + ".d" + std::to_string(d) + ".fc2", hidden,
               img_ch * edge_ch, rng, true, true);
    mlps.push_back(m);
  }
}

ag::Var StageAttention::embed_image(ag::Graph& g, const Tensor& image) const {
  const i64 factor = image.dim(1) / grid;
  ag::Var pooled = g.constant(pool_image(image, factor));
  ag::Var h = ag::conv2d(g, pooled, g.param(img7_w), g.param(img7_b), 7, 3);
  h = ag::relu(g, h);
  return ag::conv2d(g, h, g.param(img3_w), g.param(img3_b), 3, 1);
}

ag::Var StageAttention::embed_edges(ag::Graph& g, const Tensor& image) const {
  const i64 factor = image.dim(1) / grid;
  Tensor edges = sobel_magnitude(pool_image(image, factor));
  ag::Var e = g.constant(std::move(edges));
  return ag::conv2d(g, e, g.param(edge_w), g.param(edge_b), 3, 1);
}

ag::Var StageAttention::per_category(ag::Graph& g, ag::Var dec_feat) const {
  return cat_proj.fwd(g, dec_feat);
}

std::vector<ag::Var> StageAttention::attention_maps(ag::Graph& g, ag::Var p_o, ag::Var p_e,
                                                    ag::Var r, bool training) const {
  const i64 B = g.val(p_o).dim(0);
  std::vector<std::vector<ag::Var>> per_class(static_cast<size_t>(num_classes));
  for (const ScaleMlp& m : mlps) {
    const i64 d = m.d;
    const i64 P = (grid / d) * (grid / d);
    ag::Var po_p = ag::partition(g, p_o, d);  // (B,P,J,C)
    ag::Var pe_p = ag::partition(g, p_e, d);  // (B,P,J,E)
    ag::Var pi_p = ag::partition(g, r, d);    // (B,P,J,Nc)

    // dynamic weights from the concatenated patch tensor, shared across k
    ag::Var cat = ag::concat_last(g, {po_p, pi_p, pe_p});
    const i64 flat_dim = d * d * (img_ch + num_classes + edge_ch);
    ag::Var flat = ag::reshape(g, cat, {B, P, flat_dim});
    ag::Var h = m.fc1.fwd(g, flat);
    h = ag::batchnorm(g, h, g.param(m.bn_gamma), g.param(m.bn_beta), m.bn_mean, m.bn_var,
                      training);
    h = ag::relu(g, h);
    ag::Var wd = ag::sigmoid(g, m.fc2.fwd(g, h));          // (B,P,C*E) in (0,1)
    wd = ag::reshape(g, wd, {B, P, img_ch, edge_ch});      // (B,P,C,E)

    for (i64 k = 0; k < num_classes; ++k) {
      ag::Var pik = ag::slice_last(g, pi_p, k, 1);                   // (B,P,J,1)
      pik = ag::reshape(g, pik, {B, P, d * d});                      // (B,P,J)
      ag::Var ab = ag::base_tensor(g, po_p, pik, pe_p);              // (B,P,C,E)
      ag::Var scalar_map = ag::weighted_aggregate(g, ab, wd);        // (B,P)
      per_class[static_cast<size_t>(k)].push_back(
          ag::broadcast_patch(g, scalar_map, d, grid, grid));        // (B,g,g)
    }
  }
  std::vector<ag::Var> fused;
  for (i64 k = 0; k < num_classes; ++k)
    fused.push_back(ag::add_many(g, per_class[static_cast<size_t>(k)]));
  return fused;
}

StageAttentionOut StageAttention::modulate(ag::Graph& g, ag::Var stage_mask, ag::Var dec_feat,
                                           const Tensor& image, Modulation mode,
                                           bool training) const {
  ag::Var p_o = embed_image(g, image);
  ag::Var p_e = embed_edges(g, image);
  ag::Var r = per_category(g, dec_feat);
  StageAttentionOut out;
  out.class_maps = attention_maps(g, p_o, p_e, r, training);
  ag::Var attn4 = ag::stack_last(g, out.class_maps);  // (B,g,g,Nc)

  const i64 mask_side = g.val(stage_mask).dim(1);
  ag::Var pooled = ag::avg_pool(g, stage_mask, mask_side / grid);
  if (mode == Modulation::kStrict)
    out.modulated = ag::mul(g, attn4, pooled);
  else
    out.modulated = ag::mul(g, ag::add_scalar(g, attn4, 1.0), pooled);
  return out;
}

}  // namespace smallseg::attn
