#pragma once

#include <string>
#include <vector>

#include "smallseg/attention.hpp"
#include "smallseg/layers.hpp"

namespace smallseg::net {

struct ModelConfig {
  int input_size = 64;
  int num_classes = 2;
  int embed_dim = 32;  // channels after patch embedding
  std::vector<int> enc_depths = {2, 2, 2};
  std::vector<int> dec_depths = {2, 2, 2};
  int state_size = 8;    // SSM state dimension per channel
  int ssm_expand = 2;    // inner width multiplier of the scan path
  int se_reduction = 4;  // channel-gate bottleneck ratio
  std::vector<int> patch_scales = {2, 4, 8};  // attention patch sides
  int attn_image_channels = 8;
  int attn_edge_channels = 8;
  int attn_hidden = 32;
  attn::Modulation modulation = attn::Modulation::kResidual;
  bool encf_on = true;  // channel gate inside every scan block
  bool tcma_on = true;  // patch-tensor modulation of the stage masks

  int stages() const { return static_cast<int>(enc_depths.size()); }
  /// Grid side of encoder stage i (0-based): input/4, halved per merge.
  int grid_side(int stage) const { return (input_size / 4) >> stage; }
  int stage_channels(int stage) const { return embed_dim << stage; }
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& json);
};

struct ForwardResult {
  ag::Var logits = ag::kNoVar;           // (B,H,W,Nc)
  std::vector<ag::Var> stage_masks;      // per decoder stage, after modulation
  std::vector<ag::Var> stage_attention;  // stage-major, class-minor (B,g,g); empty if off
};

/// The full segmentation network: patch embedding, scan-block encoder with
/// patch merging, mirrored decoder with patch expanding and additive skips,
/// a mask head per decoder stage (modulated by the patch-tensor attention
/// and summed into the final logits), and a final 4x expansion head.
class Backbone {
 public:
  Backbone(const ModelConfig& cfg, ag::ParamStore& ps, Rng& rng);

  /// Pure function of (params, images). `training` only selects batch-norm
  /// statistics inside the attention MLPs.
  ForwardResult forward(ag::Graph& g, const Tensor& images, bool training) const;

  const ModelConfig& config() const { return cfg_; }
  ag::ParamStore& params() const { return *ps_; }

 private:
  ModelConfig cfg_;
  ag::ParamStore* ps_;
  PatchEmbed embed_;
  std::vector<std::vector<ScanBlock>> enc_blocks_;
  std::vector<PatchMerge> merges_;
  std::vector<std::vector<ScanBlock>> dec_blocks_;
  std::vector<PatchExpand> expands_;
  std::vector<LinearM> stage_heads_;
  PatchExpand final_expand_;  // 4x
  LinearM final_head_;
  std::vector<attn::StageAttention> attn_;
};

/// Learnable scalar count for a config (running statistics excluded).
i64 count_params(const ModelConfig& cfg);

/// Argmax decoding of one sample's logits (H,W,Nc); ties go to the lower
/// class index.
std::vector<int> decode_predictions(const Tensor& logits, int num_classes);

}  // namespace smallseg::net
