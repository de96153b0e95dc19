#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smallseg/tensor.hpp"

namespace smallseg::data {

/// One image/mask pair. The image is (H,W,3) in [0,1]; the mask holds class
/// ids row-major, 0 = background.
struct SegSample {
  int height = 0;
  int width = 0;
  Tensor image;            // (H,W,3)
  std::vector<int> mask;   // H*W
  double lesion_fraction = 0.0;
  std::string id;

  double recompute_fraction() const;
};

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string mask_path;
  double lesion_fraction = 0.0;
  std::string split = "train";  // "train" | "test"
  std::string bin;              // "S" | "M" | "L", filled after stratification
};

/// Samples and manifest share one canonical order; curriculum weights are
/// aligned to it.
struct Dataset {
  std::vector<SegSample> samples;
  std::vector<ManifestEntry> manifest;
  int num_classes = 2;
  size_t size() const { return samples.size(); }
};

enum class SizeBin { S = 0, M = 1, L = 2 };
const char* bin_name(SizeBin b);

struct SizeBins {
  double q30 = 0.0;  // lesion fraction at the 30th percentile rank
  double q60 = 0.0;
  std::map<std::string, SizeBin> assignment;
  SizeBin of(const std::string& id) const;
};

/// Synthesis parameters for a single sample.
struct SynthConfig {
  int image_size = 64;
  int num_classes = 2;
  double frac_lo = 0.001;  // target lesion area fraction range
  double frac_hi = 0.20;
  int count_min = 1;  // blobs per image; 0 gives an empty mask
  int count_max = 1;
  double texture_amp = 0.15;
  double blur_sigma = 1.0;

  void validate() const;  // rejects frac_hi > 0.5 or image_size < 16
};

/// Deterministic synthetic sample: smooth perturbed-ellipse blobs with an
/// intensity offset, blurred against a low-frequency textured background.
/// The mask is the exact rasterization (computed before any blurring).
SegSample generate_sample(std::uint64_t seed, const SynthConfig& cfg);

/// Dataset-level synthesis: cycles samples through the three target size
/// ranges, stratifies, and assigns the train/test split.
struct GenConfig {
  int n_samples = 64;
  int image_size = 64;
  int num_classes = 2;
  double texture_amp = 0.15;
  double blur_sigma = 1.0;
  int count_min = 1;
  int count_max = 2;
  double s_lo = 0.001, s_hi = 0.01;  // small
  double m_lo = 0.01, m_hi = 0.05;   // medium
  double l_lo = 0.05, l_hi = 0.20;   // large
  double zero_lesion_share = 0.0;    // fraction of samples generated with no lesion
  double test_fraction = 0.3;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 1234;
};
Dataset generate_dataset(const GenConfig& cfg);

/// Loads same-named 8-bit PNG pairs, lexicographically ordered. Mask pixel
/// values are class indices and must be < num_classes.
Dataset load_pairs(const std::string& image_dir, const std::string& mask_dir,
                   int num_classes = 2);

/// Quantile stratification over lesion_fraction: ascending sort with id
/// tie-break; ranks <= ceil(0.3N) are S, <= ceil(0.6N) are M, the rest L.
SizeBins stratify(const Dataset& ds);

/// Per-bin random test selection; writes "train"/"test" into the manifest.
void assign_split(Dataset& ds, const SizeBins& bins, double test_fraction,
                  std::uint64_t split_seed);

struct AugPolicy {
  bool hflip = false;
  bool vflip = false;
  bool rot90 = false;       // one quarter turn clockwise
  bool brightness = false;  // photometric only, never touches the mask
  double brightness_amp = 0.15;
};

/// Applies the policy in the order hflip, vflip, rot90, brightness. Geometric
/// transforms move image and mask identically; seed only drives the jitter.
SegSample augment(const SegSample& s, const AugPolicy& policy, std::uint64_t seed);

/// Copy of the selected samples, preserving relative order.
Dataset subset(const Dataset& ds, const std::vector<size_t>& indices);

// ---- persistence (images/, masks/, manifest.jsonl) ----
void save_dataset(const Dataset& ds, const SizeBins& bins, const std::string& dir);
Dataset load_dataset(const std::string& dir);
SizeBins bins_from_manifest(const Dataset& ds);

}  // namespace smallseg::data
