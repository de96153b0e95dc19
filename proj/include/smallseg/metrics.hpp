#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "smallseg/data.hpp"

namespace smallseg::metrics {

/// Sentinel for 0/0 ratios; undefined values are excluded from every mean.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();
inline bool is_defined(double v) { return !std::isnan(v); }

struct ConfusionCounts {
  i64 tp = 0, fp = 0, tn = 0, fn = 0;
  i64 total() const { return tp + fp + tn + fn; }
};

/// Exact pixel counts treating cls as the positive class.
ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& gt, int cls);

struct MetricValues {
  double miou = kUndefined;
  double dsc = kUndefined;
  double acc = kUndefined;
  double spe = kUndefined;
  double sen = kUndefined;
};

/// Five metrics from per-class one-vs-rest counts (index = class id, index 0
/// is background). mIoU/DSC/SPE/SEN average the defined per-foreground-class
/// values; ACC is the global pixel accuracy.
MetricValues compute_metrics(const std::vector<ConfusionCounts>& per_class);

struct MetricReport {
  MetricValues overall;
  std::array<MetricValues, 3> per_bin;  // S, M, L
  std::array<i64, 3> bin_counts{0, 0, 0};
};

/// Per-sample metrics aggregated by unweighted mean over defined values,
/// per size bin and overall. One prediction (H*W class ids) per sample.
MetricReport evaluate_stratified(const std::vector<std::vector<int>>& preds,
                                 const data::Dataset& ds, const data::SizeBins& bins,
                                 int num_classes);

/// rows = metric, columns = S/M/L/overall, percentages with 2 decimals.
std::string report_csv(const MetricReport& r);

}  // namespace smallseg::metrics
