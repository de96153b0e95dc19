#include "smallseg/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace smallseg::metrics {

ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& gt, int cls) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("confusion: shape mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == cls;
    const bool g = gt[i] == cls;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

namespace {

double ratio(i64 num, i64 den) {
  return den == 0 ? kUndefined : static_cast<double>(num) / static_cast<double>(den);
}

double mean_defined(const std::vector<double>& vs) {
  double acc = 0.0;
  i64 n = 0;
  for (double v : vs)
    if (is_defined(v)) {
      acc += v;
      ++n;
    }
  return n == 0 ? kUndefined : acc / static_cast<double>(n);
}

}  // namespace

MetricValues compute_metrics(const std::vector<ConfusionCounts>& per_class) {
  if (per_class.size() < 2)
    throw std::invalid_argument("compute_metrics: need background + foreground counts");
  std::vector<double> ious, dscs, spes, sens;
  for (size_t k = 1; k < per_class.size(); ++k) {
    const auto& c = per_class[k];
    ious.push_back(ratio(c.tp, c.tp + c.fp + c.fn));
    dscs.push_back(ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn));
    spes.push_back(ratio(c.tn, c.tn + c.fp));
    sens.push_back(ratio(c.tp, c.tp + c.fn));
  }
  MetricValues m;
  m.miou = mean_defined(ious);
  m.dsc = mean_defined(dscs);
  m.spe = mean_defined(spes);
  m.sen = mean_defined(sens);
  // global pixel accuracy: every correctly labelled pixel is a tp for its class
  i64 correct = 0;
  for (const auto& c : per_class) correct += c.tp;
  m.acc = ratio(correct, per_class[0].total());
  return m;
}

MetricReport evaluate_stratified(const std::vector<std::vector<int>>& preds,
                                 const data::Dataset& ds, const data::SizeBins& bins,
                                 int num_classes) {
  if (preds.size() != ds.size())
    throw std::invalid_argument("evaluate_stratified: prediction count mismatch");
  std::array<std::vector<MetricValues>, 3> by_bin;
  std::vector<MetricValues> all;
  for (size_t i = 0; i < ds.size(); ++i) {
    std::vector<ConfusionCounts> counts;
    counts.reserve(static_cast<size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k)
      counts.push_back(confusion(preds[i], ds.samples[i].mask, k));
    MetricValues m = compute_metrics(counts);
    all.push_back(m);
    by_bin[static_cast<size_t>(bins.of(ds.samples[i].id))].push_back(m);
  }
  auto aggregate = [](const std::vector<MetricValues>& ms) {
    std::vector<double> miou, dsc, acc, spe, sen;
    for (const auto& m : ms) {
      miou.push_back(m.miou);
      dsc.push_back(m.dsc);
      acc.push_back(m.acc);
      spe.push_back(m.spe);
      sen.push_back(m.sen);
    }
    MetricValues out;
    out.miou = mean_defined(miou);
    out.dsc = mean_defined(dsc);
    out.acc = mean_defined(acc);
    out.spe = mean_defined(spe);
    out.sen = mean_defined(sen);
    return out;
  };
  MetricReport r;
  r.overall = aggregate(all);
  for (int b = 0; b < 3; ++b) {
    r.per_bin[static_cast<size_t>(b)] = aggregate(by_bin[static_cast<size_t>(b)]);
    r.bin_counts[static_cast<size_t>(b)] = static_cast<i64>(by_bin[static_cast<size_t>(b)].size());
  }
  return r;
}

namespace {

std::string cell(double v) {
  if (!is_defined(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

}  // namespace

std::string report_csv(const MetricReport& r) {
  std::string out = "metric,S,M,L,overall\n";
  const std::array<const char*, 5> names = {"miou", "dsc", "acc", "spe", "sen"};
  auto field = [](const MetricValues& m, int idx) {
    switch (idx) {
      case 0: return m.miou;
      case 1: return m.dsc;
      case 2: return m.acc;
      case 3: return m.spe;
      default: return m.sen;
    }
  };
  for (int i = 0; i < 5; ++i) {
    out += names[static_cast<size_t>(i)];
    for (int b = 0; b < 3; ++b) out += "," + cell(field(r.per_bin[static_cast<size_t>(b)], i));
    out += "," + cell(field(r.overall, i)) + "\n";
  }
  return out;
}

}  // namespace smallseg::metrics
