#include "smallseg/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace smallseg::curriculum {

void SchedulerConfig::validate() const {
  if (epsilon <= 0.0) throw std::invalid_argument("SchedulerConfig: epsilon must be > 0");
  if (patience < 1) throw std::invalid_argument("SchedulerConfig: patience must be >= 1");
  if (v_min <= 0.0 || v_min >= 1.0)
    throw std::invalid_argument("SchedulerConfig: v_min must be in (0,1)");
  if (alpha_ramp <= 0.0 || alpha_ramp > 1.0)
    throw std::invalid_argument("SchedulerConfig: alpha_ramp must be in (0,1]");
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("SchedulerConfig: lambda must be in [0,1]");
}

std::vector<double> init_weights(const data::Dataset& ds, double v_min) {
  if (ds.size() == 0) throw std::invalid_argument("init_weights: empty dataset");
  double lo = ds.samples[0].lesion_fraction, hi = lo;
  for (const auto& s : ds.samples) {
    lo = std::min(lo, s.lesion_fraction);
    hi = std::max(hi, s.lesion_fraction);
  }
  std::vector<double> v(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    const double norm =
        hi > lo ? (ds.samples[i].lesion_fraction - lo) / (hi - lo) : 0.5;
    v[i] = v_min + (1.0 - v_min) * norm;
  }
  return v;
}

std::vector<int> rank_losses(const std::vector<double>& losses) {
  for (double l : losses)
    if (!std::isfinite(l)) throw std::invalid_argument("rank_losses: non-finite loss");
  const size_t n = losses.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return losses[a] < losses[b]; });
  std::vector<int> ranks(n);
  for (size_t r = 0; r < n; ++r) ranks[order[r]] = static_cast<int>(r) + 1;
  return ranks;
}

double regularizer_value(const std::vector<double>& v, const std::vector<double>& losses,
                         double lambda) {
  if (v.size() != losses.size())
    throw std::invalid_argument("regularizer_value: size mismatch");
  const std::vector<int> ranks = rank_losses(losses);
  double rank_term = 0.0, sq_term = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    rank_term += 1.0 / static_cast<double>(ranks[i]);
    sq_term += v[i] * v[i];
  }
  return lambda * rank_term + (1.0 - lambda) * sq_term;
}

std::vector<double> update_weights(const CurriculumState& state,
                                   const std::vector<double>& losses,
                                   const SchedulerConfig& cfg) {
  if (state.v.size() != losses.size())
    throw std::invalid_argument("update_weights: size mismatch with state");
  const size_t n = losses.size();
  const std::vector<int> ranks = rank_losses(losses);
  std::vector<double> raw(n);
  if (state.phase == Phase::kEasyFirst) {
    // lowest loss -> rank 1 -> raw weight 1 after max-normalization
    for (size_t i = 0; i < n; ++i) raw[i] = 1.0 / static_cast<double>(ranks[i]);
  } else {
    // descending ranks: largest loss -> 1
    for (size_t i = 0; i < n; ++i)
      raw[i] = 1.0 / static_cast<double>(n + 1 - static_cast<size_t>(ranks[i]));
  }
  const double rmax = *std::max_element(raw.begin(), raw.end());
  for (double& r : raw) r /= rmax;

  std::vector<double> out(n);
  if (state.phase == Phase::kEasyFirst) {
    for (size_t i = 0; i < n; ++i)
      out[i] = std::clamp(state.lambda * raw[i] + (1.0 - state.lambda) * state.v[i],
                          cfg.v_min, 1.0);
  } else {
    const double alpha =
        std::min(1.0, cfg.alpha_ramp * static_cast<double>(state.epochs_in_hard_focus + 1));
    for (size_t i = 0; i < n; ++i)
      out[i] = std::clamp((1.0 - alpha) * state.v[i] + alpha * raw[i], cfg.v_min, 1.0);
  }
  return out;
}

bool detect_plateau(const std::vector<double>& history, const SchedulerConfig& cfg) {
  const i64 t = static_cast<i64>(history.size()) - 1;
  const i64 P = cfg.patience;
  if (t < P) return false;  // not enough history for a single comparison
  const i64 first = std::max<i64>(P, t - P + 1);
  for (i64 s = first; s <= t; ++s) {
    const double prev = history[static_cast<size_t>(s - P)];
    const double impr = (prev - history[static_cast<size_t>(s)]) / std::max(prev, 1e-12);
    if (impr >= cfg.epsilon) return false;
  }
  return true;
}

double weighted_epoch_loss(const std::vector<double>& losses, const std::vector<double>& v) {
  if (losses.size() != v.size())
    throw std::invalid_argument("weighted_epoch_loss: size mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    num += v[i] * losses[i];
    den += v[i];
  }
  if (den <= 0.0) throw std::logic_error("weighted_epoch_loss: weights sum to zero");
  return num / den;
}

void epoch_update(CurriculumState& state, const std::vector<double>& losses,
                  const SchedulerConfig& cfg) {
  state.last_losses = losses;
  state.epoch_loss_history.push_back(weighted_epoch_loss(losses, state.v));
  state.v = update_weights(state, losses, cfg);
  if (state.phase == Phase::kEasyFirst) {
    if (detect_plateau(state.epoch_loss_history, cfg)) state.phase = Phase::kHardFocus;
  } else {
    ++state.epochs_in_hard_focus;  // phase never returns to easy-first
  }
}

std::string log_header() {
  return "epoch,phase,lambda,v_min,v_mean,v_max,regularizer,weighted_loss,mean_loss";
}

std::string log_row(int epoch, const CurriculumState& state,
                    const std::vector<double>& losses) {
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (double w : state.v) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
    sum += w;
  }
  const double mean_v = sum / static_cast<double>(state.v.size());
  double mean_l = 0.0;
  for (double l : losses) mean_l += l;
  mean_l /= static_cast<double>(losses.size());
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.6g,%.6g,%.6g,%.6g,%.17g,%.17g,%.17g", epoch,
                state.phase == Phase::kEasyFirst ? "easy_first" : "hard_focus", state.lambda,
                lo, mean_v, hi, regularizer_value(state.v, losses, state.lambda),
                weighted_epoch_loss(losses, state.v), mean_l);
  return buf;
}

}  // namespace smallseg::curriculum
