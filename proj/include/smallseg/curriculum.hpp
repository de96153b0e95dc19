#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smallseg/data.hpp"

namespace smallseg::curriculum {

enum class Phase { kEasyFirst, kHardFocus };

struct SchedulerConfig {
  double lambda = 0.7;      // blend between rank-derived weights and inertia
  double v_min = 0.1;       // weight floor
  double epsilon = 1e-3;    // plateau relative-improvement threshold
  int patience = 5;         // epochs
  double alpha_ramp = 0.2;  // hard-focus blend rate per epoch
  bool enabled = true;
  void validate() const;
};

/// Per-sample curriculum state, aligned to the dataset manifest order.
struct CurriculumState {
  std::vector<double> v;                  // weights in [v_min, 1]
  std::vector<double> last_losses;        // per-sample losses from the last epoch
  std::vector<double> epoch_loss_history; // mean weighted epoch losses
  Phase phase = Phase::kEasyFirst;
  int epochs_in_hard_focus = 0;
  double lambda = 0.7;
};

/// Size-based initialization: v0 = v_min + (1 - v_min) * minmax(lesion_fraction),
/// with the degenerate all-equal case mapping to 0.5. Larger lesions start
/// with higher weight.
std::vector<double> init_weights(const data::Dataset& ds, double v_min);

/// Ascending ordinal ranks: the smallest loss gets rank 1; ties break by
/// sample index. Throws on non-finite losses.
std::vector<int> rank_losses(const std::vector<double>& losses);

/// Verbatim evaluation of the logged regularizer:
/// g(v) = lambda * sum(1/rank(l_i)) + (1 - lambda) * sum(v_i^2).
double regularizer_value(const std::vector<double>& v, const std::vector<double>& losses,
                         double lambda);

/// Weight update. Easy-first phase blends max-normalized 1/rank weights with
/// the previous weights: v <- clamp(lambda*raw + (1-lambda)*v_prev, v_min, 1).
/// Hard-focus uses descending ranks (largest loss first) blended at a rate
/// that ramps by alpha_ramp per epoch spent in the phase.
std::vector<double> update_weights(const CurriculumState& state,
                                   const std::vector<double>& losses,
                                   const SchedulerConfig& cfg);

/// Plateau rule: at epoch t the window comparison is
/// c_s = (L[s-P] - L[s]) / max(L[s-P], 1e-12); the scheduler fires when every
/// available comparison among the trailing P satisfies c_s < epsilon.
bool detect_plateau(const std::vector<double>& history, const SchedulerConfig& cfg);

/// Normalized weighted loss sum(v*l)/sum(v); the unnormalized objective
/// sum(v*l) + g(v) is logged separately.
double weighted_epoch_loss(const std::vector<double>& losses, const std::vector<double>& v);

/// Applies one end-of-epoch curriculum step: records the epoch loss, updates
/// weights from the cached per-sample losses, and switches phase on plateau.
void epoch_update(CurriculumState& state, const std::vector<double>& losses,
                  const SchedulerConfig& cfg);

/// One CSV row per epoch: epoch, phase, lambda, min/mean/max of v, the
/// verbatim regularizer value, weighted and unweighted mean loss.
std::string log_header();
std::string log_row(int epoch, const CurriculumState& state,
                    const std::vector<double>& losses);

}  // namespace smallseg::curriculum
