#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "smallseg/checkpoint.hpp"
#include "smallseg/curriculum.hpp"
#include "smallseg/metrics.hpp"
#include "smallseg/net.hpp"

namespace smallseg::harness {

/// Raised when training hits a non-finite loss; the CLI maps it to exit 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int batch_size = 16;
  int max_epochs = 200;
  bool cosine = true;  // cosine decay of the learning rate over max_epochs
};

struct DataConfig {
  std::string mode = "synthetic";  // "synthetic" | "dir"
  std::string dir;                 // dataset directory when mode == "dir"
  data::GenConfig synth;           // generator settings when mode == "synthetic"
  bool augment = true;             // random flips/rotation/brightness during training
};

struct ExperimentConfig {
  net::ModelConfig model;
  DataConfig data;
  curriculum::SchedulerConfig curriculum;
  OptimConfig optim;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";
  int eval_every = 0;  // test-split evaluation cadence in epochs; 0 = final only

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& json);
  /// "variant" label derived from the ablation flags (baseline/+EnCF/.../full).
  std::string variant_name() const;
};

struct MetricSnapshot {
  int epoch = 0;
  metrics::MetricReport test;
};

struct RunRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<double> epoch_weighted_loss;
  std::vector<double> epoch_mean_loss;
  std::vector<std::string> curriculum_log;  // one CSV row per epoch
  std::vector<MetricSnapshot> snapshots;
  metrics::MetricReport final_train;
  metrics::MetricReport final_test;
  std::vector<double> final_weights;
  i64 param_count = 0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  std::string to_json() const;
  static RunRecord from_json(const std::string& json);
};

/// AdamW with optional cosine learning-rate decay; updates are elementwise
/// and deterministic.
class AdamW {
 public:
  void init(const ag::ParamStore& ps, const OptimConfig& cfg);
  void step(ag::ParamStore& ps, double lr_now);

 private:
  OptimConfig cfg_;
  std::vector<Tensor> m_, v_;
  i64 t_ = 0;
};

/// Loads (or synthesizes) the configured dataset together with its bins.
struct LoadedData {
  data::Dataset dataset;
  data::SizeBins bins;
  std::vector<size_t> train_idx;
  std::vector<size_t> test_idx;
};
LoadedData load_data(const DataConfig& cfg);

/// Full training run: the epoch loop computes per-sample losses, applies the
/// weighted objective, updates curriculum weights between epochs, and writes
/// checkpoint + logs + metric CSVs to cfg.out_dir.
RunRecord train(const ExperimentConfig& cfg);

/// Stratified evaluation of a checkpoint on a dataset split ("train", "test"
/// or "all"). dump_dir, when non-empty, writes per-stage attention maps for
/// the first sample as tcma_stage{i}_cls{k}.tiff.
metrics::MetricReport evaluate(const std::string& checkpoint_path, const LoadedData& data,
                               const std::string& split, int batch_size = 16,
                               const std::string& dump_dir = "");

/// In-memory evaluation used by train() and the tests.
metrics::MetricReport evaluate_model(const net::Backbone& model, const data::Dataset& ds,
                                     const data::SizeBins& bins,
                                     const std::vector<size_t>& idx, int batch_size,
                                     const std::string& dump_dir = "");

/// Ablation comparison table (rows = records, columns = five metrics per
/// size bin of the test split) plus loss-curve and weight-distribution plots.
void report(const std::vector<RunRecord>& records, const std::string& out_dir);

}  // namespace smallseg::harness
