#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "smallseg/harness.hpp"

namespace fs = std::filesystem;
using namespace smallseg;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"small-lesion segmentation pipeline"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "synthesize an image/mask dataset");
  std::string gen_out = "dataset";
  data::GenConfig gen_cfg;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--n", gen_cfg.n_samples, "number of samples");
  gen->add_option("--size", gen_cfg.image_size, "image side");
  gen->add_option("--classes", gen_cfg.num_classes, "class count incl. background");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--split-seed", gen_cfg.split_seed, "train/test split seed");
  gen->add_option("--test-frac", gen_cfg.test_fraction, "per-bin test fraction");
  gen->add_option("--zero-share", gen_cfg.zero_lesion_share, "share of lesion-free samples");
  gen->add_option("--texture", gen_cfg.texture_amp, "background texture amplitude");

  // ---- stratify ----
  auto* strat = app.add_subcommand("stratify", "recompute size bins and split of a dataset");
  std::string strat_dir;
  double strat_test_frac = 0.3;
  std::uint64_t strat_split_seed = 1234;
  strat->add_option("--data", strat_dir, "dataset directory (manifest.jsonl)")->required();
  strat->add_option("--test-frac", strat_test_frac, "per-bin test fraction");
  strat->add_option("--split-seed", strat_split_seed, "split seed");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_out, tr_ablation, tr_data_dir;
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false, tr_out_set = false;
  int tr_epochs = -1, tr_batch = -1;
  double tr_lr = -1.0;
  std::vector<std::string> tr_sets;
  tr->add_option("--config", tr_config, "experiment config JSON file");
  tr->add_option("--seed", tr_seed, "run seed")->each([&](const std::string&) {
    tr_seed_set = true;
  });
  tr->add_option("--out", tr_out, "output directory")->each([&](const std::string&) {
    tr_out_set = true;
  });
  tr->add_option("--ablation", tr_ablation,
                 "comma-separated components to disable: encf,tcma,cl");
  tr->add_option("--data-dir", tr_data_dir, "train from this dataset directory");
  tr->add_option("--epochs", tr_epochs, "override max epochs");
  tr->add_option("--batch", tr_batch, "override batch size");
  tr->add_option("--lr", tr_lr, "override learning rate");
  tr->add_option("--set", tr_sets,
                 "config override as <json-pointer>=<value>, e.g. /model/embed_dim=16");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out = ".", ev_dump;
  int ev_batch = 16;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train|test|all");
  ev->add_option("--out", ev_out, "directory for metrics.csv");
  ev->add_option("--batch", ev_batch, "batch size");
  ev->add_option("--dump-attention", ev_dump, "directory for attention map TIFFs");

  // ---- report ----
  auto* rp = app.add_subcommand("report", "ablation table and plots from run records");
  std::vector<std::string> rp_records;
  std::string rp_out = "report";
  rp->add_option("records", rp_records, "run_record.json files")->required();
  rp->add_option("--out", rp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      data::Dataset ds = data::generate_dataset(gen_cfg);
      data::SizeBins bins = data::bins_from_manifest(ds);
      data::save_dataset(ds, bins, gen_out);
      std::cout << "wrote " << ds.size() << " samples to " << gen_out << "\n";
      std::cout << "bin thresholds: q30=" << bins.q30 << " q60=" << bins.q60 << "\n";
      return kOk;
    }
    if (strat->parsed()) {
      data::Dataset ds = data::load_dataset(strat_dir);
      data::SizeBins bins = data::stratify(ds);
      data::assign_split(ds, bins, strat_test_frac, strat_split_seed);
      for (auto& e : ds.manifest) e.bin = data::bin_name(bins.of(e.id));
      data::save_dataset(ds, bins, strat_dir);
      std::cout << "restratified " << ds.size() << " samples; q30=" << bins.q30
                << " q60=" << bins.q60 << "\n";
      return kOk;
    }
    if (tr->parsed()) {
      harness::ExperimentConfig cfg;
      if (!tr_config.empty())
        cfg = harness::ExperimentConfig::from_json(read_file(tr_config));
      if (tr_seed_set) cfg.seed = tr_seed;
      if (tr_out_set) cfg.out_dir = tr_out;
      if (!tr_data_dir.empty()) {
        cfg.data.mode = "dir";
        cfg.data.dir = tr_data_dir;
      }
      if (tr_epochs >= 0) cfg.optim.max_epochs = tr_epochs;
      if (tr_batch > 0) cfg.optim.batch_size = tr_batch;
      if (tr_lr > 0) cfg.optim.lr = tr_lr;
      if (!tr_ablation.empty()) {
        std::stringstream ss(tr_ablation);
        std::string part;
        while (std::getline(ss, part, ',')) {
          if (part == "encf")
            cfg.model.encf_on = false;
          else if (part == "tcma")
            cfg.model.tcma_on = false;
          else if (part == "cl")
            cfg.curriculum.enabled = false;
          else
            throw std::invalid_argument("unknown ablation component: " + part);
        }
      }
      if (!tr_sets.empty()) {
        auto j = nlohmann::json::parse(cfg.to_json());
        for (const auto& kv : tr_sets) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos)
            throw std::invalid_argument("--set expects <pointer>=<value>");
          j[nlohmann::json::json_pointer(kv.substr(0, eq))] =
              nlohmann::json::parse(kv.substr(eq + 1), nullptr, false).is_discarded()
                  ? nlohmann::json(kv.substr(eq + 1))
                  : nlohmann::json::parse(kv.substr(eq + 1));
        }
        cfg = harness::ExperimentConfig::from_json(j.dump());
      }
      harness::RunRecord rec = harness::train(cfg);
      std::cout << "variant " << rec.variant << " seed " << rec.seed << " done in "
                << rec.wall_seconds << "s; params " << rec.param_count << "\n";
      std::cout << "test metrics:\n" << metrics::report_csv(rec.final_test);
      return kOk;
    }
    if (ev->parsed()) {
      harness::DataConfig dc;
      dc.mode = "dir";
      dc.dir = ev_data;
      harness::LoadedData data = harness::load_data(dc);
      metrics::MetricReport r =
          harness::evaluate(ev_ckpt, data, ev_split, ev_batch, ev_dump);
      fs::create_directories(ev_out);
      std::ofstream f(fs::path(ev_out) / "metrics.csv");
      f << metrics::report_csv(r);
      std::cout << metrics::report_csv(r);
      return kOk;
    }
    if (rp->parsed()) {
      std::vector<harness::RunRecord> records;
      for (const auto& path : rp_records)
        records.push_back(harness::RunRecord::from_json(read_file(path)));
      harness::report(records, rp_out);
      std::cout << "wrote ablation.csv and plots to " << rp_out << "\n";
      return kOk;
    }
  } catch (const harness::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
