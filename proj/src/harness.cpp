#include "smallseg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "smallseg/image_io.hpp"
#include "smallseg/plots.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace smallseg::harness {

// ---------------------------------------------------------------------------
// config plumbing
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  model.validate();
  curriculum.validate();
  if (optim.batch_size < 1) throw std::invalid_argument("optim: batch_size < 1");
  if (optim.max_epochs < 0) throw std::invalid_argument("optim: max_epochs < 0");
  if (optim.lr <= 0.0) throw std::invalid_argument("optim: lr <= 0");
  if (data.mode != "synthetic" && data.mode != "dir")
    throw std::invalid_argument("data: mode must be synthetic or dir");
  if (data.mode == "dir" && data.dir.empty())
    throw std::invalid_argument("data: dir mode needs a directory");
}

std::string ExperimentConfig::variant_name() const {
  const bool e = model.encf_on, t = model.tcma_on, c = curriculum.enabled;
  if (e && t && c) return "full";
  if (!e && !t && !c) return "baseline";
  if (t && e && !c) return "+TCMA+EnCF";
  if (e && c && !t) return "+EnCF+CL";
  if (t && c && !e) return "+TCMA+CL";
  if (e) return "+EnCF";
  if (t) return "+TCMA";
  return "+CL";
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["model"] = json::parse(model.to_json());
  j["data"]["mode"] = data.mode;
  j["data"]["dir"] = data.dir;
  j["data"]["augment"] = data.augment;
  auto& s = j["data"]["synth"];
  s["n_samples"] = data.synth.n_samples;
  s["image_size"] = data.synth.image_size;
  s["num_classes"] = data.synth.num_classes;
  s["texture_amp"] = data.synth.texture_amp;
  s["blur_sigma"] = data.synth.blur_sigma;
  s["count_min"] = data.synth.count_min;
  s["count_max"] = data.synth.count_max;
  s["s_lo"] = data.synth.s_lo;
  s["s_hi"] = data.synth.s_hi;
  s["m_lo"] = data.synth.m_lo;
  s["m_hi"] = data.synth.m_hi;
  s["l_lo"] = data.synth.l_lo;
  s["l_hi"] = data.synth.l_hi;
  s["zero_lesion_share"] = data.synth.zero_lesion_share;
  s["test_fraction"] = data.synth.test_fraction;
  s["seed"] = data.synth.seed;
  s["split_seed"] = data.synth.split_seed;
  j["curriculum"]["enabled"] = curriculum.enabled;
  j["curriculum"]["lambda"] = curriculum.lambda;
  j["curriculum"]["v_min"] = curriculum.v_min;
  j["curriculum"]["epsilon"] = curriculum.epsilon;
  j["curriculum"]["patience"] = curriculum.patience;
  j["curriculum"]["alpha_ramp"] = curriculum.alpha_ramp;
  j["optim"]["lr"] = optim.lr;
  j["optim"]["weight_decay"] = optim.weight_decay;
  j["optim"]["batch_size"] = optim.batch_size;
  j["optim"]["max_epochs"] = optim.max_epochs;
  j["optim"]["cosine"] = optim.cosine;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["eval_every"] = eval_every;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  auto j = json::parse(text);
  ExperimentConfig c;
  if (j.contains("model")) c.model = net::ModelConfig::from_json(j["model"].dump());
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data.mode = d.value("mode", c.data.mode);
    c.data.dir = d.value("dir", c.data.dir);
    c.data.augment = d.value("augment", c.data.augment);
    if (d.contains("synth")) {
      const auto& s = d["synth"];
      auto& g = c.data.synth;
      g.n_samples = s.value("n_samples", g.n_samples);
      g.image_size = s.value("image_size", g.image_size);
      g.num_classes = s.value("num_classes", g.num_classes);
      g.texture_amp = s.value("texture_amp", g.texture_amp);
      g.blur_sigma = s.value("blur_sigma", g.blur_sigma);
      g.count_min = s.value("count_min", g.count_min);
      g.count_max = s.value("count_max", g.count_max);
      g.s_lo = s.value("s_lo", g.s_lo);
      g.s_hi = s.value("s_hi", g.s_hi);
      g.m_lo = s.value("m_lo", g.m_lo);
      g.m_hi = s.value("m_hi", g.m_hi);
      g.l_lo = s.value("l_lo", g.l_lo);
      g.l_hi = s.value("l_hi", g.l_hi);
      g.zero_lesion_share = s.value("zero_lesion_share", g.zero_lesion_share);
      g.test_fraction = s.value("test_fraction", g.test_fraction);
      g.seed = s.value("seed", g.seed);
      g.split_seed = s.value("split_seed", g.split_seed);
    }
  }
  if (j.contains("curriculum")) {
    const auto& q = j["curriculum"];
    c.curriculum.enabled = q.value("enabled", c.curriculum.enabled);
    c.curriculum.lambda = q.value("lambda", c.curriculum.lambda);
    c.curriculum.v_min = q.value("v_min", c.curriculum.v_min);
    c.curriculum.epsilon = q.value("epsilon", c.curriculum.epsilon);
    c.curriculum.patience = q.value("patience", c.curriculum.patience);
    c.curriculum.alpha_ramp = q.value("alpha_ramp", c.curriculum.alpha_ramp);
  }
  if (j.contains("optim")) {
    const auto& o = j["optim"];
    c.optim.lr = o.value("lr", c.optim.lr);
    c.optim.weight_decay = o.value("weight_decay", c.optim.weight_decay);
    c.optim.batch_size = o.value("batch_size", c.optim.batch_size);
    c.optim.max_epochs = o.value("max_epochs", c.optim.max_epochs);
    c.optim.cosine = o.value("cosine", c.optim.cosine);
  }
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.eval_every = j.value("eval_every", c.eval_every);
  return c;
}

// ---------------------------------------------------------------------------
// run record serialization
// ---------------------------------------------------------------------------

namespace {

json metric_values_json(const metrics::MetricValues& m) {
  auto put = [](double v) { return metrics::is_defined(v) ? json(v) : json(nullptr); };
  json j;
  j["miou"] = put(m.miou);
  j["dsc"] = put(m.dsc);
  j["acc"] = put(m.acc);
  j["spe"] = put(m.spe);
  j["sen"] = put(m.sen);
  return j;
}

metrics::MetricValues metric_values_from(const json& j) {
  auto get = [&](const char* k) {
    return j.at(k).is_null() ? metrics::kUndefined : j.at(k).get<double>();
  };
  metrics::MetricValues m;
  m.miou = get("miou");
  m.dsc = get("dsc");
  m.acc = get("acc");
  m.spe = get("spe");
  m.sen = get("sen");
  return m;
}

json report_json(const metrics::MetricReport& r) {
  json j;
  j["overall"] = metric_values_json(r.overall);
  for (int b = 0; b < 3; ++b)
    j["bins"][static_cast<size_t>(b)] = metric_values_json(r.per_bin[static_cast<size_t>(b)]);
  j["bin_counts"] = r.bin_counts;
  return j;
}

metrics::MetricReport report_from(const json& j) {
  metrics::MetricReport r;
  r.overall = metric_values_from(j.at("overall"));
  for (size_t b = 0; b < 3; ++b) {
    r.per_bin[b] = metric_values_from(j.at("bins").at(b));
    r.bin_counts[b] = j.at("bin_counts").at(b).get<i64>();
  }
  return r;
}

}  // namespace

std::string RunRecord::to_json() const {
  ordered_json j;
  j["variant"] = variant;
  j["seed"] = seed;
  j["epoch_weighted_loss"] = epoch_weighted_loss;
  j["epoch_mean_loss"] = epoch_mean_loss;
  j["curriculum_log"] = curriculum_log;
  json snaps = json::array();
  for (const auto& s : snapshots) {
    json e;
    e["epoch"] = s.epoch;
    e["test"] = report_json(s.test);
    snaps.push_back(e);
  }
  j["snapshots"] = snaps;
  j["final_train"] = report_json(final_train);
  j["final_test"] = report_json(final_test);
  j["final_weights"] = final_weights;
  j["param_count"] = param_count;
  j["wall_seconds"] = wall_seconds;
  j["checkpoint_path"] = checkpoint_path;
  return j.dump(2);
}

RunRecord RunRecord::from_json(const std::string& text) {
  auto j = json::parse(text);
  RunRecord r;
  r.variant = j.at("variant").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epoch_weighted_loss = j.at("epoch_weighted_loss").get<std::vector<double>>();
  r.epoch_mean_loss = j.at("epoch_mean_loss").get<std::vector<double>>();
  r.curriculum_log = j.at("curriculum_log").get<std::vector<std::string>>();
  for (const auto& e : j.at("snapshots")) {
    MetricSnapshot s;
    s.epoch = e.at("epoch").get<int>();
    s.test = report_from(e.at("test"));
    r.snapshots.push_back(s);
  }
  r.final_train = report_from(j.at("final_train"));
  r.final_test = report_from(j.at("final_test"));
  r.final_weights = j.at("final_weights").get<std::vector<double>>();
  r.param_count = j.at("param_count").get<i64>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

void AdamW::init(const ag::ParamStore& ps, const OptimConfig& cfg) {
  cfg_ = cfg;
  m_.clear();
  v_.clear();
  t_ = 0;
  for (const auto& p : ps.all()) {
    m_.push_back(Tensor(p->value.shape()));
    v_.push_back(Tensor(p->value.shape()));
  }
}

void AdamW::step(ag::ParamStore& ps, double lr_now) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& params = ps.all();
  for (size_t i = 0; i < params.size(); ++i) {
    ag::Parameter& p = *params[i];
    if (!p.learnable) continue;
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const i64 n = p.value.numel();
#pragma omp parallel for schedule(static)
    for (i64 k = 0; k < n; ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr_now * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[k]);
    }
  }
}

// ---------------------------------------------------------------------------
// data loading
// ---------------------------------------------------------------------------

LoadedData load_data(const DataConfig& cfg) {
  LoadedData out;
  if (cfg.mode == "synthetic") {
    out.dataset = data::generate_dataset(cfg.synth);
  } else {
    out.dataset = data::load_dataset(cfg.dir);
  }
  out.bins = data::bins_from_manifest(out.dataset);
  for (size_t i = 0; i < out.dataset.size(); ++i) {
    if (out.dataset.manifest[i].split == "test")
      out.test_idx.push_back(i);
    else
      out.train_idx.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

Tensor batch_images(const data::Dataset& ds, const std::vector<size_t>& idx, size_t from,
                    size_t count) {
  const auto& first = ds.samples[idx[from]];
  Tensor out({static_cast<i64>(count), first.height, first.width, 3});
  for (size_t b = 0; b < count; ++b) {
    const auto& s = ds.samples[idx[from + b]];
    std::copy(s.image.data(), s.image.data() + s.image.numel(),
              out.data() + static_cast<i64>(b) * s.image.numel());
  }
  return out;
}

Tensor slice_sample(const Tensor& batch, i64 b) {
  const i64 H = batch.dim(1), W = batch.dim(2), C = batch.dim(3);
  Tensor out({H, W, C});
  std::copy(batch.data() + b * H * W * C, batch.data() + (b + 1) * H * W * C, out.data());
  return out;
}

}  // namespace

metrics::MetricReport evaluate_model(const net::Backbone& model, const data::Dataset& ds,
                                     const data::SizeBins& bins,
                                     const std::vector<size_t>& idx, int batch_size,
                                     const std::string& dump_dir) {
  const int nc = model.config().num_classes;
  std::vector<std::vector<int>> preds;
  preds.reserve(idx.size());
  for (size_t from = 0; from < idx.size(); from += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(static_cast<size_t>(batch_size), idx.size() - from);
    Tensor images = batch_images(ds, idx, from, count);
    ag::Graph g;
    net::ForwardResult fw = model.forward(g, images, false);
    const Tensor& logits = g.val(fw.logits);
    for (size_t b = 0; b < count; ++b)
      preds.push_back(net::decode_predictions(slice_sample(logits, static_cast<i64>(b)), nc));
    if (!dump_dir.empty() && from == 0 && !fw.stage_attention.empty()) {
      fs::create_directories(dump_dir);
      const int stages = model.config().stages();
      for (int s = 0; s < stages; ++s)
        for (int k = 0; k < nc; ++k) {
          const Tensor& a = g.val(fw.stage_attention[static_cast<size_t>(s * nc + k)]);
          const i64 side = a.dim(1);
          std::vector<float> pix(static_cast<size_t>(side * side));
          for (i64 i = 0; i < side * side; ++i) pix[static_cast<size_t>(i)] =
              static_cast<float>(a[i]);  // first sample of the batch
          char name[64];
          std::snprintf(name, sizeof(name), "tcma_stage%d_cls%d.tiff", s, k);
          io::write_tiff_f32((fs::path(dump_dir) / name).string(), static_cast<int>(side),
                             static_cast<int>(side), pix.data());
        }
    }
  }
  data::Dataset sub = data::subset(ds, idx);
  if (sub.size() == 0) return metrics::MetricReport{};
  return metrics::evaluate_stratified(preds, sub, bins, nc);
}

metrics::MetricReport evaluate(const std::string& checkpoint_path, const LoadedData& data,
                               const std::string& split, int batch_size,
                               const std::string& dump_dir) {
  ckpt::Loaded loaded = ckpt::read_checkpoint(checkpoint_path);
  net::ModelConfig mc = net::ModelConfig::from_json(loaded.config_json);
  if (mc.input_size != data.dataset.samples.at(0).height)
    throw std::invalid_argument("evaluate: checkpoint input size does not match dataset");
  ag::ParamStore ps;
  Rng rng(0);
  net::Backbone model(mc, ps, rng);
  ckpt::restore(loaded, ps);
  std::vector<size_t> idx;
  if (split == "train")
    idx = data.train_idx;
  else if (split == "test")
    idx = data.test_idx;
  else {
    idx.resize(data.dataset.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
  }
  return evaluate_model(model, data.dataset, data.bins, idx, batch_size, dump_dir);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

RunRecord train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  LoadedData data = load_data(cfg.data);
  if (data.train_idx.empty()) throw std::invalid_argument("train: empty training split");
  data::Dataset train_ds = data::subset(data.dataset, data.train_idx);
  const size_t n_train = train_ds.size();

  ag::ParamStore ps;
  Rng init_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0xA11CE);
  net::Backbone model(cfg.model, ps, init_rng);

  const bool cl_on = cfg.curriculum.enabled;
  curriculum::CurriculumState cl;
  cl.lambda = cfg.curriculum.lambda;
  cl.v = cl_on ? curriculum::init_weights(train_ds, cfg.curriculum.v_min)
               : std::vector<double>(n_train, 1.0);

  AdamW opt;
  opt.init(ps, cfg.optim);

  RunRecord rec;
  rec.variant = cfg.variant_name();
  rec.seed = cfg.seed;
  rec.param_count = ps.learnable_scalars();

  std::vector<double> losses(n_train, 0.0);
  for (int epoch = 0; epoch < cfg.optim.max_epochs; ++epoch) {
    const double progress =
        static_cast<double>(epoch) / static_cast<double>(std::max(1, cfg.optim.max_epochs));
    const double lr_now =
        cfg.optim.cosine ? cfg.optim.lr * 0.5 * (1.0 + std::cos(3.141592653589793 * progress))
                         : cfg.optim.lr;

    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng erng(cfg.seed ^ (static_cast<std::uint64_t>(epoch) + 1) * 0xD1B54A32D192ED03ULL);
    shuffle(order, erng);

    for (size_t from = 0; from < n_train; from += static_cast<size_t>(cfg.optim.batch_size)) {
      const size_t count =
          std::min(static_cast<size_t>(cfg.optim.batch_size), n_train - from);
      const int side = cfg.model.input_size;
      Tensor images({static_cast<i64>(count), side, side, 3});
      std::vector<int> gt(count * static_cast<size_t>(side) * static_cast<size_t>(side));
      std::vector<double> w(count);
      for (size_t b = 0; b < count; ++b) {
        const size_t si = order[from + b];
        data::SegSample s = train_ds.samples[si];
        if (cfg.data.augment) {
          data::AugPolicy pol;
          pol.hflip = erng.uniform() < 0.5;
          pol.vflip = erng.uniform() < 0.5;
          pol.rot90 = erng.uniform() < 0.5;
          pol.brightness = true;
          s = data::augment(s, pol, erng.next_u64());
        }
        std::copy(s.image.data(), s.image.data() + s.image.numel(),
                  images.data() + static_cast<i64>(b) * s.image.numel());
        std::copy(s.mask.begin(), s.mask.end(),
                  gt.begin() + static_cast<std::ptrdiff_t>(b * s.mask.size()));
        w[b] = cl.v[si];
      }

      ag::Graph g;
      net::ForwardResult fw = model.forward(g, images, true);
      ag::Var lvec = ag::seg_loss(g, fw.logits, gt);
      ag::Var lsum = ag::weighted_mean(g, lvec, w);
      const double batch_loss = g.val(lsum)[0];
      if (!std::isfinite(batch_loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      for (size_t b = 0; b < count; ++b)
        losses[order[from + b]] = g.val(lvec)[static_cast<i64>(b)];
      ps.zero_grad();
      g.backward(lsum);
      opt.step(ps, lr_now);
      g.commit_staged_stats();
    }

    if (cl_on) {
      curriculum::epoch_update(cl, losses, cfg.curriculum);
    } else {
      cl.last_losses = losses;
      cl.epoch_loss_history.push_back(curriculum::weighted_epoch_loss(losses, cl.v));
    }
    rec.epoch_weighted_loss.push_back(cl.epoch_loss_history.back());
    rec.epoch_mean_loss.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) /
                                  static_cast<double>(n_train));
    rec.curriculum_log.push_back(curriculum::log_row(epoch, cl, losses));

    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
      MetricSnapshot snap;
      snap.epoch = epoch;
      snap.test = evaluate_model(model, data.dataset, data.bins, data.test_idx,
                                 cfg.optim.batch_size);
      rec.snapshots.push_back(snap);
    }
  }

  rec.final_train =
      evaluate_model(model, data.dataset, data.bins, data.train_idx, cfg.optim.batch_size);
  rec.final_test =
      evaluate_model(model, data.dataset, data.bins, data.test_idx, cfg.optim.batch_size);
  rec.final_weights = cl.v;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  fs::create_directories(cfg.out_dir);
  rec.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
  ckpt::write_checkpoint(rec.checkpoint_path, cfg.model.to_json(), ps);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "config.json");
    f << cfg.to_json() << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "train_metrics.csv");
    f << metrics::report_csv(rec.final_train);
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "test_metrics.csv");
    f << metrics::report_csv(rec.final_test);
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "curriculum_log.csv");
    f << curriculum::log_header() << "\n";
    for (const auto& row : rec.curriculum_log) f << row << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "run_record.json");
    f << rec.to_json() << "\n";
  }
  if (!rec.epoch_weighted_loss.empty()) {
    plots::line_plot((fs::path(cfg.out_dir) / "loss_curve.png").string(),
                     {{rec.variant + " weighted", rec.epoch_weighted_loss},
                      {rec.variant + " mean", rec.epoch_mean_loss}});
    plots::histogram_plot((fs::path(cfg.out_dir) / "weight_hist.png").string(),
                          {{"final weights", rec.final_weights}});
  }
  return rec;
}

// ---------------------------------------------------------------------------
// ablation report
// ---------------------------------------------------------------------------

namespace {

std::string fmt_cell(double v) {
  if (!metrics::is_defined(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

double metric_field(const metrics::MetricValues& m, int idx) {
  switch (idx) {
    case 0: return m.miou;
    case 1: return m.dsc;
    case 2: return m.acc;
    case 3: return m.spe;
    default: return m.sen;
  }
}

}  // namespace

void report(const std::vector<RunRecord>& records, const std::string& out_dir) {
  fs::create_directories(out_dir);
  static const char* kMetrics[5] = {"miou", "dsc", "acc", "spe", "sen"};
  static const char* kBins[3] = {"S", "M", "L"};

  std::string csv = "variant,seed";
  for (int m = 0; m < 5; ++m)
    for (int b = 0; b < 3; ++b)
      csv += std::string(",") + kMetrics[m] + "_" + kBins[b];
  csv += "\n";
  auto row_cells = [&](const metrics::MetricReport& r) {
    std::string out;
    for (int m = 0; m < 5; ++m)
      for (int b = 0; b < 3; ++b)
        out += "," + fmt_cell(metric_field(r.per_bin[static_cast<size_t>(b)], m));
    return out;
  };
  for (const auto& rec : records)
    csv += rec.variant + "," + std::to_string(rec.seed) + row_cells(rec.final_test) + "\n";

  // per-variant means over seeds, appended after the raw rows
  std::vector<std::string> seen;
  for (const auto& rec : records) {
    if (std::find(seen.begin(), seen.end(), rec.variant) != seen.end()) continue;
    seen.push_back(rec.variant);
    metrics::MetricReport mean;
    for (int m = 0; m < 5; ++m)
      for (int b = 0; b < 3; ++b) {
        double acc = 0.0;
        i64 n = 0;
        for (const auto& rec2 : records) {
          if (rec2.variant != rec.variant) continue;
          const double v = metric_field(rec2.final_test.per_bin[static_cast<size_t>(b)], m);
          if (metrics::is_defined(v)) {
            acc += v;
            ++n;
          }
        }
        double* slot = nullptr;
        metrics::MetricValues& mv = mean.per_bin[static_cast<size_t>(b)];
        switch (m) {
          case 0: slot = &mv.miou; break;
          case 1: slot = &mv.dsc; break;
          case 2: slot = &mv.acc; break;
          case 3: slot = &mv.spe; break;
          default: slot = &mv.sen; break;
        }
        *slot = n > 0 ? acc / static_cast<double>(n) : metrics::kUndefined;
      }
    csv += rec.variant + ",mean" + row_cells(mean) + "\n";
  }
  {
    std::ofstream f(fs::path(out_dir) / "ablation.csv");
    f << csv;
  }

  std::vector<plots::Series> loss_series, weight_series;
  for (const auto& rec : records) {
    const std::string label = rec.variant + "#" + std::to_string(rec.seed);
    loss_series.push_back({label, rec.epoch_weighted_loss});
    weight_series.push_back({label, rec.final_weights});
  }
  plots::line_plot((fs::path(out_dir) / "loss_curves.png").string(), loss_series);
  plots::histogram_plot((fs::path(out_dir) / "weight_distributions.png").string(),
                        weight_series);
}

}  // namespace smallseg::harness
