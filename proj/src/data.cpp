#include "smallseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "smallseg/image_io.hpp"
#include "smallseg/rng.hpp"

namespace fs = std::filesystem;

namespace smallseg::data {

const char* bin_name(SizeBin b) {
  switch (b) {
    case SizeBin::S: return "S";
    case SizeBin::M: return "M";
    default: return "L";
  }
}

SizeBin SizeBins::of(const std::string& id) const {
  auto it = assignment.find(id);
  if (it == assignment.end()) throw std::out_of_range("no bin for sample " + id);
  return it->second;
}

double SegSample::recompute_fraction() const {
  i64 fg = 0;
  for (int v : mask) fg += v > 0 ? 1 : 0;
  return static_cast<double>(fg) / static_cast<double>(height * width);
}

void SynthConfig::validate() const {
  if (image_size < 16) throw std::invalid_argument("SynthConfig: image side < 16");
  if (frac_hi > 0.5 || frac_lo > 0.5)
    throw std::invalid_argument("SynthConfig: lesion area fraction exceeds 0.5");
  if (frac_lo < 0.0 || frac_hi < frac_lo)
    throw std::invalid_argument("SynthConfig: bad fraction range");
  if (count_min < 0 || count_max < count_min)
    throw std::invalid_argument("SynthConfig: bad count range");
  if (num_classes < 2) throw std::invalid_argument("SynthConfig: need >= 2 classes");
}

namespace {

// bilinear value noise on a coarse grid
void add_value_noise(Tensor& img, int side, int cell, double amp, Rng& rng) {
  const int gw = side / cell + 2;
  std::vector<double> grid(static_cast<size_t>(gw) * gw);
  for (auto& v : grid) v = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < side; ++y) {
    const double gy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      const double v00 = grid[static_cast<size_t>(y0 * gw + x0)];
      const double v01 = grid[static_cast<size_t>(y0 * gw + x0 + 1)];
      const double v10 = grid[static_cast<size_t>((y0 + 1) * gw + x0)];
      const double v11 = grid[static_cast<size_t>((y0 + 1) * gw + x0 + 1)];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) += amp * v;
    }
  }
}

void gaussian_blur(Tensor& img, int side, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  Tensor tmp({side, side, 3});
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, side - 1);
          acc += k[static_cast<size_t>(i + radius)] * img.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, side - 1);
          acc += k[static_cast<size_t>(i + radius)] * tmp.at(yy, x, c);
        }
        img.at(y, x, c) = acc;
      }
}

struct Blob {
  double cy, cx;       // center
  double a, b;         // ellipse radii (pixels)
  double theta;        // rotation
  double amp[3];       // boundary perturbation amplitude, harmonics 2..4
  double phase[3];
  int cls;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double u = (dx * ct + dy * st) / a;
    const double v = (-dx * st + dy * ct) / b;
    const double r = std::sqrt(u * u + v * v);
    const double phi = std::atan2(v, u);
    double rho = 1.0;
    for (int h = 0; h < 3; ++h) rho += amp[h] * std::cos((h + 2) * phi + phase[h]);
    return r <= rho;
  }
};

}  // namespace

SegSample generate_sample(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(0x5A17D00DULL ^ seed * 0x9E3779B97F4A7C15ULL);
  const int side = cfg.image_size;

  SegSample s;
  s.height = side;
  s.width = side;
  s.image = Tensor({side, side, 3});
  s.mask.assign(static_cast<size_t>(side) * side, 0);

  // textured background
  const double base = rng.uniform(0.35, 0.6);
  double chan[3];
  for (int c = 0; c < 3; ++c) chan[c] = base + rng.uniform(-0.05, 0.05);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = chan[c];
  add_value_noise(s.image, side, std::max(4, side / 4), cfg.texture_amp, rng);
  add_value_noise(s.image, side, std::max(2, side / 16), cfg.texture_amp * 0.5, rng);

  // blobs
  const int count =
      cfg.count_min +
      (cfg.count_max > cfg.count_min
           ? static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.count_max - cfg.count_min + 1)))
           : 0);
  std::vector<Blob> blobs;
  if (count > 0 && cfg.frac_hi > 0.0) {
    const double log_lo = std::log(std::max(cfg.frac_lo, 1e-6));
    const double log_hi = std::log(std::max(cfg.frac_hi, 1e-6));
    const double total_frac = std::exp(rng.uniform(log_lo, log_hi));
    for (int i = 0; i < count; ++i) {
      Blob b;
      const double area = total_frac * side * side / count;
      const double r0 = std::sqrt(area / 3.141592653589793);
      const double ecc = rng.uniform(0.75, 1.35);
      b.a = r0 * ecc;
      b.b = r0 / ecc;
      b.theta = rng.uniform(0.0, 3.141592653589793);
      const double margin = std::min(0.45 * side, std::max(b.a, b.b));
      b.cy = rng.uniform(margin, side - margin);
      b.cx = rng.uniform(margin, side - margin);
      for (int h = 0; h < 3; ++h) {
        b.amp[h] = rng.uniform(0.0, 0.15) / (h + 1);
        b.phase[h] = rng.uniform(0.0, 6.283185307179586);
      }
      b.cls = 1 + (cfg.num_classes > 2
                       ? static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.num_classes - 1)))
                       : 0);
      blobs.push_back(b);
    }
  }

  // exact rasterization at pixel centers
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (const Blob& b : blobs)
        if (b.contains(y + 0.5, x + 0.5)) {
          s.mask[static_cast<size_t>(y) * side + x] = b.cls;
          break;
        }

  // intensity offset inside the lesion, then blur the image only
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double doff = sign * rng.uniform(0.18, 0.38);
  static const double kChanScale[3] = {1.0, 0.85, 0.7};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if (s.mask[static_cast<size_t>(y) * side + x] > 0)
        for (int c = 0; c < 3; ++c) s.image.at(y, x, c) += doff * kChanScale[c];
  gaussian_blur(s.image, side, cfg.blur_sigma);
  for (i64 i = 0; i < s.image.numel(); ++i) s.image[i] = std::clamp(s.image[i], 0.0, 1.0);

  s.lesion_fraction = s.recompute_fraction();
  return s;
}

Dataset generate_dataset(const GenConfig& cfg) {
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  const int n_zero = static_cast<int>(std::llround(cfg.zero_lesion_share * cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) {
    SynthConfig sc;
    sc.image_size = cfg.image_size;
    sc.num_classes = cfg.num_classes;
    sc.texture_amp = cfg.texture_amp;
    sc.blur_sigma = cfg.blur_sigma;
    sc.count_min = cfg.count_min;
    sc.count_max = cfg.count_max;
    if (i < n_zero) {
      sc.count_min = sc.count_max = 0;
      sc.frac_lo = sc.frac_hi = 0.0;
    } else {
      switch (i % 3) {
        case 0: sc.frac_lo = cfg.s_lo; sc.frac_hi = cfg.s_hi; break;
        case 1: sc.frac_lo = cfg.m_lo; sc.frac_hi = cfg.m_hi; break;
        default: sc.frac_lo = cfg.l_lo; sc.frac_hi = cfg.l_hi; break;
      }
    }
    const std::uint64_t sample_seed =
        cfg.seed * 0x100000001B3ULL + static_cast<std::uint64_t>(i);
    SegSample s = generate_sample(sample_seed, sc);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%05d", i);
    s.id = buf;
    ManifestEntry e;
    e.id = s.id;
    e.lesion_fraction = s.lesion_fraction;
    ds.manifest.push_back(e);
    ds.samples.push_back(std::move(s));
  }
  SizeBins bins = stratify(ds);
  for (auto& e : ds.manifest) e.bin = bin_name(bins.of(e.id));
  assign_split(ds, bins, cfg.test_fraction, cfg.split_seed);
  return ds;
}

Dataset load_pairs(const std::string& image_dir, const std::string& mask_dir,
                   int num_classes) {
  Dataset ds;
  ds.num_classes = num_classes;
  std::vector<std::string> names;
  if (fs::exists(image_dir))
    for (const auto& ent : fs::directory_iterator(image_dir))
      if (ent.is_regular_file() && ent.path().extension() == ".png")
        names.push_back(ent.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const std::string ipath = (fs::path(image_dir) / name).string();
    const std::string mpath = (fs::path(mask_dir) / name).string();
    if (!fs::exists(mpath))
      throw std::runtime_error("missing mask for image " + name);
    io::ImageU8 img = io::read_png(ipath);
    io::ImageU8 msk = io::read_png(mpath);
    if (img.width != msk.width || img.height != msk.height)
      throw std::runtime_error("image/mask size mismatch for " + name);
    if (msk.channels != 1)
      throw std::runtime_error("mask must be single-channel: " + name);
    SegSample s;
    s.height = img.height;
    s.width = img.width;
    s.image = Tensor({img.height, img.width, 3});
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const int src = img.channels == 1 ? 0 : c;
          s.image.at(y, x, c) = img.at(y, x, src) / 255.0;
        }
    s.mask.resize(static_cast<size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const int v = msk.at(y, x, 0);
        if (v >= num_classes)
          throw std::runtime_error("mask value >= num_classes in " + name);
        s.mask[static_cast<size_t>(y) * img.width + x] = v;
      }
    s.lesion_fraction = s.recompute_fraction();
    s.id = fs::path(name).stem().string();
    ManifestEntry e;
    e.id = s.id;
    e.image_path = ipath;
    e.mask_path = mpath;
    e.lesion_fraction = s.lesion_fraction;
    ds.manifest.push_back(e);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

SizeBins stratify(const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("stratify: empty dataset");
  std::vector<std::pair<double, std::string>> order;
  order.reserve(ds.size());
  for (const auto& e : ds.manifest) order.emplace_back(e.lesion_fraction, e.id);
  std::sort(order.begin(), order.end());
  const i64 n = static_cast<i64>(order.size());
  const i64 s_cut = static_cast<i64>(std::ceil(0.3 * static_cast<double>(n)));
  const i64 m_cut = static_cast<i64>(std::ceil(0.6 * static_cast<double>(n)));
  SizeBins bins;
  bins.q30 = order[static_cast<size_t>(std::max<i64>(s_cut - 1, 0))].first;
  bins.q60 = order[static_cast<size_t>(std::max<i64>(m_cut - 1, 0))].first;
  for (i64 rank = 1; rank <= n; ++rank) {
    const auto& [frac, id] = order[static_cast<size_t>(rank - 1)];
    (void)frac;
    SizeBin b = rank <= s_cut ? SizeBin::S : rank <= m_cut ? SizeBin::M : SizeBin::L;
    bins.assignment[id] = b;
  }
  return bins;
}

void assign_split(Dataset& ds, const SizeBins& bins, double test_fraction,
                  std::uint64_t split_seed) {
  for (int b = 0; b < 3; ++b) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < ds.manifest.size(); ++i)
      if (bins.of(ds.manifest[i].id) == static_cast<SizeBin>(b)) idx.push_back(i);
    Rng rng(split_seed ^ (0xB1B0ULL + static_cast<std::uint64_t>(b)));
    shuffle(idx, rng);
    const size_t n_test =
        static_cast<size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    for (size_t i = 0; i < idx.size(); ++i)
      ds.manifest[idx[i]].split = i < n_test ? "test" : "train";
  }
}

SegSample augment(const SegSample& s, const AugPolicy& policy, std::uint64_t seed) {
  SegSample out = s;
  const int H = s.height, W = s.width;
  auto apply_geom = [&](auto&& f) {
    Tensor img({H, W, 3});
    std::vector<int> mask(static_cast<size_t>(H) * W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        auto [sy, sx] = f(y, x);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = out.image.at(sy, sx, c);
        mask[static_cast<size_t>(y) * W + x] = out.mask[static_cast<size_t>(sy) * W + sx];
      }
    out.image = std::move(img);
    out.mask = std::move(mask);
  };
  if (policy.hflip)
    apply_geom([&](int y, int x) { return std::pair<int, int>(y, W - 1 - x); });
  if (policy.vflip)
    apply_geom([&](int y, int x) { return std::pair<int, int>(H - 1 - y, x); });
  if (policy.rot90) {
    if (H != W) throw std::invalid_argument("augment: rot90 needs square images");
    // clockwise quarter turn: out(y, x) = in(H-1-x, y)
    apply_geom([&](int y, int x) { return std::pair<int, int>(H - 1 - x, y); });
  }
  if (policy.brightness) {
    Rng rng(0xB51ULL ^ seed * 0x9E3779B97F4A7C15ULL);
    const double f = 1.0 + policy.brightness_amp * rng.uniform(-1.0, 1.0);
    for (i64 i = 0; i < out.image.numel(); ++i)
      out.image[i] = std::clamp(out.image[i] * f, 0.0, 1.0);
  }
  out.lesion_fraction = out.recompute_fraction();
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<size_t>& indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  for (size_t i : indices) {
    out.samples.push_back(ds.samples.at(i));
    out.manifest.push_back(ds.manifest.at(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const SizeBins& bins, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream mf(fs::path(dir) / "manifest.jsonl");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  for (size_t i = 0; i < ds.size(); ++i) {
    const SegSample& s = ds.samples[i];
    io::ImageU8 img;
    img.width = s.width;
    img.height = s.height;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(s.width) * s.height * 3);
    for (i64 p = 0; p < s.image.numel(); ++p)
      img.pixels[static_cast<size_t>(p)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(s.image[p], 0.0, 1.0) * 255.0));
    io::ImageU8 msk;
    msk.width = s.width;
    msk.height = s.height;
    msk.channels = 1;
    msk.pixels.resize(s.mask.size());
    for (size_t p = 0; p < s.mask.size(); ++p)
      msk.pixels[p] = static_cast<std::uint8_t>(s.mask[p]);
    const std::string rel_img = "images/" + s.id + ".png";
    const std::string rel_msk = "masks/" + s.id + ".png";
    io::write_png((fs::path(dir) / rel_img).string(), img);
    io::write_png((fs::path(dir) / rel_msk).string(), msk);

    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["image"] = rel_img;
    j["mask"] = rel_msk;
    j["lesion_fraction"] = s.lesion_fraction;
    j["split"] = ds.manifest[i].split;
    j["bin"] = bin_name(bins.of(s.id));
    mf << j.dump() << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.jsonl");
  if (!mf) throw std::runtime_error("no manifest.jsonl in " + dir);
  Dataset ds;
  int max_cls = 1;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.image_path = (fs::path(dir) / j.at("image").get<std::string>()).string();
    e.mask_path = (fs::path(dir) / j.at("mask").get<std::string>()).string();
    e.lesion_fraction = j.at("lesion_fraction").get<double>();
    e.split = j.value("split", "train");
    e.bin = j.value("bin", "");

    io::ImageU8 img = io::read_png(e.image_path);
    io::ImageU8 msk = io::read_png(e.mask_path);
    if (img.width != msk.width || img.height != msk.height)
      throw std::runtime_error("image/mask size mismatch for " + e.id);
    SegSample s;
    s.height = img.height;
    s.width = img.width;
    s.image = Tensor({img.height, img.width, 3});
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const int src = img.channels == 1 ? 0 : c;
          s.image.at(y, x, c) = img.at(y, x, src) / 255.0;
        }
    s.mask.resize(static_cast<size_t>(img.height) * img.width);
    for (size_t p = 0; p < s.mask.size(); ++p) {
      s.mask[p] = msk.pixels[p * msk.channels];
      max_cls = std::max(max_cls, s.mask[p]);
    }
    s.lesion_fraction = s.recompute_fraction();
    s.id = e.id;
    ds.manifest.push_back(e);
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = max_cls + 1 < 2 ? 2 : max_cls + 1;
  return ds;
}

SizeBins bins_from_manifest(const Dataset& ds) {
  SizeBins bins;
  bool complete = true;
  for (const auto& e : ds.manifest) {
    if (e.bin == "S")
      bins.assignment[e.id] = SizeBin::S;
    else if (e.bin == "M")
      bins.assignment[e.id] = SizeBin::M;
    else if (e.bin == "L")
      bins.assignment[e.id] = SizeBin::L;
    else
      complete = false;
  }
  if (!complete) return stratify(ds);
  return bins;
}

}  // namespace smallseg::data
