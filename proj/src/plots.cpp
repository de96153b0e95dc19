#include "smallseg/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "smallseg/image_io.hpp"

namespace smallseg::plots {

namespace {

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> pix;  // RGB
  Canvas(int w_, int h_) : w(w_), h(h_), pix(static_cast<size_t>(w_) * h_ * 3, 255) {}
  void set(int x, int y, int r, int g, int b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    auto* p = &pix[(static_cast<size_t>(y) * w + x) * 3];
    p[0] = static_cast<std::uint8_t>(r);
    p[1] = static_cast<std::uint8_t>(g);
    p[2] = static_cast<std::uint8_t>(b);
  }
  void line(int x0, int y0, int x1, int y1, int r, int g, int b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
  void save(const std::string& path) const {
    io::ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels = pix;
    io::write_png(path, img);
  }
};

struct Color {
  int r, g, b;
};
const Color kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                          {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};

void write_legend(const std::string& path, const std::vector<Series>& series) {
  std::ofstream os(path);
  for (size_t i = 0; i < series.size(); ++i) {
    const Color& c = kPalette[i % 8];
    os << "rgb(" << c.r << "," << c.g << "," << c.b << ") " << series[i].label << "\n";
  }
}

}  // namespace

void line_plot(const std::string& path, const std::vector<Series>& series, int width,
               int height) {
  Canvas cv(width, height);
  const int ml = 50, mr = 15, mt = 15, mb = 35;
  const int pw = width - ml - mr, ph = height - mt - mb;

  double lo = 0.0, hi = 1.0;
  size_t max_n = 2;
  bool first = true;
  for (const auto& s : series)
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  for (const auto& s : series) max_n = std::max(max_n, s.values.size());
  if (hi <= lo) hi = lo + 1.0;

  // frame and horizontal gridlines
  cv.line(ml, mt, ml, mt + ph, 0, 0, 0);
  cv.line(ml, mt + ph, ml + pw, mt + ph, 0, 0, 0);
  for (int i = 1; i <= 4; ++i) {
    const int y = mt + ph - i * ph / 5;
    cv.line(ml, y, ml + pw, y, 225, 225, 225);
  }

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& vals = series[si].values;
    if (vals.size() < 2) continue;
    const Color& c = kPalette[si % 8];
    int px = -1, py = -1;
    for (size_t i = 0; i < vals.size(); ++i) {
      if (!std::isfinite(vals[i])) continue;
      const int x = ml + static_cast<int>(static_cast<double>(i) /
                                          static_cast<double>(max_n - 1) * pw);
      const int y = mt + ph - static_cast<int>((vals[i] - lo) / (hi - lo) * ph);
      if (px >= 0) cv.line(px, py, x, y, c.r, c.g, c.b);
      px = x;
      py = y;
    }
    // legend swatch
    const int sy = mt + 8 + static_cast<int>(si) * 10;
    for (int dx = 0; dx < 16; ++dx) cv.set(ml + 6 + dx, sy, c.r, c.g, c.b);
  }
  cv.save(path);
  write_legend(path + ".legend.txt", series);
}

void histogram_plot(const std::string& path, const std::vector<Series>& series, int bins,
                    int width, int height) {
  Canvas cv(width, height);
  const int ml = 50, mr = 15, mt = 15, mb = 35;
  const int pw = width - ml - mr, ph = height - mt - mb;

  std::vector<std::vector<double>> counts(series.size(),
                                          std::vector<double>(static_cast<size_t>(bins), 0.0));
  double peak = 1.0;
  for (size_t si = 0; si < series.size(); ++si) {
    for (double v : series[si].values) {
      if (!std::isfinite(v)) continue;
      int b = static_cast<int>(std::clamp(v, 0.0, 1.0) * bins);
      if (b == bins) b = bins - 1;
      counts[si][static_cast<size_t>(b)] += 1.0;
    }
    for (double c : counts[si]) peak = std::max(peak, c);
  }

  cv.line(ml, mt, ml, mt + ph, 0, 0, 0);
  cv.line(ml, mt + ph, ml + pw, mt + ph, 0, 0, 0);
  for (size_t si = 0; si < series.size(); ++si) {
    const Color& c = kPalette[si % 8];
    for (int b = 0; b < bins; ++b) {
      const int x0 = ml + b * pw / bins + 1;
      const int x1 = ml + (b + 1) * pw / bins - 1;
      const int hbar = static_cast<int>(counts[si][static_cast<size_t>(b)] / peak * ph);
      for (int x = x0; x <= x1; ++x)
        cv.line(x, mt + ph - hbar, x, mt + ph, c.r, c.g, c.b);
    }
  }
  cv.save(path);
  write_legend(path + ".legend.txt", series);
}

}  // namespace smallseg::plots
