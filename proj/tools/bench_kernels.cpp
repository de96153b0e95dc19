// Times the serial reference kernels against the OpenMP versions and checks
// that both produce identical results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "smallseg/kernels.hpp"
#include "smallseg/rng.hpp"

using namespace smallseg;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

std::vector<double> rand_vec(i64 n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void row(const char* name, double t_ref, double t_omp, bool identical) {
  std::printf("%-18s %10.3f ms %10.3f ms %8.2fx   %s\n", name, t_ref * 1e3, t_omp * 1e3,
              t_ref / t_omp, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");
  std::printf("threads: %d\n", kern::thread_count());

  {  // linear forward, a decoder-sized projection
    const i64 R = 4096, K = 64, N = 128;
    auto x = rand_vec(R * K, rng), w = rand_vec(K * N, rng), b = rand_vec(N, rng);
    std::vector<double> y1(static_cast<size_t>(R * N)), y2 = y1;
    const double t1 = time_of(
        [&] { kern::ref::linear_fw(x.data(), w.data(), b.data(), y1.data(), R, K, N); }, 5);
    const double t2 = time_of(
        [&] { kern::omp::linear_fw(x.data(), w.data(), b.data(), y2.data(), R, K, N); }, 5);
    row("linear_fw", t1, t2, same(y1, y2));
  }
  {  // selective scan over a 16x16 grid, batch 16
    const i64 B = 16, L = 256, C = 64, N = 8;
    auto x = rand_vec(B * L * C, rng), bs = rand_vec(B * L * N, rng),
         cs = rand_vec(B * L * N, rng), D = rand_vec(C, rng);
    auto delta = rand_vec(B * L * C, rng);
    for (auto& d : delta) d = std::abs(d) * 0.05 + 1e-3;
    auto A = rand_vec(C * N, rng);
    for (auto& a : A) a = -std::abs(a) - 0.1;
    std::vector<double> y1(static_cast<size_t>(B * L * C)), y2 = y1;
    const double t1 = time_of(
        [&] {
          kern::ref::scan_fw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                             y1.data(), B, L, C, N);
        },
        5);
    const double t2 = time_of(
        [&] {
          kern::omp::scan_fw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                             y2.data(), B, L, C, N);
        },
        5);
    row("scan_fw", t1, t2, same(y1, y2));

    auto gy = rand_vec(B * L * C, rng);
    std::vector<double> gx1(x.size()), gd1(x.size()), gb1(bs.size()), gc1(cs.size()),
        ga1(A.size()), gD1(D.size());
    auto gx2 = gx1, gd2 = gd1, gb2 = gb1, gc2 = gc1, ga2 = ga1, gD2 = gD1;
    const double t3 = time_of(
        [&] {
          std::fill(gx1.begin(), gx1.end(), 0.0);
          kern::ref::scan_bw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                             gy.data(), gx1.data(), gd1.data(), gb1.data(), gc1.data(),
                             ga1.data(), gD1.data(), B, L, C, N);
        },
        3);
    const double t4 = time_of(
        [&] {
          std::fill(gx2.begin(), gx2.end(), 0.0);
          kern::omp::scan_bw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                             gy.data(), gx2.data(), gd2.data(), gb2.data(), gc2.data(),
                             ga2.data(), gD2.data(), B, L, C, N);
        },
        3);
    row("scan_bw", t3, t4, same(gx1, gx2) && same(ga1, ga2));
  }
  {  // conv2d on an attention-sized grid
    const i64 B = 16, H = 16, W = 16, Ci = 8, Co = 8, k = 7, pad = 3;
    auto x = rand_vec(B * H * W * Ci, rng), w = rand_vec(k * k * Ci * Co, rng),
         b = rand_vec(Co, rng);
    std::vector<double> y1(static_cast<size_t>(B * H * W * Co)), y2 = y1;
    const double t1 = time_of(
        [&] {
          kern::ref::conv2d_fw(x.data(), w.data(), b.data(), y1.data(), B, H, W, Ci, Co, k,
                               pad);
        },
        10);
    const double t2 = time_of(
        [&] {
          kern::omp::conv2d_fw(x.data(), w.data(), b.data(), y2.data(), B, H, W, Ci, Co, k,
                               pad);
        },
        10);
    row("conv2d_fw", t1, t2, same(y1, y2));
  }
  {  // layer norm over wide activations
    const i64 R = 65536, C = 64;
    auto x = rand_vec(R * C, rng), g = rand_vec(C, rng), b = rand_vec(C, rng);
    std::vector<double> y1(static_cast<size_t>(R * C)), y2 = y1, m1(static_cast<size_t>(R)),
        m2 = m1, s1 = m1, s2 = m1;
    const double t1 = time_of(
        [&] {
          kern::ref::layernorm_fw(x.data(), g.data(), b.data(), y1.data(), m1.data(),
                                  s1.data(), R, C, 1e-5);
        },
        5);
    const double t2 = time_of(
        [&] {
          kern::omp::layernorm_fw(x.data(), g.data(), b.data(), y2.data(), m2.data(),
                                  s2.data(), R, C, 1e-5);
        },
        5);
    row("layernorm_fw", t1, t2, same(y1, y2));
  }
  {  // patch-tensor contraction
    const i64 B = 16, P = 64, J = 16, C = 8, E = 8;
    auto O = rand_vec(B * P * J * C, rng), I = rand_vec(B * P * J, rng),
         Ev = rand_vec(B * P * J * E, rng);
    std::vector<double> o1(static_cast<size_t>(B * P * C * E)), o2 = o1;
    const double t1 = time_of(
        [&] {
          kern::ref::base_tensor_fw(O.data(), I.data(), Ev.data(), o1.data(), B, P, J, C, E);
        },
        10);
    const double t2 = time_of(
        [&] {
          kern::omp::base_tensor_fw(O.data(), I.data(), Ev.data(), o2.data(), B, P, J, C, E);
        },
        10);
    row("base_tensor_fw", t1, t2, same(o1, o2));
  }
  {  // per-sample segmentation loss
    const i64 B = 16, HW = 4096, K = 2;
    auto logits = rand_vec(B * HW * K, rng);
    std::vector<int> gt(static_cast<size_t>(B * HW));
    for (auto& v : gt) v = static_cast<int>(rng.uniform_int(2));
    std::vector<double> l1(static_cast<size_t>(B)), l2 = l1, ce(l1), dice(l1);
    const double t1 = time_of(
        [&] {
          kern::ref::seg_loss_fw(logits.data(), gt.data(), l1.data(), ce.data(), dice.data(),
                                 B, HW, K, 1e-6);
        },
        10);
    const double t2 = time_of(
        [&] {
          kern::omp::seg_loss_fw(logits.data(), gt.data(), l2.data(), ce.data(), dice.data(),
                                 B, HW, K, 1e-6);
        },
        10);
    row("seg_loss_fw", t1, t2, same(l1, l2));
  }
  return 0;
}
