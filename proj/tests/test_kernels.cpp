#include <doctest.h>

#include <cmath>
#include <vector>

#include "smallseg/kernels.hpp"
#include "smallseg/rng.hpp"

using namespace smallseg;

namespace {

std::vector<double> rand_vec(i64 n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal() * scale;
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

// The OpenMP kernels must reproduce the serial references exactly: they only
// parallelize over independent outputs and keep per-output accumulation order.

TEST_CASE("linear kernels: omp matches ref bit-for-bit") {
  Rng rng(7);
  const i64 R = 37, K = 19, N = 23;
  auto x = rand_vec(R * K, rng), w = rand_vec(K * N, rng), b = rand_vec(N, rng);
  std::vector<double> y1(static_cast<size_t>(R * N)), y2 = y1;
  kern::ref::linear_fw(x.data(), w.data(), b.data(), y1.data(), R, K, N);
  kern::omp::linear_fw(x.data(), w.data(), b.data(), y2.data(), R, K, N);
  CHECK(bit_equal(y1, y2));

  auto dy = rand_vec(R * N, rng);
  std::vector<double> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()),
      db1(b.size()), db2(b.size());
  kern::ref::linear_bw_x(dy.data(), w.data(), dx1.data(), R, K, N);
  kern::omp::linear_bw_x(dy.data(), w.data(), dx2.data(), R, K, N);
  kern::ref::linear_bw_w(x.data(), dy.data(), dw1.data(), R, K, N);
  kern::omp::linear_bw_w(x.data(), dy.data(), dw2.data(), R, K, N);
  kern::ref::linear_bw_b(dy.data(), db1.data(), R, N);
  kern::omp::linear_bw_b(dy.data(), db2.data(), R, N);
  CHECK(bit_equal(dx1, dx2));
  CHECK(bit_equal(dw1, dw2));
  CHECK(bit_equal(db1, db2));
}

TEST_CASE("norm kernels: omp matches ref bit-for-bit") {
  Rng rng(8);
  const i64 R = 41, C = 17;
  auto x = rand_vec(R * C, rng), g = rand_vec(C, rng), b = rand_vec(C, rng);
  std::vector<double> y1(x.size()), y2(x.size()), m1(static_cast<size_t>(R)), m2 = m1,
      s1 = m1, s2 = m1;
  kern::ref::layernorm_fw(x.data(), g.data(), b.data(), y1.data(), m1.data(), s1.data(), R, C,
                          1e-5);
  kern::omp::layernorm_fw(x.data(), g.data(), b.data(), y2.data(), m2.data(), s2.data(), R, C,
                          1e-5);
  CHECK(bit_equal(y1, y2));

  auto dy = rand_vec(R * C, rng);
  std::vector<double> dx1(x.size()), dx2(x.size()), dg1(g.size()), dg2(g.size()),
      db1(b.size()), db2(b.size());
  kern::ref::layernorm_bw(x.data(), g.data(), dy.data(), m1.data(), s1.data(), dx1.data(),
                          dg1.data(), db1.data(), R, C);
  kern::omp::layernorm_bw(x.data(), g.data(), dy.data(), m2.data(), s2.data(), dx2.data(),
                          dg2.data(), db2.data(), R, C);
  CHECK(bit_equal(dx1, dx2));
  CHECK(bit_equal(dg1, dg2));

  // batch norm, training mode
  std::vector<double> bm1(static_cast<size_t>(C)), bm2 = bm1, bv1 = bm1, bv2 = bm1;
  std::vector<double> est_m(static_cast<size_t>(C), 0.0), est_v(static_cast<size_t>(C), 1.0);
  kern::ref::batchnorm_fw(x.data(), g.data(), b.data(), est_m.data(), est_v.data(), true,
                          bm1.data(), bv1.data(), y1.data(), R, C, 1e-5);
  kern::omp::batchnorm_fw(x.data(), g.data(), b.data(), est_m.data(), est_v.data(), true,
                          bm2.data(), bv2.data(), y2.data(), R, C, 1e-5);
  CHECK(bit_equal(y1, y2));
  CHECK(bit_equal(bm1, bm2));
}

TEST_CASE("conv2d kernels: omp matches ref bit-for-bit") {
  Rng rng(9);
  const i64 B = 3, H = 9, W = 11, Ci = 5, Co = 4, k = 3, pad = 1;
  auto x = rand_vec(B * H * W * Ci, rng), w = rand_vec(k * k * Ci * Co, rng),
       b = rand_vec(Co, rng);
  std::vector<double> y1(static_cast<size_t>(B * H * W * Co)), y2 = y1;
  kern::ref::conv2d_fw(x.data(), w.data(), b.data(), y1.data(), B, H, W, Ci, Co, k, pad);
  kern::omp::conv2d_fw(x.data(), w.data(), b.data(), y2.data(), B, H, W, Ci, Co, k, pad);
  CHECK(bit_equal(y1, y2));

  auto dy = rand_vec(B * H * W * Co, rng);
  std::vector<double> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()),
      db1(b.size()), db2(b.size());
  kern::ref::conv2d_bw_x(dy.data(), w.data(), dx1.data(), B, H, W, Ci, Co, k, pad);
  kern::omp::conv2d_bw_x(dy.data(), w.data(), dx2.data(), B, H, W, Ci, Co, k, pad);
  kern::ref::conv2d_bw_w(x.data(), dy.data(), dw1.data(), B, H, W, Ci, Co, k, pad);
  kern::omp::conv2d_bw_w(x.data(), dy.data(), dw2.data(), B, H, W, Ci, Co, k, pad);
  kern::ref::conv2d_bw_b(dy.data(), db1.data(), B, H, W, Co);
  kern::omp::conv2d_bw_b(dy.data(), db2.data(), B, H, W, Co);
  CHECK(bit_equal(dx1, dx2));
  CHECK(bit_equal(dw1, dw2));
  CHECK(bit_equal(db1, db2));
}

TEST_CASE("scan kernels: omp matches ref bit-for-bit") {
  Rng rng(10);
  const i64 B = 4, L = 25, C = 7, N = 5;
  auto x = rand_vec(B * L * C, rng), bs = rand_vec(B * L * N, rng),
       cs = rand_vec(B * L * N, rng), D = rand_vec(C, rng);
  auto delta = rand_vec(B * L * C, rng);
  for (auto& d : delta) d = std::abs(d) * 0.1 + 1e-3;
  auto A = rand_vec(C * N, rng);
  for (auto& a : A) a = -std::abs(a) - 0.05;
  std::vector<double> y1(x.size()), y2(x.size());
  kern::ref::scan_fw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                     y1.data(), B, L, C, N);
  kern::omp::scan_fw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                     y2.data(), B, L, C, N);
  CHECK(bit_equal(y1, y2));

  auto gy = rand_vec(B * L * C, rng);
  std::vector<double> gx1(x.size()), gx2(x.size()), gd1(x.size()), gd2(x.size()),
      gb1(bs.size()), gb2(bs.size()), gc1(cs.size()), gc2(cs.size()), ga1(A.size()),
      ga2(A.size()), gD1(D.size()), gD2(D.size());
  kern::ref::scan_bw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                     gy.data(), gx1.data(), gd1.data(), gb1.data(), gc1.data(), ga1.data(),
                     gD1.data(), B, L, C, N);
  kern::omp::scan_bw(x.data(), delta.data(), bs.data(), cs.data(), A.data(), D.data(),
                     gy.data(), gx2.data(), gd2.data(), gb2.data(), gc2.data(), ga2.data(),
                     gD2.data(), B, L, C, N);
  CHECK(bit_equal(gx1, gx2));
  CHECK(bit_equal(gd1, gd2));
  CHECK(bit_equal(gb1, gb2));
  CHECK(bit_equal(gc1, gc2));
  CHECK(bit_equal(ga1, ga2));
  CHECK(bit_equal(gD1, gD2));
}

TEST_CASE("base tensor and loss kernels: omp matches ref bit-for-bit") {
  Rng rng(11);
  const i64 B = 3, P = 6, J = 9, C = 4, E = 5;
  auto O = rand_vec(B * P * J * C, rng), I = rand_vec(B * P * J, rng),
       Ev = rand_vec(B * P * J * E, rng);
  std::vector<double> o1(static_cast<size_t>(B * P * C * E)), o2 = o1;
  kern::ref::base_tensor_fw(O.data(), I.data(), Ev.data(), o1.data(), B, P, J, C, E);
  kern::omp::base_tensor_fw(O.data(), I.data(), Ev.data(), o2.data(), B, P, J, C, E);
  CHECK(bit_equal(o1, o2));

  auto go = rand_vec(B * P * C * E, rng);
  std::vector<double> gO1(O.size()), gO2(O.size()), gI1(I.size()), gI2(I.size()),
      gE1(Ev.size()), gE2(Ev.size());
  kern::ref::base_tensor_bw(O.data(), I.data(), Ev.data(), go.data(), gO1.data(), gI1.data(),
                            gE1.data(), B, P, J, C, E);
  kern::omp::base_tensor_bw(O.data(), I.data(), Ev.data(), go.data(), gO2.data(), gI2.data(),
                            gE2.data(), B, P, J, C, E);
  CHECK(bit_equal(gO1, gO2));
  CHECK(bit_equal(gI1, gI2));
  CHECK(bit_equal(gE1, gE2));

  const i64 HW = 64, K = 3;
  auto logits = rand_vec(B * HW * K, rng);
  std::vector<int> gt(static_cast<size_t>(B * HW));
  for (auto& v : gt) v = static_cast<int>(rng.uniform_int(K));
  std::vector<double> l1(static_cast<size_t>(B)), l2 = l1, ce1 = l1, ce2 = l1, d1 = l1,
      d2 = l1;
  kern::ref::seg_loss_fw(logits.data(), gt.data(), l1.data(), ce1.data(), d1.data(), B, HW, K,
                         1e-6);
  kern::omp::seg_loss_fw(logits.data(), gt.data(), l2.data(), ce2.data(), d2.data(), B, HW, K,
                         1e-6);
  CHECK(bit_equal(l1, l2));

  auto gl = rand_vec(B, rng);
  std::vector<double> dz1(logits.size()), dz2(logits.size());
  kern::ref::seg_loss_bw(logits.data(), gt.data(), gl.data(), dz1.data(), B, HW, K, 1e-6);
  kern::omp::seg_loss_bw(logits.data(), gt.data(), gl.data(), dz2.data(), B, HW, K, 1e-6);
  CHECK(bit_equal(dz1, dz2));
}

TEST_CASE("dispatch switch selects both paths") {
  Rng rng(12);
  const i64 R = 5, K = 4, N = 3;
  auto x = rand_vec(R * K, rng), w = rand_vec(K * N, rng);
  std::vector<double> y1(static_cast<size_t>(R * N)), y2 = y1;
  kern::set_parallel(false);
  kern::linear_fw(x.data(), w.data(), nullptr, y1.data(), R, K, N);
  kern::set_parallel(true);
  kern::linear_fw(x.data(), w.data(), nullptr, y2.data(), R, K, N);
  CHECK(bit_equal(y1, y2));
}
