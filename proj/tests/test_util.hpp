#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "smallseg/ops.hpp"
#include "smallseg/rng.hpp"

namespace testutil {

using namespace smallseg;

inline Tensor random_tensor(std::vector<i64> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

/// Central finite-difference check of d(scalar)/d(inputs) for a graph builder.
/// `build` receives a graph plus leaf Vars for each input tensor and must
/// return a scalar Var. Returns the largest relative error over all input
/// coordinates.
inline double gradcheck(const std::function<ag::Var(ag::Graph&, const std::vector<ag::Var>&)>& build,
                        std::vector<Tensor> inputs, double step = 1e-4) {
  // analytic gradients
  std::vector<Tensor> analytic;
  {
    ag::Graph g;
    std::vector<ag::Var> vars;
    for (auto& t : inputs) vars.push_back(g.input(t, true));
    ag::Var out = build(g, vars);
    g.backward(out);
    for (ag::Var v : vars) analytic.push_back(g.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& ins) {
    ag::Graph g;
    std::vector<ag::Var> vars;
    for (const auto& t : ins) vars.push_back(g.input(t, false));
    return g.val(build(g, vars))[0];
  };
  double worst = 0.0;
  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    for (i64 i = 0; i < inputs[vi].numel(); ++i) {
      const double keep = inputs[vi][i];
      inputs[vi][i] = keep + step;
      const double fp = eval(inputs);
      inputs[vi][i] = keep - step;
      const double fm = eval(inputs);
      inputs[vi][i] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[vi][i];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace testutil
