#include "smallseg/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace smallseg::ag {

Parameter* ParamStore::add(const std::string& name, Tensor init, bool learnable) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->grad = Tensor(p->value.shape());
  p->learnable = learnable;
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  by_name_[name] = raw;
  return raw;
}

Parameter* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

i64 ParamStore::learnable_scalars() const {
  i64 n = 0;
  for (const auto& p : params_)
    if (p->learnable) n += p->value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

Var Graph::push(Tensor v, std::vector<Var> parents, std::function<void(Graph&, Var)> bw,
                bool needs, Parameter* bound) {
  Node n;
  n.val = std::move(v);
  n.parents = std::move(parents);
  n.bw = std::move(bw);
  n.bound = bound;
  n.needs_grad = needs;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Var Graph::make(Tensor v, std::vector<Var> parents, std::function<void(Graph&, Var)> bw) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_[static_cast<size_t>(p)].needs_grad;
  return push(std::move(v), std::move(parents), needs ? std::move(bw) : nullptr, needs,
              nullptr);
}

void Graph::backward(Var root) {
  if (val(root).numel() != 1)
    throw std::invalid_argument("Graph::backward: root must be scalar");
  grad(root)[0] = 1.0;
  for (Var i = static_cast<Var>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.bw && n.needs_grad && !n.grad.empty()) n.bw(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.bound && !n.grad.empty()) {
      double* g = n.bound->grad.data();
      const double* s = n.grad.data();
      for (i64 k = 0; k < n.grad.numel(); ++k) g[k] += s[k];
    }
  }
}

void Graph::commit_staged_stats() {
  for (auto& s : staged_stats) {
    double* v = s.buffer->value.data();
    const double* b = s.value.data();
    for (i64 i = 0; i < s.value.numel(); ++i)
      v[i] = (1.0 - s.momentum) * v[i] + s.momentum * b[i];
  }
  staged_stats.clear();
}

Tensor init_normal(std::vector<i64> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Tensor init_fanin(std::vector<i64> shape, Rng& rng) {
  if (shape.empty()) throw std::invalid_argument("init_fanin: empty shape");
  i64 fan_in = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return init_normal(std::move(shape), stddev, rng);
}

}  // namespace smallseg::ag
