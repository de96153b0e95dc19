#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "smallseg/rng.hpp"
#include "smallseg/tensor.hpp"

namespace smallseg::ag {

/// A named learnable tensor (or non-learnable buffer, e.g. norm statistics).
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool learnable = true;

  void zero_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    grad.zero();
  }
};

/// Owns all parameters of a model, keyed by name. Insertion order is the
/// canonical order used by the optimizer and the checkpoint format.
class ParamStore {
 public:
  Parameter* add(const std::string& name, Tensor init, bool learnable = true);
  Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  i64 learnable_scalars() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

using Var = int;
inline constexpr Var kNoVar = -1;

/// Reverse-mode tape. Nodes are appended in topological order during the
/// forward pass; backward() walks them in reverse. Gradient buffers are
/// allocated lazily, so nodes that never receive a gradient are skipped.
class Graph {
 public:
  struct Node {
    Tensor val;
    Tensor grad;  // empty until touched
    std::vector<Var> parents;
    std::function<void(Graph&, Var)> bw;  // null for leaves
    Parameter* bound = nullptr;
    bool needs_grad = false;
  };

  Var constant(Tensor v) { return push(std::move(v), {}, nullptr, false, nullptr); }
  Var input(Tensor v, bool needs_grad = false) {
    return push(std::move(v), {}, nullptr, needs_grad, nullptr);
  }
  Var param(Parameter* p) { return push(p->value, {}, nullptr, p->learnable, p); }

  Var make(Tensor v, std::vector<Var> parents, std::function<void(Graph&, Var)> bw);

  const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v)].val; }
  Tensor& val(Var v) { return nodes_[static_cast<size_t>(v)].val; }
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }
  bool has_grad(Var v) const { return !nodes_[static_cast<size_t>(v)].grad.empty(); }

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad(Var v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (n.grad.empty()) n.grad = Tensor(n.val.shape());
    return n.grad;
  }

  /// Accumulate into a parent's gradient only when the parent wants one.
  bool wants(Var v) const { return needs_grad(v); }

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse, then flushes
  /// leaf gradients into their bound parameters.
  void backward(Var root);

  size_t size() const { return nodes_.size(); }

  /// Batch statistics staged by norm layers during a training forward pass;
  /// the trainer applies them to the running buffers after the step.
  struct StagedStat {
    Parameter* buffer;
    Tensor value;
    double momentum;
  };
  std::vector<StagedStat> staged_stats;
  void commit_staged_stats();

 private:
  Var push(Tensor v, std::vector<Var> parents, std::function<void(Graph&, Var)> bw,
           bool needs, Parameter* bound);
  std::vector<Node> nodes_;
};

// ---- initializers ----
Tensor init_normal(std::vector<i64> shape, double stddev, Rng& rng);
/// Variance-scaled (fan-in) init for projection matrices shaped (K, N).
Tensor init_fanin(std::vector<i64> shape, Rng& rng);

}  // namespace smallseg::ag
