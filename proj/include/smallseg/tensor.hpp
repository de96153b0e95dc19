#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace smallseg {

using i64 = std::int64_t;

/// Dense row-major tensor of doubles. Shapes are explicit; there is no
/// broadcasting at this level, kernels handle layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<i64> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(compute_numel(shape_)), 0.0);
  }
  Tensor(std::vector<i64> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<i64>(data_.size()) != compute_numel(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<i64> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<i64> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<i64>& shape() const { return shape_; }
  i64 dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  i64 numel() const { return static_cast<i64>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
  double operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

  /// Element access for up to 4 indices, row-major.
  double& at(i64 a) { return data_[static_cast<size_t>(a)]; }
  double& at(i64 a, i64 b) { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
  double& at(i64 a, i64 b, i64 c) {
    return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  double& at(i64 a, i64 b, i64 c, i64 d) {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }
  double at(i64 a) const { return data_[static_cast<size_t>(a)]; }
  double at(i64 a, i64 b) const { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
  double at(i64 a, i64 b, i64 c) const {
    return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  double at(i64 a, i64 b, i64 c, i64 d) const {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }

  /// Same data, new shape (sizes must agree).
  Tensor reshaped(std::vector<i64> shape) const {
    if (compute_numel(shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: numel mismatch");
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + ")";
  }

  static i64 compute_numel(const std::vector<i64>& shape) {
    i64 n = 1;
    for (i64 d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<i64> shape_;
  std::vector<double> data_;
};

inline void check_shape(const Tensor& t, const std::vector<i64>& expect,
                        const char* what) {
  if (t.shape() != expect)
    throw std::invalid_argument(std::string(what) + ": unexpected shape " + t.shape_str());
}

}  // namespace smallseg
