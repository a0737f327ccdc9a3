#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptune {

/// Dense row-major tensor of doubles with an optional gradient buffer.
///
/// Invariants: product(shape) == data().size(); every dimension is positive;
/// when present the gradient has exactly the same number of elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         bool requires_grad = false);

  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view helpers. A rank-1 tensor is a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<double> grad() noexcept { return grad_; }
  std::span<const double> grad() const noexcept { return grad_; }
  // Allocates a zero gradient if absent.
  std::span<double> ensure_grad();
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }
  bool all_finite() const noexcept;

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);

/// -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, std::size_t target);

}  // namespace ptune
