#include "ptune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ptune {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  check_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw std::logic_error("rows() requires a rank-1 or rank-2 tensor");
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw std::logic_error("cols() requires a rank-1 or rank-2 tensor");
}

std::span<double> Tensor::ensure_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() {
  if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty vector");
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw std::out_of_range("target index " + std::to_string(target) +
                            " out of range for " + std::to_string(logits.size()) +
                            " classes");
  }
  if (logits.empty()) throw std::invalid_argument("empty vector");
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - peak);
  const double loss = std::log(total) - (logits[target] - peak);
  return loss < 0.0 ? 0.0 : loss;
}

}  // namespace ptune
