#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ptune/autograd.hpp"

namespace ptune {

/// Builds a scalar loss from a leaf bound to the checked point.
using LeafFunction = std::function<Var(Graph&, Var)>;

/// Compares reverse-mode gradients at `point` against central differences
/// (f(x+eps*e) - f(x-eps*e)) / (2 eps), coordinate by coordinate. Returns the
/// largest |a - b| / max(|a|, |b|, 1e-8).
double grad_check(const LeafFunction& fn, const Tensor& point, double epsilon);

/// Same comparison for a tensor owned elsewhere (e.g. a model parameter).
/// `loss` must rebuild its graph from the current contents of `param`; the
/// tensor is perturbed in place and restored bit-exactly before returning.
double grad_check_tensor(const std::function<Var(Graph&)>& loss, Tensor& param,
                         double epsilon);

struct GradCheckCase {
  std::string name;
  std::uint64_t seed = 0;
  double max_relative_error = 0.0;
};

/// Every primitive plus the full toy-model loss over the given seeds, with
/// random shapes up to 8x8.
std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::uint64_t>& seeds,
                                               double epsilon = 1e-5);

}  // namespace ptune
