#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ptune/model.hpp"
#include "ptune/tensor.hpp"

namespace ptune {

struct AdamWHyper {
  double alpha = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lambda = 0.01;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const AdamWHyper&) const = default;
};

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

/// Per-parameter moments plus the shared step counter.
struct OptimState {
  std::vector<Moments> slots;
  std::uint64_t t = 0;
};

struct ParamUpdate {
  std::string_view name;
  Tensor* tensor = nullptr;
  double lr = 0.0;  // effective rate for this parameter's group
};

/// One decoupled-weight-decay Adam update of a flat buffer at step `t` (>= 1).
/// The decay term uses `lr` and the pre-update weights.
void adamw_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                  std::span<double> v, std::uint64_t t, const AdamWHyper& hyper, double lr);

/// Advances state.t by one and updates every parameter from its gradient
/// (a tensor without a gradient buffer counts as a zero gradient). All
/// gradients are validated before anything is modified.
void adamw_step(std::span<const ParamUpdate> params, OptimState& state,
                const AdamWHyper& hyper);

/// 1 - step/total_steps.
double linear_schedule(std::size_t step, std::size_t total_steps);

/// top_lr * decay^k for k = 0 (top) .. n_groups-1 (bottom).
std::vector<double> llrd_rates(double top_lr, double decay, std::size_t n_groups);

std::vector<double> grouped_llrd_rates(std::span<const double> group_rates,
                                       std::size_t n_groups = kGroupCount);

/// base_lr * sqrt(data_size) / sqrt(params).
double surgical_rate(double base_lr, std::size_t data_size, std::size_t params);

/// Per-group surgical rates multiplied by the binary mask.
std::vector<double> surgical_rates(double base_lr, std::size_t data_size,
                                   std::span<const std::size_t> params_per_group,
                                   std::span<const int> mask);

struct FullPolicy {
  double lr = 1e-5;
};
struct LlrdPolicy {
  double top_lr = 1e-3;
  double decay = 0.9;
};
struct GroupedLlrdPolicy {
  std::vector<double> rates;  // G0..G4
};
struct SurgicalPolicy {
  double base_lr = 1e-3;
  std::size_t data_size = 1;
  std::array<std::size_t, kGroupCount> params_per_group{};
  std::array<int, kGroupCount> mask{};
};
using Policy = std::variant<FullPolicy, LlrdPolicy, GroupedLlrdPolicy, SurgicalPolicy>;

struct LinearSchedule {
  std::size_t total_steps = 1;
};

struct TuningPlan {
  Policy policy;
  LinearSchedule schedule;

  void validate() const;
  std::string policy_name() const;
  /// Policy rates in group order G0 (embeddings) .. G4 (head). LLRD treats
  /// G4 as the top group.
  std::array<double, kGroupCount> group_rates() const;
};

/// Policy rate for the group times the linear schedule multiplier.
double effective_lr(const TuningPlan& plan, std::size_t group_index, std::size_t step);

}  // namespace ptune
