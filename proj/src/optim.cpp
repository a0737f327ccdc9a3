#include "ptune/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ptune {

void AdamWHyper::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in (0,1)");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

void adamw_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                  std::span<double> v, std::uint64_t t, const AdamWHyper& hyper,
                  double lr) {
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    const double prev = w[i];
    w[i] = prev - lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon) - lr * hyper.lambda * prev;
  }
}

void adamw_step(std::span<const ParamUpdate> params, OptimState& state,
                const AdamWHyper& hyper) {
  hyper.validate();
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.slots[i].m.assign(params[i].tensor->size(), 0.0);
      state.slots[i].v.assign(params[i].tensor->size(), 0.0);
    }
  }
  if (state.slots.size() != params.size()) {
    throw std::invalid_argument("optimizer state holds " + std::to_string(state.slots.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamUpdate& p = params[i];
    const std::string name(p.name.empty() ? "#" + std::to_string(i) : std::string(p.name));
    if (p.tensor == nullptr) throw std::invalid_argument("null parameter " + name);
    if (!(p.lr >= 0.0)) throw std::invalid_argument("negative learning rate for " + name);
    const std::size_t n = p.tensor->size();
    if (state.slots[i].m.size() != n || state.slots[i].v.size() != n) {
      throw std::invalid_argument("optimizer state shape mismatch for " + name);
    }
    if (p.tensor->has_grad()) {
      if (p.tensor->grad().size() != n) {
        throw std::invalid_argument("gradient shape mismatch for " + name);
      }
      for (double g : p.tensor->grad()) {
        if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in parameter " + name);
      }
    }
  }
  state.t += 1;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].tensor;
    std::span<const double> g;
    if (w.has_grad()) {
      g = w.grad();
    } else {
      zeros.assign(w.size(), 0.0);
      g = zeros;
    }
    adamw_update(w.data(), g, state.slots[i].m, state.slots[i].v, state.t, hyper,
                 params[i].lr);
  }
}

double linear_schedule(std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw std::invalid_argument("total_steps must be at least 1");
  if (step > total_steps) {
    throw std::invalid_argument("step " + std::to_string(step) + " exceeds total_steps " +
                                std::to_string(total_steps));
  }
  return 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
}

std::vector<double> llrd_rates(double top_lr, double decay, std::size_t n_groups) {
  if (!(top_lr > 0.0)) throw std::invalid_argument("top_lr must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("decay must lie in (0,1]");
  if (n_groups == 0) throw std::invalid_argument("n_groups must be at least 1");
  std::vector<double> rates(n_groups);
  double r = top_lr;
  for (std::size_t k = 0; k < n_groups; ++k) {
    rates[k] = r;
    r *= decay;
  }
  return rates;
}

std::vector<double> grouped_llrd_rates(std::span<const double> group_rates,
                                       std::size_t n_groups) {
  if (group_rates.size() != n_groups) {
    throw std::invalid_argument("expected " + std::to_string(n_groups) +
                                " group rates, got " + std::to_string(group_rates.size()));
  }
  for (double r : group_rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw std::invalid_argument("group rates must be finite and non-negative");
    }
  }
  return {group_rates.begin(), group_rates.end()};
}

double surgical_rate(double base_lr, std::size_t data_size, std::size_t params) {
  if (params == 0) throw std::invalid_argument("division by zero parameter count");
  if (data_size == 0) throw std::invalid_argument("data_size must be positive");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("base_lr must be >= 0");
  return base_lr * std::sqrt(static_cast<double>(data_size)) /
         std::sqrt(static_cast<double>(params));
}

std::vector<double> surgical_rates(double base_lr, std::size_t data_size,
                                   std::span<const std::size_t> params_per_group,
                                   std::span<const int> mask) {
  if (params_per_group.size() != mask.size()) {
    throw std::invalid_argument("mask length must equal the number of groups");
  }
  std::vector<double> rates(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0 && mask[i] != 1) throw std::invalid_argument("mask entries must be 0 or 1");
    const double r = surgical_rate(base_lr, data_size, params_per_group[i]);
    rates[i] = mask[i] == 1 ? r : 0.0;
  }
  return rates;
}

void TuningPlan::validate() const {
  if (schedule.total_steps == 0) throw std::invalid_argument("total_steps must be at least 1");
  (void)group_rates();
}

std::string TuningPlan::policy_name() const {
  struct Namer {
    std::string operator()(const FullPolicy&) const { return "full"; }
    std::string operator()(const LlrdPolicy&) const { return "llrd"; }
    std::string operator()(const GroupedLlrdPolicy&) const { return "grouped_llrd"; }
    std::string operator()(const SurgicalPolicy&) const { return "surgical"; }
  };
  return std::visit(Namer{}, policy);
}

std::array<double, kGroupCount> TuningPlan::group_rates() const {
  std::array<double, kGroupCount> out{};
  if (const auto* full = std::get_if<FullPolicy>(&policy)) {
    if (!(full->lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    out.fill(full->lr);
  } else if (const auto* llrd = std::get_if<LlrdPolicy>(&policy)) {
    const std::vector<double> top_down = llrd_rates(llrd->top_lr, llrd->decay, kGroupCount);
    for (std::size_t g = 0; g < kGroupCount; ++g) out[g] = top_down[kGroupCount - 1 - g];
  } else if (const auto* grouped = std::get_if<GroupedLlrdPolicy>(&policy)) {
    const std::vector<double> r = grouped_llrd_rates(grouped->rates);
    std::copy(r.begin(), r.end(), out.begin());
  } else {
    const auto& s = std::get<SurgicalPolicy>(policy);
    const std::vector<double> r =
        surgical_rates(s.base_lr, s.data_size, s.params_per_group, s.mask);
    std::copy(r.begin(), r.end(), out.begin());
  }
  return out;
}

double effective_lr(const TuningPlan& plan, std::size_t group_index, std::size_t step) {
  if (group_index >= kGroupCount) {
    throw std::out_of_range("group index " + std::to_string(group_index) + " >= " +
                            std::to_string(kGroupCount));
  }
  const double multiplier = linear_schedule(step, plan.schedule.total_steps);
  return plan.group_rates()[group_index] * multiplier;
}

}  // namespace ptune
