#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ptune/optim.hpp"
#include "ptune/rng.hpp"

using namespace ptune;

namespace {

double one_step(double w, double g, double lr, double lambda) {
  Tensor p({1}, std::vector<double>{w}, true);
  p.ensure_grad()[0] = g;
  AdamWHyper h;
  h.lambda = lambda;
  OptimState s;
  const ParamUpdate u{"w", &p, lr};
  adamw_step(std::span<const ParamUpdate>(&u, 1), s, h);
  return p[0];
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("hyperparameter defaults") {
  const AdamWHyper h;
  CHECK(h.alpha == 1e-5);
  CHECK(h.beta1 == 0.9);
  CHECK(h.beta2 == 0.999);
  CHECK(h.lambda == 0.01);
  CHECK(h.epsilon == 1e-8);
}

TEST_CASE("adamw single-step examples") {
  // m = 0.05, v = 2.5e-4, m_hat = 0.5, v_hat = 0.25
  // m_hat = 0.5, sqrt(v_hat) = 0.5: w' = 1 - 0.1 * 0.5 / (0.5 + 1e-8) - decay.
  CHECK(std::fabs(one_step(1.0, 0.5, 0.1, 0.0) - 0.900000002) < 1e-12);
  CHECK(std::fabs(one_step(1.0, 0.5, 0.1, 0.01) - 0.899000002) < 1e-12);

  Tensor p({3}, std::vector<double>{0.5, -1.25, 3.0}, true);
  const std::vector<double> before = p.values();
  p.ensure_grad();
  AdamWHyper h;
  h.lambda = 0.0;
  OptimState s;
  const ParamUpdate u{"p", &p, 0.1};
  adamw_step(std::span<const ParamUpdate>(&u, 1), s, h);
  CHECK(std::memcmp(before.data(), p.values().data(), 24) == 0);
  CHECK(s.t == 1);
  for (double m : s.slots[0].m) CHECK(m == 0.0);
  for (double v : s.slots[0].v) CHECK(v == 0.0);
}

TEST_CASE("first update is -lr*g/(|g|+eps) for any betas") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const double g = rng.uniform(-5, 5), lr = rng.uniform(1e-4, 1e-1), w = rng.uniform(-2, 2);
    AdamWHyper h;
    h.lambda = 0.0;
    h.beta1 = rng.uniform(0.01, 0.99);
    h.beta2 = rng.uniform(0.01, 0.9999);
    std::vector<double> wv{w}, gv{g}, m{0.0}, v{0.0};
    adamw_update(wv, gv, m, v, 1, h, lr);
    const double expected = -lr * g / (std::fabs(g) + h.epsilon);
    CHECK(std::fabs((wv[0] - w) - expected) <= 1e-12 * std::max(1.0, std::fabs(expected)) + 1e-15);
  }
}

TEST_CASE("adamw state invariants and purity") {
  Rng rng(2);
  Tensor a({4, 3}, true), b({5}, true);
  for (double& x : a.data()) x = rng.normal();
  for (double& x : b.data()) x = rng.normal();
  OptimState s;
  AdamWHyper h;
  std::vector<ParamUpdate> ups = {{"a", &a, 1e-2}, {"b", &b, 5e-3}};
  for (int step = 1; step <= 20; ++step) {
    for (double& x : a.ensure_grad()) x = rng.normal();
    for (double& x : b.ensure_grad()) x = rng.normal();

    Tensor a2 = a, b2 = b;
    OptimState s2 = s;
    std::vector<ParamUpdate> ups2 = {{"a", &a2, 1e-2}, {"b", &b2, 5e-3}};
    adamw_step(ups, s, h);
    adamw_step(ups2, s2, h);
    CHECK(a.values() == a2.values());
    CHECK(b.values() == b2.values());
    CHECK(s.t == static_cast<std::uint64_t>(step));
    CHECK(s.slots[0].m.size() == a.size());
    CHECK(s.slots[1].v.size() == b.size());
    for (const Moments& mm : s.slots)
      for (double v : mm.v) CHECK(v >= 0.0);
  }
}

TEST_CASE("adamw errors") {
  Tensor p({2}, std::vector<double>{1, 2}, true);
  p.ensure_grad()[1] = NAN;
  OptimState s;
  const ParamUpdate u{"block0.attn.wq", &p, 0.1};
  CHECK_THROWS_WITH(adamw_step(std::span<const ParamUpdate>(&u, 1), s, AdamWHyper{}),
                    doctest::Contains("block0.attn.wq"));
  CHECK(p[0] == 1.0);
  CHECK(s.t == 0);

  Tensor q({2}, std::vector<double>{1, 2}, true);
  q.ensure_grad();
  const ParamUpdate neg{"q", &q, -1.0};
  CHECK_THROWS(adamw_step(std::span<const ParamUpdate>(&neg, 1), s, AdamWHyper{}));

  OptimState wrong;
  wrong.slots.push_back({std::vector<double>(3), std::vector<double>(3)});
  const ParamUpdate ok{"q", &q, 0.1};
  CHECK_THROWS_WITH(adamw_step(std::span<const ParamUpdate>(&ok, 1), wrong, AdamWHyper{}),
                    doctest::Contains("shape mismatch"));
}

TEST_CASE("zero rate freezes bit-exactly even with decay") {
  Rng rng(5);
  Tensor p({6}, true);
  for (double& x : p.data()) x = rng.normal();
  const std::vector<double> before = p.values();
  OptimState s;
  AdamWHyper h;
  h.lambda = 0.01;
  const ParamUpdate u{"p", &p, 0.0};
  for (int i = 0; i < 50; ++i) {
    for (double& g : p.ensure_grad()) g = rng.normal();
    adamw_step(std::span<const ParamUpdate>(&u, 1), s, h);
  }
  CHECK(std::memcmp(before.data(), p.values().data(), before.size() * 8) == 0);
}

TEST_CASE("linear schedule") {
  CHECK(linear_schedule(0, 10) == 1.0);
  CHECK(linear_schedule(10, 10) == 0.0);
  CHECK(linear_schedule(5, 10) == 0.5);
  CHECK_THROWS(linear_schedule(11, 10));
  CHECK_THROWS(linear_schedule(0, 0));
}

TEST_CASE("llrd rates") {
  const auto r = llrd_rates(1e-3, 0.9, 3);
  REQUIRE(r.size() == 3);
  CHECK(std::fabs(r[0] - 1e-3) < 1e-18);
  CHECK(std::fabs(r[1] - 9e-4) < 1e-18);
  CHECK(std::fabs(r[2] - 8.1e-4) < 1e-18);
  for (double v : llrd_rates(2e-3, 1.0, 5)) CHECK(v == 2e-3);
  CHECK(llrd_rates(7e-4, 0.5, 1) == std::vector<double>{7e-4});
  CHECK_THROWS(llrd_rates(1e-3, 0.0, 3));
  CHECK_THROWS(llrd_rates(1e-3, 1.5, 3));

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rr = llrd_rates(rng.uniform(1e-5, 1e-2), rng.uniform(0.05, 0.999), 2 + rng.below(8));
    for (std::size_t k = 1; k < rr.size(); ++k) CHECK(rr[k] < rr[k - 1]);
  }
}

TEST_CASE("grouped llrd rates") {
  const std::vector<double> rates = {1e-4, 2e-4, 3e-4, 4e-4, 5e-4};
  CHECK(grouped_llrd_rates(rates) == rates);
  CHECK_THROWS(grouped_llrd_rates(std::vector<double>{1e-4, 2e-4}));
  CHECK_THROWS(grouped_llrd_rates(std::vector<double>{1e-4, -2e-4, 0, 0, 0}));
}

TEST_CASE("surgical rates") {
  const std::vector<std::size_t> params = {100, 50, 75, 100, 125};
  const std::vector<int> mask = {0, 1, 1, 0, 0};
  const auto r = surgical_rates(0.001, 1000, params, mask);
  const std::vector<double> expected = {0, 0.004472135955, 0.0036514837, 0, 0};
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::fabs(r[i] - expected[i]) < 1e-10);
  CHECK(std::fabs(r[1] - 0.001 * std::sqrt(1000.0 / 50.0)) < 1e-15);

  CHECK_THROWS_WITH(surgical_rate(0.001, 100, 0), doctest::Contains("division by zero"));
  CHECK_THROWS(surgical_rates(0.001, 10, params, std::vector<int>{0, 1, 2, 0, 0}));
  CHECK_THROWS(surgical_rates(0.001, 10, params, std::vector<int>{0, 1, 1, 0}));
}

TEST_CASE("surgical scaling law") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const double base = rng.uniform(1e-5, 1e-1);
    const std::size_t data = 1 + rng.below(100000);
    std::vector<std::size_t> params(5);
    std::vector<int> mask(5);
    for (auto& p : params) p = 1 + rng.below(1000000);
    for (auto& m : mask) m = static_cast<int>(rng.below(2));
    const auto r = surgical_rates(base, data, params, mask);
    const auto r4 = surgical_rates(base, 4 * data, params, mask);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::fabs(r4[i] - 2.0 * r[i]) <= 1e-12 * std::max(1.0, r[i]));
    const std::size_t g = rng.below(5);
    auto params4 = params;
    params4[g] *= 4;
    const auto rp = surgical_rates(base, data, params4, mask);
    CHECK(std::fabs(rp[g] - 0.5 * r[g]) <= 1e-12);
  }
}

TEST_CASE("effective_lr examples") {
  TuningPlan full{FullPolicy{1e-5}, LinearSchedule{100}};
  for (std::size_t g = 0; g < 5; ++g) CHECK(effective_lr(full, g, 0) == 1e-5);

  TuningPlan llrd{LlrdPolicy{1e-3, 0.9}, LinearSchedule{100}};
  // One group below the top (G3 in bottom-to-top indexing).
  CHECK(std::fabs(effective_lr(llrd, 3, 50) - 4.5e-4) < 1e-15);
  CHECK(effective_lr(llrd, 4, 0) == 1e-3);
  CHECK(std::fabs(effective_lr(llrd, 0, 0) - 1e-3 * std::pow(0.9, 4)) < 1e-18);
  CHECK_THROWS(effective_lr(llrd, 5, 0));
  CHECK_THROWS(effective_lr(llrd, 0, 101));
}

TEST_CASE("schedule endpoints for every policy") {
  SurgicalPolicy s;
  s.base_lr = 1e-3;
  s.data_size = 900;
  s.params_per_group = {100, 50, 75, 100, 125};
  s.mask = {0, 1, 1, 0, 0};
  const std::vector<Policy> policies = {FullPolicy{3e-4}, LlrdPolicy{1e-3, 0.8},
                                        GroupedLlrdPolicy{{1e-4, 2e-4, 0.0, 4e-4, 5e-4}}, s};
  for (const Policy& policy : policies) {
    for (std::size_t total : {1u, 7u, 120u}) {
      TuningPlan plan{policy, LinearSchedule{total}};
      const auto rates = plan.group_rates();
      for (std::size_t g = 0; g < 5; ++g) {
        CHECK(effective_lr(plan, g, 0) == rates[g]);
        CHECK(effective_lr(plan, g, total) == 0.0);
      }
    }
  }
}

TEST_CASE("plan validation") {
  CHECK_THROWS(TuningPlan{LlrdPolicy{1e-3, 0.0}, LinearSchedule{10}}.validate());
  CHECK_THROWS(TuningPlan{FullPolicy{1e-3}, LinearSchedule{0}}.validate());
  SurgicalPolicy s;
  s.params_per_group = {1, 1, 1, 1, 1};
  s.mask = {0, 1, 3, 0, 0};
  CHECK_THROWS(TuningPlan{s, LinearSchedule{10}}.validate());
  CHECK(TuningPlan{GroupedLlrdPolicy{{1, 1, 1, 1, 1}}, LinearSchedule{1}}.policy_name() ==
        "grouped_llrd");
}

}  // TEST_SUITE
