#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ptune/autograd.hpp"
#include "ptune/gradcheck.hpp"
#include "ptune/rng.hpp"
#include "ptune/tensor.hpp"

using namespace ptune;

TEST_SUITE("tensor") {

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS(Tensor({2, 3}, std::vector<double>(5, 0.0)));
  CHECK_THROWS(Tensor({2, 0}));
  t.ensure_grad();
  CHECK(t.grad().size() == t.size());
  CHECK(Tensor::scalar(2.5)[0] == 2.5);
}

TEST_CASE("softmax examples") {
  const auto u = softmax(std::vector<double>{0, 0, 0});
  for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto v = softmax(std::vector<double>{0, std::log(2.0)});
  CHECK(std::fabs(v[0] - 1.0 / 3.0) < 1e-15);
  CHECK(std::fabs(v[1] - 2.0 / 3.0) < 1e-15);

  const std::vector<double> x = {0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = x;
  for (double& s : shifted) s += 17.25;
  const auto a = softmax(x), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-15);

  CHECK_THROWS_WITH(softmax(std::vector<double>{}), doctest::Contains("empty vector"));
  CHECK_THROWS_WITH(softmax(std::vector<double>{1.0, NAN}), doctest::Contains("non-finite input"));
  CHECK_THROWS_WITH(softmax(std::vector<double>{INFINITY}), doctest::Contains("non-finite input"));
}

TEST_CASE("softmax sums to one for bounded inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(1 + rng.below(20));
    for (double& v : x) v = rng.uniform(-50.0, 50.0);
    const auto p = softmax(x);
    double total = 0.0;
    for (double q : p) {
      CHECK(q >= 0.0);
      total += q;
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy examples") {
  for (std::size_t v : {2u, 5u, 17u}) {
    CHECK(std::fabs(cross_entropy(std::vector<double>(v, 0.4), 0) - std::log(double(v))) < 1e-14);
  }
  const double expected = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0));
  CHECK(std::fabs(cross_entropy(std::vector<double>{10, 0, 0}, 0) - expected) < 1e-15);
  CHECK(cross_entropy(std::vector<double>{10, 0, 0}, 0) == doctest::Approx(9.08e-5).epsilon(1e-3));
  CHECK(cross_entropy(std::vector<double>{0, 12, 0}, 0) > std::log(2.0));
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{1, 2}, 2), std::out_of_range);
}

TEST_CASE("backward examples") {
  {
    Tensor x({1}, std::vector<double>{4.2}, true);
    Graph g;
    g.backward(ops::sum(g.param(x)));
    CHECK(x.grad()[0] == 1.0);
  }
  {
    Tensor x({1}, std::vector<double>{3.0}, true);
    Graph g;
    const Var v = g.param(x);
    g.backward(ops::sum(ops::mul(v, v)));
    CHECK(x.grad()[0] == 6.0);
  }
  {
    // f(W) = sum(W v): every row of dW equals v.
    Tensor w({3, 4}, true);
    Rng rng(5);
    for (double& e : w.data()) e = rng.uniform(-1, 1);
    Tensor v({4, 1}, std::vector<double>{0.5, -1.0, 2.0, 0.25});
    Graph g;
    g.backward(ops::sum(ops::matmul(g.param(w), g.constant(v))));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(w.grad()[r * 4 + c] == v[c]);
  }
}

TEST_CASE("backward accumulates across fan-out and repeated calls") {
  Tensor x({2}, std::vector<double>{1.0, -2.0}, true);
  {
    Graph g;
    const Var v = g.param(x);
    g.backward(ops::sum(ops::add(v, ops::add(v, v))));  // 3x
    CHECK(x.grad()[0] == 3.0);
    g.backward(ops::sum(ops::add(v, ops::add(v, v))));
    CHECK(x.grad()[0] == 6.0);  // second call without reset accumulates
  }
  x.zero_grad();
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("backward errors") {
  Tensor x({2, 2}, std::vector<double>{1, 2, 3, 4}, true);
  Graph g;
  const Var v = g.param(x);
  CHECK_THROWS_WITH(g.backward(v), doctest::Contains("scalar"));
  CHECK_THROWS_WITH(g.push(Tensor::scalar(0), {v.id + 5}, nullptr), doctest::Contains("cycle"));
}

TEST_CASE("backward is deterministic") {
  Rng rng(11);
  Tensor a({4, 5}, true), b({5, 3}, true);
  for (double& e : a.data()) e = rng.uniform(-1, 1);
  for (double& e : b.data()) e = rng.uniform(-1, 1);
  auto run = [&]() {
    a.zero_grad();
    b.zero_grad();
    Graph g;
    Var h = ops::relu(ops::matmul(g.param(a), g.param(b)));
    g.backward(ops::sum(ops::softmax_rows(ops::scale(h, 1.7))));
    return std::make_pair(std::vector<double>(a.grad().begin(), a.grad().end()),
                          std::vector<double>(b.grad().begin(), b.grad().end()));
  };
  const auto first = run(), second = run();
  CHECK(std::memcmp(first.first.data(), second.first.data(), first.first.size() * 8) == 0);
  CHECK(std::memcmp(first.second.data(), second.second.data(), first.second.size() * 8) == 0);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tensor x({3}, std::vector<double>{-1.0, 0.0, 2.0}, true);
  Graph g;
  g.backward(ops::sum(ops::relu(g.param(x))));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("grad_check examples") {
  // Dyadic point, coefficients and step keep every difference exact.
  Tensor point({3, 2}, std::vector<double>{0.125, -0.375, 2.0, 1.5, -3.0, 0.75});
  Tensor c({3, 2}, std::vector<double>{1.0, 2.0, -0.5, 0.25, 3.0, -1.0});
  const double linear = grad_check(
      [&](Graph& g, Var x) { return ops::sum(ops::mul(x, g.constant(c))); }, point, 1.0 / 65536);
  CHECK(linear < 1e-10);

  Rng rng(3);
  Tensor x({1, 6});
  for (double& v : x.data()) v = rng.uniform(-2, 2);
  Tensor w({1, 6});
  for (double& v : w.data()) v = rng.uniform(-2, 2);
  const double smooth = grad_check(
      [&](Graph& g, Var v) { return ops::sum(ops::mul(ops::softmax_rows(v), g.constant(w))); }, x,
      1e-5);
  CHECK(smooth < 1e-6);

  CHECK_THROWS_WITH(grad_check([](Graph&, Var v) { return ops::sum(v); }, point, 0.0),
                    doctest::Contains("epsilon must be positive"));
  Tensor huge({1}, std::vector<double>{1e308});
  CHECK_THROWS_WITH(
      grad_check([](Graph&, Var v) { return ops::sum(ops::scale(v, 10.0)); }, huge, 1e-5),
      doctest::Contains("non-finite"));
}

TEST_CASE("grad_check_tensor restores the tensor") {
  Tensor p({2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const std::vector<double> before = p.values();
  grad_check_tensor([&](Graph& g) { return ops::sum(ops::relu(g.param(p))); }, p, 1e-5);
  CHECK(std::memcmp(before.data(), p.values().data(), 32) == 0);
}

TEST_CASE("gradient check suite over every primitive") {
  const auto cases = run_gradcheck_suite({1, 2, 3, 4, 5}, 1e-5);
  CHECK(cases.size() >= 5 * 20);
  for (const auto& c : cases) {
    INFO(c.name << " seed " << c.seed);
    CHECK(c.max_relative_error < 1e-4);
  }
}

TEST_CASE("embedding rejects out-of-range ids") {
  Tensor table({3, 2}, true);
  Graph g;
  const std::vector<std::size_t> ids = {0, 3};
  CHECK_THROWS_AS(ops::embedding(g.param(table), ids), std::out_of_range);
}

}  // TEST_SUITE
