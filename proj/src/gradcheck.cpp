#include "ptune/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ptune/model.hpp"
#include "ptune/rng.hpp"

namespace ptune {

namespace {

double evaluate(const std::function<Var(Graph&)>& loss) {
  Graph g;
  const Var out = loss(g);
  if (out.value().size() != 1) throw std::invalid_argument("grad_check needs a scalar function");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw std::runtime_error("non-finite function value");
  return v;
}

double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

}  // namespace

double grad_check_tensor(const std::function<Var(Graph&)>& loss, Tensor& param,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  {
    Graph g;
    const Var out = loss(g);
    if (out.value().size() != 1) throw std::invalid_argument("grad_check needs a scalar function");
    if (!std::isfinite(out.value()[0])) throw std::runtime_error("non-finite function value");
    g.backward(out);
  }
  const std::vector<double> analytic(param.grad().begin(), param.grad().end());
  param.clear_grad();
  param.set_requires_grad(had_flag);

  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + epsilon;
    const double up = evaluate(loss);
    param[i] = saved - epsilon;
    const double down = evaluate(loss);
    param[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * epsilon)));
  }
  return worst;
}

double grad_check(const LeafFunction& fn, const Tensor& point, double epsilon) {
  Tensor x = point;
  return grad_check_tensor([&](Graph& g) { return fn(g, g.param(x)); }, x, epsilon);
}

// ---------------------------------------------------------------- suite

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from the ReLU kink so central differences never straddle it.
Tensor away_from_zero(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.below(2) ? mag : -mag;
  }
  return t;
}

std::size_t dim(Rng& rng, std::size_t lo = 1) { return lo + rng.below(8 - lo + 1); }

// Contracts a tensor-valued node to a scalar with fixed random weights.
Var weighted_sum(Graph& g, Var x, Rng& rng) {
  Tensor w = random_tensor(rng, x.value().shape());
  return ops::sum(ops::mul(x, g.constant(std::move(w))));
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::uint64_t>& seeds,
                                               double epsilon) {
  std::vector<GradCheckCase> out;
  for (std::uint64_t seed : seeds) {
    Rng rng(derive_seed(seed, 0x67726164));
    auto record = [&](std::string name, double err) {
      out.push_back({std::move(name), seed, err});
    };
    const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);

    {
      Tensor a = random_tensor(rng, {n, k}), b = random_tensor(rng, {k, m});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(g, ops::matmul(g.param(a), g.param(b)), w);
      };
      record("matmul.lhs", grad_check_tensor(f, a, epsilon));
      record("matmul.rhs", grad_check_tensor(f, b, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m}), b = random_tensor(rng, {n, m});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(g, ops::add(g.param(a), g.param(b)), w);
      };
      record("add.lhs", grad_check_tensor(f, a, epsilon));
      record("add.rhs", grad_check_tensor(f, b, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m}), bias = random_tensor(rng, {m});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(g, ops::add_row(g.param(a), g.param(bias)), w);
      };
      record("add_row.input", grad_check_tensor(f, a, epsilon));
      record("add_row.bias", grad_check_tensor(f, bias, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m}), b = random_tensor(rng, {n, m});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(g, ops::mul(g.param(a), g.param(b)), w);
      };
      record("mul.lhs", grad_check_tensor(f, a, epsilon));
      record("mul.rhs", grad_check_tensor(f, b, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m});
      const double factor = rng.uniform(-2.0, 2.0);
      const std::uint64_t ws = rng.next();
      record("scale", grad_check(
                          [&](Graph& g, Var x) {
                            Rng w(ws);
                            return weighted_sum(g, ops::scale(x, factor), w);
                          },
                          a, epsilon));
    }
    {
      Tensor a = away_from_zero(rng, {n, m});
      const std::uint64_t ws = rng.next();
      record("relu", grad_check(
                         [&](Graph& g, Var x) {
                           Rng w(ws);
                           return weighted_sum(g, ops::relu(x), w);
                         },
                         a, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m}, -3.0, 3.0);
      const std::uint64_t ws = rng.next();
      record("softmax_rows", grad_check(
                                 [&](Graph& g, Var x) {
                                   Rng w(ws);
                                   return weighted_sum(g, ops::softmax_rows(x), w);
                                 },
                                 a, epsilon));
    }
    {
      const std::size_t cols = dim(rng, 2);
      Tensor x = random_tensor(rng, {n, cols}, -2.0, 2.0);
      Tensor gain = random_tensor(rng, {cols}, 0.5, 1.5), bias = random_tensor(rng, {cols});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(g, ops::layer_norm_rows(g.param(x), g.param(gain), g.param(bias)), w);
      };
      record("layer_norm.input", grad_check_tensor(f, x, epsilon));
      record("layer_norm.gain", grad_check_tensor(f, gain, epsilon));
      record("layer_norm.bias", grad_check_tensor(f, bias, epsilon));
    }
    {
      Tensor table = random_tensor(rng, {n, m});
      std::vector<std::size_t> ids(dim(rng));
      for (std::size_t& id : ids) id = rng.below(n);
      const std::uint64_t ws = rng.next();
      record("embedding", grad_check(
                              [&](Graph& g, Var t) {
                                Rng w(ws);
                                return weighted_sum(g, ops::embedding(t, ids), w);
                              },
                              table, epsilon));
    }
    {
      Tensor a = random_tensor(rng, {n, m});
      record("sum", grad_check([](Graph&, Var x) { return ops::sum(x); }, a, epsilon));
    }
    {
      const std::size_t heads = 1 + rng.below(2);
      const std::size_t d = heads * (1 + rng.below(8 / heads));
      const std::size_t batch = 1 + rng.below(2);
      const std::size_t seq = 1 + rng.below(8 / batch);
      Tensor q = random_tensor(rng, {batch * seq, d}), kk = random_tensor(rng, {batch * seq, d}),
             v = random_tensor(rng, {batch * seq, d});
      const std::uint64_t ws = rng.next();
      auto f = [&](Graph& g) {
        Rng w(ws);
        return weighted_sum(
            g, ops::causal_attention(g.param(q), g.param(kk), g.param(v), batch, seq, heads), w);
      };
      record("attention.q", grad_check_tensor(f, q, epsilon));
      record("attention.k", grad_check_tensor(f, kk, epsilon));
      record("attention.v", grad_check_tensor(f, v, epsilon));
    }
    {
      Tensor logits = random_tensor(rng, {n, m}, -3.0, 3.0);
      Tensor target = random_tensor(rng, {n, m}, 0.0, 1.0);
      record("soft_cross_entropy", grad_check(
                                       [&](Graph&, Var x) {
                                         return ops::soft_cross_entropy(x, target);
                                       },
                                       logits, epsilon));
      std::vector<std::size_t> targets(n);
      for (std::size_t& t : targets) t = rng.below(m);
      record("cross_entropy", grad_check(
                                  [&](Graph&, Var x) { return ops::cross_entropy(x, targets); },
                                  logits, epsilon));
    }
    {
      ModelConfig cfg;
      cfg.vocab_size = 8;
      cfg.d_model = 8;
      cfg.n_heads = 2;
      cfg.n_blocks = 3;
      cfg.ffn_multiplier = 1;
      cfg.max_seq_len = 4;
      cfg.seed = seed;
      Model model(cfg);
      TokenBatch tokens{2, 4, {}};
      for (std::size_t i = 0; i < 8; ++i) tokens.ids.push_back(rng.below(cfg.vocab_size));
      Tensor target({8, cfg.vocab_size});
      for (std::size_t r = 0; r < 8; ++r) target.at(r, rng.below(cfg.vocab_size)) = 1.0;
      auto loss = [&](Graph& g) {
        const std::vector<Var> bound = model.bind(g);
        const Var emb = model.embed(g, bound, tokens);
        return ops::soft_cross_entropy(model.logits(g, bound, emb, tokens.batch, tokens.seq),
                                       target);
      };
      double worst = 0.0;
      for (NamedParameter& p : model.parameters()) {
        worst = std::max(worst, grad_check_tensor(loss, p.tensor, epsilon));
      }
      record("model_loss", worst);
    }
  }
  return out;
}

}  // namespace ptune
