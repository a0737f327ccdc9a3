#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ptune/checkpoint.hpp"
#include "ptune/model.hpp"
#include "ptune/rng.hpp"

using namespace ptune;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_blocks = 3;
  c.ffn_multiplier = 2;
  c.max_seq_len = 10;
  c.seed = 42;
  return c;
}

TokenBatch random_batch(std::size_t batch, std::size_t seq, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  TokenBatch t{batch, seq, {}};
  for (std::size_t i = 0; i < batch * seq; ++i) t.ids.push_back(rng.below(vocab));
  return t;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init is deterministic per config") {
  const Model a(small_config()), b(small_config());
  CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  ModelConfig other = small_config();
  other.seed = 43;
  CHECK(encode_checkpoint(Model(other)) != encode_checkpoint(a));
}

TEST_CASE("parameter count matches shape enumeration") {
  ModelConfig c;
  c.vocab_size = 100;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_blocks = 3;
  c.ffn_multiplier = 4;
  const Model m(c);
  CHECK(m.parameter_count() == oracle::decoder_parameter_count(100, 16, 3, 4, c.max_seq_len));
  const auto counts = m.group_parameter_counts();
  std::size_t total = 0;
  for (std::size_t n : counts) total += n;
  CHECK(total == m.parameter_count());
}

TEST_CASE("config validation names the field") {
  ModelConfig c = small_config();
  c.d_model = 16;
  c.n_heads = 3;
  CHECK_THROWS_WITH(Model{c}, doctest::Contains("d_model mod n_heads"));
  c = small_config();
  c.n_blocks = 2;
  CHECK_THROWS_WITH(Model{c}, doctest::Contains("n_blocks"));
  c = small_config();
  c.vocab_size = 0;
  CHECK_THROWS_WITH(Model{c}, doctest::Contains("vocab_size"));
}

TEST_CASE("five groups partition the parameters") {
  for (std::size_t blocks : {3u, 4u, 5u, 7u}) {
    ModelConfig c = small_config();
    c.n_blocks = blocks;
    const Model m(c);
    const LayerGroups& groups = m.groups();
    REQUIRE(groups.size() == 5);
    std::set<std::size_t> seen;
    std::size_t members = 0;
    for (std::size_t g = 0; g < 5; ++g) {
      CHECK_FALSE(groups[g].parameters.empty());
      std::size_t count = 0;
      for (std::size_t idx : groups[g].parameters) {
        seen.insert(idx);
        CHECK(m.parameters()[idx].group == g);
        count += m.parameters()[idx].tensor.size();
      }
      members += groups[g].parameters.size();
      CHECK(count == groups[g].parameter_count);
    }
    CHECK(seen.size() == m.parameters().size());
    CHECK(members == m.parameters().size());
  }
  CHECK(Model::block_range(3, 0) == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(Model::block_range(7, 1) == std::pair<std::size_t, std::size_t>{2, 4});
  CHECK(Model::block_range(7, 2) == std::pair<std::size_t, std::size_t>{4, 7});
}

TEST_CASE("init scale") {
  const Model m(small_config());
  for (const NamedParameter& p : m.parameters()) {
    const bool gain = p.name.find("gain") != std::string::npos;
    const bool bias = p.name.find(".b") != std::string::npos || p.name.find("bias") != std::string::npos;
    const double fan_in = p.tensor.rank() == 2 && p.name.find("embedding") == std::string::npos
                              ? static_cast<double>(p.tensor.shape()[0])
                              : static_cast<double>(m.config().d_model);
    for (double v : p.tensor.values()) {
      if (gain) {
        CHECK(v == 1.0);
      } else if (bias) {
        CHECK(v == 0.0);
      } else {
        CHECK(std::fabs(v) <= 1.0 / std::sqrt(fan_in));
      }
    }
  }
}

TEST_CASE("forward shape, capture and determinism") {
  const Model m(small_config());
  const TokenBatch t = random_batch(3, 7, 20, 1);
  const ForwardResult a = m.forward(t, true), b = m.forward(t, false);
  CHECK(a.logits.shape() == std::vector<std::size_t>{3, 7, 20});
  CHECK(a.logits.all_finite());
  CHECK(a.logits.values() == b.logits.values());
  CHECK_FALSE(b.attention.has_value());
  REQUIRE(a.attention.has_value());
  REQUIRE(a.attention->size() == 3);
  for (const AttentionCapture& cap : *a.attention) {
    CHECK(cap.layers == 3);
    CHECK(cap.heads == 2);
    for (std::size_t l = 0; l < cap.layers; ++l)
      for (std::size_t h = 0; h < cap.heads; ++h)
        for (std::size_t q = 0; q < cap.seq; ++q) {
          double row = 0.0;
          for (std::size_t k = 0; k < cap.seq; ++k) {
            const double w = cap.at(l, h, q, k);
            CHECK(w >= 0.0);
            if (k > q) CHECK(w == 0.0);
            row += w;
          }
          CHECK(std::fabs(row - 1.0) <= 1e-9);
        }
  }
}

TEST_CASE("causality: later tokens never affect earlier logits") {
  const Model m(small_config());
  TokenBatch t = random_batch(1, 9, 20, 2);
  const Tensor base = m.forward(t, false).logits;
  for (std::size_t k = 1; k < 9; ++k) {
    TokenBatch p = t;
    p.ids[k] = (p.ids[k] + 7) % 20;
    const Tensor changed = m.forward(p, false).logits;
    for (std::size_t i = 0; i < k * 20; ++i) CHECK(changed[i] == base[i]);
    bool differs = false;
    for (std::size_t i = k * 20; i < (k + 1) * 20; ++i) differs = differs || changed[i] != base[i];
    CHECK(differs);
  }
}

TEST_CASE("forward errors") {
  const Model m(small_config());
  TokenBatch t = random_batch(2, 4, 20, 3);
  t.ids[6] = 20;
  CHECK_THROWS_WITH_AS(m.forward(t, false), doctest::Contains("position 2"), std::out_of_range);
  CHECK_THROWS(m.forward(random_batch(1, 11, 20, 4), false));
}

TEST_CASE("attention_profile examples") {
  AttentionCapture one(1, 1, 2);
  one.at(0, 0, 0, 0) = 1.0;
  one.at(0, 0, 1, 0) = 0.4;
  one.at(0, 0, 1, 1) = 0.6;
  const auto p1 = attention_profile(one, {0, 1}, {1, 2});
  REQUIRE(p1.size() == 1);
  CHECK(p1[0] == 1.0);

  AttentionCapture hand(1, 1, 3);
  hand.at(0, 0, 2, 0) = 0.3;
  hand.at(0, 0, 2, 1) = 0.1;
  hand.at(0, 0, 2, 2) = 0.6;
  const auto p2 = attention_profile(hand, {0, 2}, {2, 3});
  CHECK(std::fabs(p2[0] - 0.75) < 1e-15);
  CHECK(std::fabs(p2[1] - 0.25) < 1e-15);

  // uniform attention over the full (non-causal) window
  AttentionCapture uni(2, 2, 6);
  for (double& w : uni.weights) w = 1.0 / 6.0;
  const auto p3 = attention_profile(uni, {0, 4}, {4, 6});
  for (double v : p3) CHECK(std::fabs(v - 0.25) < 1e-15);

  CHECK_THROWS_WITH(attention_profile(hand, {0, 0}, {2, 3}), doctest::Contains("empty question"));
  CHECK_THROWS(attention_profile(hand, {0, 2}, {2, 2}));
  CHECK_THROWS(attention_profile(hand, {0, 3}, {2, 3}));
  AttentionCapture zero(1, 1, 3);
  CHECK_THROWS_WITH(attention_profile(zero, {0, 2}, {2, 3}), doctest::Contains("degenerate attention"));
}

TEST_CASE("attention_profile normalization and permutation equivariance") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nq = 2 + rng.below(4), na = 1 + rng.below(3), seq = nq + na;
    AttentionCapture cap(2, 2, seq);
    for (double& w : cap.weights) w = rng.uniform01();
    const auto p = attention_profile(cap, {0, nq}, {nq, seq});
    double total = 0.0;
    for (double v : p) total += v;
    CHECK(std::fabs(total - 1.0) <= 1e-12);

    // Relabel question positions by a random permutation.
    std::vector<std::size_t> perm(nq);
    for (std::size_t i = 0; i < nq; ++i) perm[i] = i;
    for (std::size_t i = nq; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    AttentionCapture moved = cap;
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t q = 0; q < seq; ++q)
          for (std::size_t j = 0; j < nq; ++j) moved.at(l, h, q, perm[j]) = cap.at(l, h, q, j);
    const auto pm = attention_profile(moved, {0, nq}, {nq, seq});
    for (std::size_t j = 0; j < nq; ++j) CHECK(std::fabs(pm[perm[j]] - p[j]) <= 1e-15);
  }
}

TEST_CASE("checkpoint round trip is byte-identical") {
  Model m(small_config());
  Rng rng(4);
  for (NamedParameter& p : m.parameters())
    for (double& v : p.tensor.data()) v = rng.normal();
  const std::string bytes = encode_checkpoint(m);
  CHECK(bytes.substr(0, 4) == "PTCK");
  const Model back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.config() == m.config());
  const auto groups = group_bytes(m);
  std::string joined;
  for (const auto& g : groups) joined += g;
  CHECK(bytes.substr(bytes.size() - joined.size()) == joined);

  CHECK_THROWS(decode_checkpoint("XXXX" + bytes.substr(4)));
  CHECK_THROWS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)));
  CHECK_THROWS(decode_checkpoint(bytes + "x"));
  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  CHECK_THROWS(decode_checkpoint(wrong_version));
}

}  // TEST_SUITE
