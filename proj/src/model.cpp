#include "ptune/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ptune/rng.hpp"

namespace ptune {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw std::invalid_argument(std::string(field) + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_blocks, "n_blocks");
  positive(ffn_multiplier, "ffn_multiplier");
  positive(max_seq_len, "max_seq_len");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model mod n_heads must be 0 (d_model=" +
                                std::to_string(d_model) +
                                ", n_heads=" + std::to_string(n_heads) + ")");
  }
  if (n_blocks < 3) {
    throw std::invalid_argument("n_blocks must be at least 3 so every block group is non-empty");
  }
}

std::pair<std::size_t, std::size_t> Model::block_range(std::size_t n_blocks,
                                                       std::size_t third) {
  return {third * n_blocks / 3, (third + 1) * n_blocks / 3};
}

std::size_t Model::add_param(std::string name, std::size_t group,
                             std::vector<std::size_t> shape) {
  NamedParameter p{std::move(name), group, Tensor(std::move(shape), true)};
  params_.push_back(std::move(p));
  const std::size_t index = params_.size() - 1;
  groups_[group].parameters.push_back(index);
  groups_[group].parameter_count += params_.back().tensor.size();
  return index;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t hidden = d * config_.ffn_multiplier;
  groups_[0].name = "embeddings";
  groups_[1].name = "lower_blocks";
  groups_[2].name = "middle_blocks";
  groups_[3].name = "upper_blocks";
  groups_[4].name = "head";

  token_embedding_ = add_param("token_embedding", 0, {config_.vocab_size, d});
  position_embedding_ = add_param("position_embedding", 0, {config_.max_seq_len, d});

  for (std::size_t third = 0; third < 3; ++third) {
    const auto [first, last] = block_range(config_.n_blocks, third);
    for (std::size_t b = first; b < last; ++b) {
      const std::string pre = "block" + std::to_string(b) + ".";
      const std::size_t g = third + 1;
      BlockSlots s{};
      s.ln1_gain = add_param(pre + "ln1.gain", g, {d});
      s.ln1_bias = add_param(pre + "ln1.bias", g, {d});
      s.wq = add_param(pre + "attn.wq", g, {d, d});
      s.bq = add_param(pre + "attn.bq", g, {d});
      s.wk = add_param(pre + "attn.wk", g, {d, d});
      s.wv = add_param(pre + "attn.wv", g, {d, d});
      s.bv = add_param(pre + "attn.bv", g, {d});
      s.wo = add_param(pre + "attn.wo", g, {d, d});
      s.bo = add_param(pre + "attn.bo", g, {d});
      s.ln2_gain = add_param(pre + "ln2.gain", g, {d});
      s.ln2_bias = add_param(pre + "ln2.bias", g, {d});
      s.w1 = add_param(pre + "ffn.w1", g, {d, hidden});
      s.b1 = add_param(pre + "ffn.b1", g, {hidden});
      s.w2 = add_param(pre + "ffn.w2", g, {hidden, d});
      s.b2 = add_param(pre + "ffn.b2", g, {d});
      blocks_.push_back(s);
    }
  }

  lnf_gain_ = add_param("final_ln.gain", 4, {d});
  lnf_bias_ = add_param("final_ln.bias", 4, {d});
  head_w_ = add_param("head.weight", 4, {d, config_.vocab_size});
  head_b_ = add_param("head.bias", 4, {config_.vocab_size});

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for matrices; embeddings use
  // d_model as fan-in. Layer-norm gains start at 1, all biases at 0. Each
  // tensor draws from its own stream so initialization is order-independent.
  for (std::size_t i = 0; i < params_.size(); ++i) {
    NamedParameter& p = params_[i];
    const std::string& n = p.name;
    const bool is_gain = n.ends_with(".gain");
    const bool is_vector = p.tensor.rank() == 1;
    if (is_gain) {
      for (double& x : p.tensor.data()) x = 1.0;
      continue;
    }
    if (is_vector) continue;
    const bool is_embedding = (i == token_embedding_ || i == position_embedding_);
    const double fan_in =
        static_cast<double>(is_embedding ? d : p.tensor.shape()[0]);
    const double bound = 1.0 / std::sqrt(fan_in);
    Rng rng(derive_seed(config_.seed, i));
    for (double& x : p.tensor.data()) x = rng.uniform(-bound, bound);
  }
}

std::array<std::size_t, kGroupCount> Model::group_parameter_counts() const {
  std::array<std::size_t, kGroupCount> counts{};
  for (std::size_t g = 0; g < kGroupCount; ++g) counts[g] = groups_[g].parameter_count;
  return counts;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const NamedParameter& p : params_) total += p.tensor.size();
  return total;
}

void Model::zero_grad() {
  for (NamedParameter& p : params_) p.tensor.zero_grad();
}

std::vector<Var> Model::bind(Graph& graph) {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (NamedParameter& p : params_) out.push_back(graph.param(p.tensor));
  return out;
}

std::vector<Var> Model::bind_frozen(Graph& graph) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const NamedParameter& p : params_) {
    out.push_back(graph.constant(Tensor(p.tensor.shape(), p.tensor.values())));
  }
  return out;
}

void Model::check_tokens(const TokenBatch& tokens) const {
  if (tokens.batch == 0 || tokens.seq == 0 || tokens.ids.size() != tokens.batch * tokens.seq) {
    throw std::invalid_argument("token batch must be non-empty and batch*seq sized");
  }
  if (tokens.seq > config_.max_seq_len) {
    throw std::invalid_argument("sequence length " + std::to_string(tokens.seq) +
                                " exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  }
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t t = 0; t < tokens.seq; ++t) {
      const std::size_t id = tokens.ids[b * tokens.seq + t];
      if (id >= config_.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(id) + " out of range at batch " +
                                std::to_string(b) + ", position " + std::to_string(t));
      }
    }
  }
}

Var Model::embed(Graph& /*graph*/, const std::vector<Var>& bound,
                 const TokenBatch& tokens) const {
  check_tokens(tokens);
  std::vector<std::size_t> positions(tokens.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % tokens.seq;
  Var tok = ops::embedding(bound[token_embedding_], tokens.ids);
  Var pos = ops::embedding(bound[position_embedding_], positions);
  return ops::add(tok, pos);
}

Var Model::logits(Graph& graph, const std::vector<Var>& bound, Var x, std::size_t batch,
                  std::size_t seq, std::vector<AttentionCapture>* capture) const {
  (void)graph;
  auto linear = [&](Var in, std::size_t w, std::size_t b) {
    return ops::add_row(ops::matmul(in, bound[w]), bound[b]);
  };
  for (std::size_t layer = 0; layer < blocks_.size(); ++layer) {
    const BlockSlots& s = blocks_[layer];
    Var h = ops::layer_norm_rows(x, bound[s.ln1_gain], bound[s.ln1_bias]);
    Var q = linear(h, s.wq, s.bq);
    // No key bias: it shifts every score in a row equally and cancels in softmax.
    Var k = ops::matmul(h, bound[s.wk]);
    Var v = linear(h, s.wv, s.bv);
    Var attn = ops::causal_attention(q, k, v, batch, seq, config_.n_heads, capture, layer);
    x = ops::add(x, linear(attn, s.wo, s.bo));
    Var h2 = ops::layer_norm_rows(x, bound[s.ln2_gain], bound[s.ln2_bias]);
    Var f = linear(ops::relu(linear(h2, s.w1, s.b1)), s.w2, s.b2);
    x = ops::add(x, f);
  }
  Var out = ops::layer_norm_rows(x, bound[lnf_gain_], bound[lnf_bias_]);
  return linear(out, head_w_, head_b_);
}

ForwardResult Model::forward(const TokenBatch& tokens, bool capture) const {
  Graph graph;
  const std::vector<Var> bound = bind_frozen(graph);
  Var emb = embed(graph, bound, tokens);
  std::vector<AttentionCapture> captures;
  if (capture) {
    captures.assign(tokens.batch,
                    AttentionCapture(blocks_.size(), config_.n_heads, tokens.seq));
  }
  Var out = logits(graph, bound, emb, tokens.batch, tokens.seq,
                   capture ? &captures : nullptr);
  ForwardResult result;
  result.logits = Tensor({tokens.batch, tokens.seq, config_.vocab_size}, out.value().values());
  if (capture) result.attention = std::move(captures);
  return result;
}

std::vector<double> attention_profile(const AttentionCapture& capture,
                                      PositionSpan question, PositionSpan answer) {
  if (question.size() == 0) throw std::invalid_argument("empty question span");
  if (answer.size() == 0) throw std::invalid_argument("empty answer span");
  if (question.end > capture.seq || answer.end > capture.seq) {
    throw std::invalid_argument("span outside the captured sequence");
  }
  if (question.begin < answer.end && answer.begin < question.end) {
    throw std::invalid_argument("question and answer spans overlap");
  }
  std::vector<double> profile(question.size(), 0.0);
  const double per_layer = 1.0 / static_cast<double>(capture.layers);
  const double per_head = 1.0 / static_cast<double>(capture.heads);
  const double per_answer = 1.0 / static_cast<double>(answer.size());
  for (std::size_t j = 0; j < question.size(); ++j) {
    double over_answers = 0.0;
    for (std::size_t i = answer.begin; i < answer.end; ++i) {
      double over_heads = 0.0;
      for (std::size_t h = 0; h < capture.heads; ++h) {
        double over_layers = 0.0;
        for (std::size_t l = 0; l < capture.layers; ++l) {
          over_layers += capture.at(l, h, i, question.begin + j);
        }
        over_heads += over_layers * per_layer;
      }
      over_answers += over_heads * per_head;
    }
    profile[j] = over_answers * per_answer;
  }
  const double total = std::accumulate(profile.begin(), profile.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("degenerate attention");
  }
  for (double& p : profile) p /= total;
  return profile;
}

}  // namespace ptune
