#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ptune/autograd.hpp"
#include "ptune/tensor.hpp"

namespace ptune {

inline constexpr std::size_t kGroupCount = 5;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_blocks = 3;
  std::size_t ffn_multiplier = 4;
  std::size_t max_seq_len = 48;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  std::size_t group = 0;
  Tensor tensor;
};

/// G0 embeddings, G1..G3 lower/middle/upper thirds of the blocks, G4 head.
struct LayerGroup {
  std::string name;
  std::vector<std::size_t> parameters;  // indices into Model::parameters()
  std::size_t parameter_count = 0;
};
using LayerGroups = std::array<LayerGroup, kGroupCount>;

/// Row-major batch x seq token ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::size_t> ids;
};

struct ForwardResult {
  Tensor logits;  // [batch, seq, vocab]
  std::optional<std::vector<AttentionCapture>> attention;  // one per sequence
};

/// Half-open position range [begin, end).
struct PositionSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool operator==(const PositionSpan&) const = default;
};

/// Tiny pre-norm decoder-only transformer with learned positions.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<NamedParameter>& parameters() noexcept { return params_; }
  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  const LayerGroups& groups() const noexcept { return groups_; }
  std::array<std::size_t, kGroupCount> group_parameter_counts() const;
  std::size_t parameter_count() const;
  // Block index range [first, last) owned by block group 1..3.
  static std::pair<std::size_t, std::size_t> block_range(std::size_t n_blocks,
                                                         std::size_t third);

  void zero_grad();

  // Graph-level pieces used by training (trainable leaves) and evaluation.
  std::vector<Var> bind(Graph& graph);
  std::vector<Var> bind_frozen(Graph& graph) const;
  Var embed(Graph& graph, const std::vector<Var>& bound, const TokenBatch& tokens) const;
  Var logits(Graph& graph, const std::vector<Var>& bound, Var embedded,
             std::size_t batch, std::size_t seq,
             std::vector<AttentionCapture>* capture = nullptr) const;

  ForwardResult forward(const TokenBatch& tokens, bool capture) const;

  void check_tokens(const TokenBatch& tokens) const;

 private:
  struct BlockSlots {
    std::size_t ln1_gain, ln1_bias, wq, bq, wk, wv, bv, wo, bo;
    std::size_t ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  std::size_t add_param(std::string name, std::size_t group,
                        std::vector<std::size_t> shape);

  ModelConfig config_;
  std::vector<NamedParameter> params_;
  LayerGroups groups_;
  std::size_t token_embedding_ = 0, position_embedding_ = 0;
  std::vector<BlockSlots> blocks_;
  std::size_t lnf_gain_ = 0, lnf_bias_ = 0, head_w_ = 0, head_b_ = 0;
};

/// Averages attention from answer positions onto each question position over
/// layers, then heads, then answer positions, and renormalizes to sum to 1.
std::vector<double> attention_profile(const AttentionCapture& capture,
                                      PositionSpan question, PositionSpan answer);

}  // namespace ptune
