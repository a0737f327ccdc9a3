#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptune/metrics.hpp"
#include "ptune/model.hpp"
#include "ptune/rng.hpp"
#include "ptune/tensor.hpp"

namespace ptune {

enum class QAKind { general, hyper_specific };

std::string_view kind_name(QAKind kind);  // "general" / "hyper_specific"
QAKind parse_kind(std::string_view text);  // also accepts "specific"

struct QAPair {
  std::string question;
  std::string answer;
  QAKind kind = QAKind::general;
  std::optional<std::int64_t> entity_id;  // hyper-specific pairs only

  bool operator==(const QAPair&) const = default;
};

struct FactEntry {
  std::string name;
  std::string role;       // e.g. "transcription factor"
  std::string mechanism;  // the fact string every answer about it carries
};

struct FactTable {
  std::vector<FactEntry> entries;
};

FactTable make_fact_table(std::size_t count, std::uint64_t seed);

inline constexpr std::size_t kSpecificTemplates = 4;
inline constexpr std::size_t kGeneralTemplates = 4;

/// Number of entities a hyper-specific corpus of `size` pairs draws on.
std::size_t entity_count_for(std::size_t size);

/// Fills question/answer template `template_index` for one entity.
QAPair expand_specific(const FactEntry& entry, std::int64_t entity_id,
                       std::size_t template_index);

std::vector<QAPair> generate_corpus(QAKind kind, std::size_t size, std::uint64_t seed);

/// One JSON object per line: {"question","answer","kind","entity_id"}.
std::string corpus_to_jsonl(std::span<const QAPair> pairs);
std::vector<QAPair> corpus_from_jsonl(std::string_view text);
void write_corpus(const std::filesystem::path& path, std::span<const QAPair> pairs);
std::vector<QAPair> read_corpus(const std::filesystem::path& path);

// ---------------------------------------------------------------- tokenizer

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;
inline constexpr std::size_t kBos = 2;
inline constexpr std::size_t kEos = 3;
inline constexpr std::size_t kSep = 4;
inline constexpr std::size_t kReservedTokens = 5;

/// Lowercased words; every punctuation character is its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  /// Ordered by frequency (descending), then lexicographically.
  static Vocabulary build(std::span<const QAPair> corpus);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<std::size_t> ids(std::string_view text) const;
  /// Joins non-reserved tokens with single spaces.
  std::string decode(std::span<const std::size_t> ids) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct EncodedPair {
  std::vector<std::size_t> ids;  // exactly max_len, PAD on the right
  std::size_t length = 0;        // non-pad tokens
  PositionSpan question;
  PositionSpan answer;
};

/// BOS question SEP answer EOS, truncated so EOS stays the final non-pad token.
EncodedPair encode(std::string_view question, std::string_view answer,
                   const Vocabulary& vocab, std::size_t max_len);

// ---------------------------------------------------------------- batching

/// Shuffled index batches for one epoch, keyed by (seed, epoch). The last
/// batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t dataset_size,
                                              std::size_t batch_size, std::size_t epoch,
                                              std::uint64_t seed);

struct MixedBatch {
  Tensor inputs;
  Tensor labels;
};

/// Elementwise lambda * a + (1 - lambda) * b.
Tensor mix(const Tensor& a, const Tensor& b, double lambda);

/// mix() applied to inputs and label distributions with the same lambda.
MixedBatch mixup(const Tensor& inputs_a, const Tensor& inputs_b, const Tensor& labels_a,
                 const Tensor& labels_b, double lambda);

inline constexpr double kMixupAlpha = 0.2;
double sample_mixup_lambda(Rng& rng, double alpha = kMixupAlpha);

// ---------------------------------------------------------------- retrieval

struct RetrievalQuery {
  std::vector<std::size_t> relevant;  // sorted document ids
  std::vector<std::size_t> ranking;   // candidate order, best first
  RelevanceList judgments;            // binary grades along `ranking`
};

struct RetrievalTask {
  std::size_t n_docs = 0;
  std::vector<RetrievalQuery> queries;
};

/// When `all_relevant` is set every document is relevant to every query and
/// rankings are the identity.
RetrievalTask generate_retrieval_task(std::size_t n_queries, std::size_t n_docs,
                                      std::uint64_t seed, bool all_relevant = false);

}  // namespace ptune
