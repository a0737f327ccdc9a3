#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ptune {

/// Ranked relevance grades (rank 1 first) plus the number of relevant
/// documents in the collection.
struct RelevanceList {
  std::vector<int> grades;
  std::size_t n_rel = 0;

  void validate() const;
};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double mae = 0.0;
  double map = 0.0;
  double ndcg = 0.0;           // literal variant
  double ndcg_standard = 0.0;  // ideal-normalized variant
  double attention_entropy = 0.0;
  ConfusionCounts counts;
  std::size_t examples = 0;

  bool operator==(const MetricsReport&) const = default;
};

/// Zero denominators give 0.
std::pair<double, double> precision_recall(const ConfusionCounts& c);

/// Harmonic mean; 0 when precision + recall == 0.
double f1(double precision, double recall);

/// Multiset token overlap between a generated and a reference answer.
ConfusionCounts overlap_counts(std::span<const std::size_t> predicted,
                               std::span<const std::size_t> reference);

double mae(std::span<const double> predictions, std::span<const double> ground_truth);

/// sum_k (rel_k / k) * [rel_k > 0] / n_rel. Not textbook average precision.
double mean_average_precision(const RelevanceList& r);

enum class NdcgVariant { literal, standard };

/// literal: sum_k 2^(rel_k - 1) / (log2(k) + 1), divided by n_rel (every rank
/// contributes). standard: sum_k (2^rel_k - 1) / log2(k + 1) over the ideal
/// DCG of the same grades, 0 when the ideal DCG is 0.
double ndcg(const RelevanceList& r, NdcgVariant variant);

/// -sum p ln p with 0 ln 0 = 0.
double attention_entropy(std::span<const double> profile);

}  // namespace ptune
