#include "ptune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

namespace ptune {

void RelevanceList::validate() const {
  std::size_t retrieved_relevant = 0;
  for (int g : grades) {
    if (g < 0) throw std::invalid_argument("relevance grades must be non-negative");
    if (g > 0) ++retrieved_relevant;
  }
  if (n_rel < retrieved_relevant) {
    throw std::invalid_argument("n_rel (" + std::to_string(n_rel) +
                                ") is smaller than the relevant documents retrieved (" +
                                std::to_string(retrieved_relevant) + ")");
  }
}

std::pair<double, double> precision_recall(const ConfusionCounts& c) {
  const double p = (c.tp + c.fp) == 0 ? 0.0
                                      : static_cast<double>(c.tp) /
                                            static_cast<double>(c.tp + c.fp);
  const double r = (c.tp + c.fn) == 0 ? 0.0
                                      : static_cast<double>(c.tp) /
                                            static_cast<double>(c.tp + c.fn);
  return {p, r};
}

double f1(double precision, double recall) {
  if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0)) {
    throw std::invalid_argument("precision and recall must lie in [0,1]");
  }
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

ConfusionCounts overlap_counts(std::span<const std::size_t> predicted,
                               std::span<const std::size_t> reference) {
  std::map<std::size_t, std::uint64_t> ref;
  for (std::size_t t : reference) ++ref[t];
  ConfusionCounts c;
  for (std::size_t t : predicted) {
    auto it = ref.find(t);
    if (it != ref.end() && it->second > 0) {
      --it->second;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = reference.size() - c.tp;
  return c;
}

double mae(std::span<const double> predictions, std::span<const double> ground_truth) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("mae length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("mae of empty vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    total += std::fabs(predictions[i] - ground_truth[i]);
  }
  return total / static_cast<double>(predictions.size());
}

double mean_average_precision(const RelevanceList& r) {
  r.validate();
  if (r.n_rel == 0) throw std::invalid_argument("no relevant documents");
  double total = 0.0;
  for (std::size_t k = 1; k <= r.grades.size(); ++k) {
    const int rel = r.grades[k - 1];
    if (rel > 0) total += static_cast<double>(rel) / static_cast<double>(k);
  }
  return total / static_cast<double>(r.n_rel);
}

namespace {

double standard_dcg(std::span<const int> grades) {
  double total = 0.0;
  for (std::size_t k = 1; k <= grades.size(); ++k) {
    total += (std::exp2(static_cast<double>(grades[k - 1])) - 1.0) /
             std::log2(static_cast<double>(k + 1));
  }
  return total;
}

}  // namespace

double ndcg(const RelevanceList& r, NdcgVariant variant) {
  r.validate();
  if (variant == NdcgVariant::literal) {
    if (r.n_rel == 0) throw std::invalid_argument("no relevant documents");
    double total = 0.0;
    for (std::size_t k = 1; k <= r.grades.size(); ++k) {
      total += std::exp2(static_cast<double>(r.grades[k - 1] - 1)) /
               (std::log2(static_cast<double>(k)) + 1.0);
    }
    return total / static_cast<double>(r.n_rel);
  }
  std::vector<int> ideal = r.grades;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double ideal_dcg = standard_dcg(ideal);
  if (ideal_dcg == 0.0) return 0.0;
  return standard_dcg(r.grades) / ideal_dcg;
}

double attention_entropy(std::span<const double> profile) {
  if (profile.empty()) throw std::invalid_argument("empty distribution");
  double total = 0.0;
  for (double p : profile) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("probabilities must sum to 1");
  }
  double h = 0.0;
  for (double p : profile) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h < 0.0 ? 0.0 : h;
}

}  // namespace ptune
