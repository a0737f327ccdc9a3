#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ptune/data.hpp"
#include "ptune/metrics.hpp"
#include "ptune/model.hpp"
#include "ptune/optim.hpp"
#include "ptune/stats.hpp"

namespace ptune {

/// Raised for bad command-line usage (exit code 1). Everything else that
/// escapes a command is a runtime failure (exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Policy as written in a run config. Surgical data_size and
/// params_per_group default to the training-set size and the model's group
/// parameter counts; the full-policy rate defaults to optimizer.alpha.
struct PlanConfig {
  std::string policy = "full";
  std::optional<double> lr;
  double top_lr = 1e-3;
  double decay = 0.9;
  std::vector<double> rates;
  double base_lr = 1e-3;
  std::optional<std::size_t> data_size;
  std::optional<std::array<std::size_t, kGroupCount>> params_per_group;
  std::array<int, kGroupCount> mask{0, 1, 1, 0, 0};
};

struct CorpusConfig {
  std::filesystem::path general;
  std::filesystem::path specific;
  QAKind train_on = QAKind::hyper_specific;
};

struct MixupConfig {
  bool enabled = false;
  double alpha = kMixupAlpha;
};

struct RunConfig {
  std::string name;
  ModelConfig model;
  AdamWHyper optimizer;
  PlanConfig plan;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  CorpusConfig corpus;
  std::uint64_t split_seed = 1;
  std::uint64_t train_seed = 1;
  MixupConfig mixup;
  std::size_t retrieval_pool = 10;
  std::filesystem::path output_dir;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
/// Relative corpus paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Desk-scale defaults used by the examples and the acceptance suite.
RunConfig toy_run_config();

TuningPlan resolve_plan(const PlanConfig& plan, const AdamWHyper& hyper,
                        const std::array<std::size_t, kGroupCount>& group_params,
                        std::size_t train_size, std::size_t total_steps);

struct RunReport {
  std::string label;
  nlohmann::ordered_json config;  // resolved config echo
  std::string policy;
  std::array<double, kGroupCount> group_rates{};
  std::size_t train_size = 0;
  std::size_t total_steps = 0;
  std::vector<double> epoch_losses;
  MetricsReport specific;
  MetricsReport general;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
  std::string prng;
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view text);
RunReport load_report(const std::filesystem::path& run_dir);

/// Deterministic 90/10 split of [0, n): returns (train, eval) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, std::uint64_t seed);

struct FinetuneResult {
  RunReport report;
  Model initial;
  Model trained;
  double wall_seconds = 0.0;
};

/// Train and evaluate in memory.
FinetuneResult finetune(const RunConfig& config);

/// finetune() plus report.json, checkpoint.ptck and timing.json in
/// config.output_dir (when set).
RunReport run_finetune(const RunConfig& config);

/// Scores `model` on encoded QA pairs: greedy-decode token-overlap F1,
/// teacher-forced MAE of reference-token probabilities, answer-to-question
/// attention entropy, and MAP/NDCG over a pool of candidate answers.
MetricsReport evaluate(const Model& model, const Vocabulary& vocab,
                       std::span<const QAPair> pairs, std::size_t retrieval_pool);

// ---------------------------------------------------------------- reporting

inline constexpr std::array<std::string_view, 6> kMetricNames = {
    "f1_specific", "f1_general", "mae_specific", "mae_general", "entropy_specific",
    "entropy_general"};

double metric_value(const RunReport& report, std::string_view metric);

struct Comparison {
  std::string metric;
  std::vector<double> values_a;
  std::vector<double> values_b;
  SampleSummary summary_a;
  SampleSummary summary_b;
  TestResult test;
};

Comparison compare_runs(std::span<const RunReport> group_a,
                        std::span<const RunReport> group_b, std::string_view metric);
Comparison compare_values(std::span<const double> a, std::span<const double> b,
                          std::string_view metric);
std::string render_comparison(const Comparison& c, std::string_view label_a = "A",
                              std::string_view label_b = "B");

enum class TableFormat { markdown, csv };
TableFormat parse_table_format(std::string_view text);

/// Fixed-point with four decimals, ties to even.
std::string format_fixed4(double value);

std::string emit_tables(std::span<const RunReport> reports, TableFormat format);

struct RatesPreview {
  std::array<std::size_t, 3> steps{};
  std::array<std::array<double, 3>, kGroupCount> rates{};  // [group][step]
};

RatesPreview rates_preview(const TuningPlan& plan);
std::string render_rates(const RatesPreview& preview);

}  // namespace ptune
