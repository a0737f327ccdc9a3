// ptune: corpus generation, fine-tuning runs, tables and run comparison.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ptune/data.hpp"
#include "ptune/gradcheck.hpp"
#include "ptune/harness.hpp"

using namespace ptune;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::array<T, kGroupCount> parse_five(const std::string& text, const char* flag) {
  const std::vector<std::string> items = split_list(text);
  if (items.size() != kGroupCount) {
    throw UsageError(std::string(flag) + " needs exactly 5 comma-separated values");
  }
  std::array<T, kGroupCount> out{};
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, int>) {
        out[i] = std::stoi(items[i], &used);
      } else {
        const long long v = std::stoll(items[i], &used);
        if (v < 0) throw std::invalid_argument("negative");
        out[i] = static_cast<T>(v);
      }
      if (used != items[i].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": bad value '" + items[i] + "'");
    }
  }
  return out;
}

std::vector<RunReport> load_group(const std::string& dirs) {
  std::vector<RunReport> out;
  for (const std::string& d : split_list(dirs)) out.push_back(load_report(d));
  return out;
}

int gen_data(const std::string& kind, std::size_t size, std::uint64_t seed,
             const std::string& out) {
  QAKind k;
  try {
    k = parse_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (size == 0) throw UsageError("--size must be at least 1");
  const std::vector<QAPair> pairs = generate_corpus(k, size, seed);
  write_corpus(out, pairs);
  std::cout << "wrote " << pairs.size() << " " << kind_name(k) << " pairs to "
            << out << "\n";
  return 0;
}

int train(const std::string& config_path, const std::string& out_dir) {
  RunConfig config = load_run_config(config_path);
  config.output_dir = out_dir;
  const RunReport report = run_finetune(config);
  std::cout << "run " << report.label << " (" << report.policy << "), " << report.train_size
            << " training pairs, " << report.total_steps << " steps\n";
  for (std::size_t e = 0; e < report.epoch_losses.size(); ++e) {
    std::printf("epoch %2zu  loss %.6f\n", e + 1, report.epoch_losses[e]);
  }
  std::cout << emit_tables(std::span<const RunReport>(&report, 1), TableFormat::markdown);
  return 0;
}

int rates(double base_lr, std::size_t data_size, const std::string& params,
          const std::string& mask, std::size_t total_steps) {
  SurgicalPolicy s;
  s.base_lr = base_lr;
  s.data_size = data_size;
  s.params_per_group = parse_five<std::size_t>(params, "--params");
  s.mask = parse_five<int>(mask, "--mask");
  TuningPlan plan{s, LinearSchedule{total_steps}};
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::cout << render_rates(rates_preview(plan));
  return 0;
}

int gradcheck(double epsilon, double tolerance) {
  const auto cases = run_gradcheck_suite({1, 2, 3, 4, 5}, epsilon);
  bool ok = true;
  for (const GradCheckCase& c : cases) {
    const bool pass = c.max_relative_error < tolerance;
    ok = ok && pass;
    std::printf("%-20s seed %llu  max rel err %.3e  %s\n", c.name.c_str(),
                static_cast<unsigned long long>(c.seed), c.max_relative_error,
                pass ? "ok" : "FAIL");
  }
  std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-tuning lab: synthetic QA corpora, tuning plans, metrics and t-tests"};
  app.require_subcommand(1);

  std::string kind, out, config_path, run_dir, format = "markdown", params, mask, group_a,
                                                      group_b, metric;
  std::size_t size = 0, data_size = 0, total_steps = 100;
  std::uint64_t seed = 0;
  double base_lr = 0.0, epsilon = 1e-5, tolerance = 1e-4;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic QA corpus (JSON lines)");
  gen->add_option("--kind", kind, "general or specific")->required();
  gen->add_option("--size", size, "Number of pairs")->required();
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--out", out, "Output path")->required();

  auto* tr = app.add_subcommand("train", "Fine-tune and evaluate one run");
  tr->add_option("--config", config_path, "Run config (JSON)")->required();
  tr->add_option("--out", out, "Run directory")->required();

  auto* ev = app.add_subcommand("eval", "Render a run's metrics table");
  ev->add_option("--run", run_dir, "Run directory(s), comma-separated")->required();
  ev->add_option("--format", format, "markdown or csv");

  auto* rt = app.add_subcommand("rates", "Preview surgical per-group learning rates");
  rt->add_option("--base-lr", base_lr, "Base learning rate")->required();
  rt->add_option("--data-size", data_size, "Training-set size")->required();
  rt->add_option("--params", params, "P0,P1,P2,P3,P4")->required();
  rt->add_option("--mask", mask, "M0,M1,M2,M3,M4")->required();
  rt->add_option("--total-steps", total_steps, "Schedule length")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "Welch t-test between two groups of runs");
  cmp->add_option("--group-a", group_a, "Run directories, comma-separated")->required();
  cmp->add_option("--group-b", group_b, "Run directories, comma-separated")->required();
  cmp->add_option("--metric", metric, "Metric name")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every primitive");
  gc->add_option("--epsilon", epsilon)->capture_default_str();
  gc->add_option("--tolerance", tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return gen_data(kind, size, seed, out);
    if (*tr) return train(config_path, out);
    if (*ev) {
      const TableFormat f = parse_table_format(format);
      const std::vector<RunReport> reports = load_group(run_dir);
      std::cout << emit_tables(reports, f);
      return 0;
    }
    if (*rt) return rates(base_lr, data_size, params, mask, total_steps);
    if (*cmp) {
      try {
        metric_value(RunReport{}, metric);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const auto a = load_group(group_a);
      const auto b = load_group(group_b);
      if (a.size() < 2 || b.size() < 2) throw UsageError("each group needs at least 2 runs");
      std::cout << render_comparison(compare_runs(a, b, metric), "group-a", "group-b");
      return 0;
    }
    if (*gc) return gradcheck(epsilon, tolerance);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
