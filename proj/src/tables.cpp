#include <cmath>
#include <cstdio>
#include <sstream>

#include "ptune/harness.hpp"

namespace ptune {

namespace {

std::string metric_list() {
  std::string out;
  for (std::string_view m : kMetricNames) {
    if (!out.empty()) out += ", ";
    out += m;
  }
  return out;
}

std::string markdown_cell(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '|') out += '\\';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out;
}

std::string csv_cell(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

constexpr std::array<std::string_view, 7> kColumns = {
    "Model/Plan",           "F1 (Hyper-Specific)",      "MAE (Hyper-Specific)",
    "F1 (General)",         "MAE (General)",            "Entropy (Hyper-Specific)",
    "Entropy (General)"};

}  // namespace

double metric_value(const RunReport& r, std::string_view metric) {
  if (metric == "f1_specific") return r.specific.f1;
  if (metric == "f1_general") return r.general.f1;
  if (metric == "mae_specific") return r.specific.mae;
  if (metric == "mae_general") return r.general.mae;
  if (metric == "entropy_specific") return r.specific.attention_entropy;
  if (metric == "entropy_general") return r.general.attention_entropy;
  throw std::invalid_argument("unknown metric '" + std::string(metric) +
                              "' (valid: " + metric_list() + ")");
}

Comparison compare_values(std::span<const double> a, std::span<const double> b,
                          std::string_view metric) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("each group needs at least 2 runs (got " +
                                std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + ")");
  }
  Comparison c;
  c.metric = std::string(metric);
  c.values_a.assign(a.begin(), a.end());
  c.values_b.assign(b.begin(), b.end());
  c.summary_a = mean_std(a);
  c.summary_b = mean_std(b);
  c.test = welch_t(a, b);
  return c;
}

Comparison compare_runs(std::span<const RunReport> group_a, std::span<const RunReport> group_b,
                        std::string_view metric) {
  metric_value(RunReport{}, metric);  // reject unknown names before the size check
  std::vector<double> a, b;
  for (const RunReport& r : group_a) a.push_back(metric_value(r, metric));
  for (const RunReport& r : group_b) b.push_back(metric_value(r, metric));
  return compare_values(a, b, metric);
}

std::string render_comparison(const Comparison& c, std::string_view label_a,
                              std::string_view label_b) {
  char line[256];
  std::string out = "metric: " + c.metric + "\n";
  std::snprintf(line, sizeof line, "%s: mean %.6f sd %.6f n %zu\n", std::string(label_a).c_str(),
                c.summary_a.mean, c.summary_a.sd, c.summary_a.n);
  out += line;
  std::snprintf(line, sizeof line, "%s: mean %.6f sd %.6f n %zu\n", std::string(label_b).c_str(),
                c.summary_b.mean, c.summary_b.sd, c.summary_b.n);
  out += line;
  std::snprintf(line, sizeof line, "welch: t %.7f df %.4f p %.7f significant_at_0.05 %s\n",
                c.test.t_statistic, c.test.degrees_of_freedom, c.test.p_value,
                c.test.significant_at_05 ? "yes" : "no");
  out += line;
  return out;
}

TableFormat parse_table_format(std::string_view text) {
  if (text == "markdown" || text == "md") return TableFormat::markdown;
  if (text == "csv") return TableFormat::csv;
  throw UsageError("unknown table format '" + std::string(text) + "' (expected markdown or csv)");
}

// glibc printf rounds the exact binary value, so decimal ties that are exactly
// representable (0.03125) go to even.
std::string format_fixed4(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string emit_tables(std::span<const RunReport> reports, TableFormat format) {
  if (reports.empty()) throw std::invalid_argument("no reports to tabulate");
  std::vector<std::array<std::string, kColumns.size()>> rows;
  for (const RunReport& r : reports) {
    rows.push_back({r.label + " (" + r.policy + ")", format_fixed4(r.specific.f1),
                    format_fixed4(r.specific.mae), format_fixed4(r.general.f1),
                    format_fixed4(r.general.mae), format_fixed4(r.specific.attention_entropy),
                    format_fixed4(r.general.attention_entropy)});
  }
  std::string out;
  if (format == TableFormat::csv) {
    auto emit = [&](const auto& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_cell(cells[i]);
      }
      out += "\r\n";
    };
    emit(kColumns);
    for (const auto& row : rows) emit(row);
    return out;
  }
  auto emit = [&](const auto& cells) {
    out += '|';
    for (const auto& cell : cells) {
      out += ' ';
      out += markdown_cell(cell);
      out += " |";
    }
    out += '\n';
  };
  emit(kColumns);
  out += "|---";
  for (std::size_t i = 1; i < kColumns.size(); ++i) out += "|---:";
  out += "|\n";
  for (const auto& row : rows) emit(row);
  return out;
}

RatesPreview rates_preview(const TuningPlan& plan) {
  plan.validate();
  RatesPreview p;
  const std::size_t total = plan.schedule.total_steps;
  p.steps = {0, total / 2, total};
  for (std::size_t g = 0; g < kGroupCount; ++g)
    for (std::size_t s = 0; s < 3; ++s) p.rates[g][s] = effective_lr(plan, g, p.steps[s]);
  return p;
}

std::string render_rates(const RatesPreview& p) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %14s %14s %14s\n", "group",
                ("step " + std::to_string(p.steps[0])).c_str(),
                ("step " + std::to_string(p.steps[1])).c_str(),
                ("step " + std::to_string(p.steps[2])).c_str());
  out << buf;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    std::snprintf(buf, sizeof buf, "G%-5zu %14.10g %14.10g %14.10g\n", g, p.rates[g][0],
                  p.rates[g][1], p.rates[g][2]);
    out << buf;
  }
  return out.str();
}

}  // namespace ptune
