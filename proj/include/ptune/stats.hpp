#pragma once

#include <cstddef>
#include <span>

namespace ptune {

struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;  // n-1 denominator; 0 for a single observation
  std::size_t n = 0;
};

struct TestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;  // Welch-Satterthwaite, may be fractional
  double p_value = 1.0;             // two-tailed
  bool significant_at_05 = false;
};

inline constexpr double kSignificanceLevel = 0.05;

SampleSummary mean_std(std::span<const double> sample);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// Student-t cumulative distribution function.
double student_t_cdf(double t, double df);

/// Two-tailed Welch (unequal variance) t-test.
TestResult welch_t(std::span<const double> sample_a, std::span<const double> sample_b);

/// The same test from means, standard deviations and sizes.
TestResult t_from_summary(const SampleSummary& a, const SampleSummary& b);

}  // namespace ptune
