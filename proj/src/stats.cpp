#include "ptune/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ptune {
namespace {

// log B(a, b) in extended precision: for df ~ 1e6 the three lgamma terms are
// ~1e7 and cancel down to O(1).
double log_beta(double a, double b) {
  const long double la = lgammal(static_cast<long double>(a));
  const long double lb = lgammal(static_cast<long double>(b));
  const long double lab = lgammal(static_cast<long double>(a) + static_cast<long double>(b));
  return static_cast<double>(la + lb - lab);
}

// Continued fraction for I_x(a,b) (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 200000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

// I_x(a,b) given both x and y = 1 - x, so callers can pass a y that was
// computed without cancellation.
double incomplete_beta_xy(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) - log_beta(a, b);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

// P(T <= -|t|) for Student's t.
double lower_tail(double abs_t, double df) {
  const double t2 = abs_t * abs_t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return 0.5 * incomplete_beta_xy(0.5 * df, 0.5, x, y);
}

TestResult finish(double t, double df) {
  TestResult r;
  r.t_statistic = t;
  r.degrees_of_freedom = df;
  r.p_value = t == 0.0 ? 1.0 : 2.0 * lower_tail(std::fabs(t), df);
  if (r.p_value > 1.0) r.p_value = 1.0;
  r.significant_at_05 = r.p_value < kSignificanceLevel;
  return r;
}

}  // namespace

SampleSummary mean_std(std::span<const double> sample) {
  if (sample.empty()) throw std::invalid_argument("mean_std of an empty sample");
  const double n = static_cast<double>(sample.size());
  double total = 0.0;
  for (double x : sample) total += x;
  const double mean = total / n;
  double ss = 0.0;
  for (double x : sample) ss += (x - mean) * (x - mean);
  const double sd = sample.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {mean, sd, sample.size()};
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta shapes must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("x must lie in [0,1]");
  return incomplete_beta_xy(a, b, x, 1.0 - x);
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isnan(t)) throw std::invalid_argument("t must not be NaN");
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0.0 ? 1.0 : 0.0;
  const double tail = lower_tail(std::fabs(t), df);
  return t < 0.0 ? tail : 1.0 - tail;
}

TestResult t_from_summary(const SampleSummary& a, const SampleSummary& b) {
  if (a.n < 2 || b.n < 2) throw std::invalid_argument("need at least 2 observations");
  if (!(a.sd >= 0.0) || !(b.sd >= 0.0)) throw std::invalid_argument("sd must be non-negative");
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
  const double qa = a.sd * a.sd / na;
  const double qb = b.sd * b.sd / nb;
  const double diff = a.mean - b.mean;
  if (qa + qb == 0.0) {
    if (diff != 0.0) throw std::invalid_argument("degenerate variance");
    return finish(0.0, na + nb - 2.0);
  }
  const double t = diff / std::sqrt(qa + qb);
  const double df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  return finish(t, df);
}

TestResult welch_t(std::span<const double> sample_a, std::span<const double> sample_b) {
  if (sample_a.size() < 2 || sample_b.size() < 2) {
    throw std::invalid_argument("need at least 2 observations");
  }
  return t_from_summary(mean_std(sample_a), mean_std(sample_b));
}

}  // namespace ptune
