#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "expertadapt/core/errors.hpp"

namespace expertadapt::report {

namespace stats_detail {

// Continued-fraction expansion of the incomplete beta function (modified
// Lentz method). Converges quickly for x < (a+1)/(a+b+2); callers arrange
// the symmetry so this always holds.
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
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
  throw NumericError("incomplete beta continued fraction failed to converge");
}

}  // namespace stats_detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericError("incomplete beta requires a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * stats_detail::beta_cf(a, b, x) / a;
  return 1.0 - front * stats_detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value for a Student t statistic with `df` degrees of freedom,
/// via P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw NumericError("t-test degrees of freedom must be positive");
  if (!std::isfinite(t)) return 0.0;
  return regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
}

enum class TTestKind { paired, unpaired };

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  bool significant = false;
  /// True when sample variance vanished and the p-value came from the
  /// convention (identical samples -> 1.0, separated constants -> 0.0)
  /// rather than the t distribution.
  bool degenerate = false;
};

namespace stats_detail {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased (n-1 denominator)
  int n = 0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = static_cast<int>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= m.n;
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= (m.n - 1);
  return m;
}

inline TTestResult degenerate_result(double mean_diff, double alpha) {
  TTestResult r;
  r.degenerate = true;
  if (mean_diff == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = mean_diff > 0.0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  }
  r.significant = r.p < alpha;
  return r;
}

}  // namespace stats_detail

/// Two-sided t-test. Paired pairs by index; unpaired defaults to the
/// equal-variance Student form, with `welch` switching to the
/// unequal-variance statistic and Welch-Satterthwaite degrees of freedom.
inline TTestResult t_test(const std::vector<double>& x, const std::vector<double>& y,
                          TTestKind kind, double alpha = 0.05, bool welch = false) {
  using stats_detail::moments;
  if (x.size() < 2 || y.size() < 2) throw NumericError("t-test requires n >= 2 per sample");

  TTestResult r;
  if (kind == TTestKind::paired) {
    if (x.size() != y.size()) throw NumericError("paired t-test requires equal lengths");
    std::vector<double> d(x.size());
    for (size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
    auto m = moments(d);
    if (m.var <= 0.0) return stats_detail::degenerate_result(m.mean, alpha);
    r.df = m.n - 1;
    r.t = m.mean / std::sqrt(m.var / m.n);
  } else {
    auto mx = moments(x);
    auto my = moments(y);
    if (welch) {
      const double vx = mx.var / mx.n, vy = my.var / my.n;
      if (vx + vy <= 0.0) return stats_detail::degenerate_result(mx.mean - my.mean, alpha);
      r.df = (vx + vy) * (vx + vy) /
             (vx * vx / (mx.n - 1) + vy * vy / (my.n - 1));
      r.t = (mx.mean - my.mean) / std::sqrt(vx + vy);
    } else {
      const double pooled =
          ((mx.n - 1) * mx.var + (my.n - 1) * my.var) / (mx.n + my.n - 2);
      if (pooled <= 0.0) return stats_detail::degenerate_result(mx.mean - my.mean, alpha);
      r.df = mx.n + my.n - 2;
      r.t = (mx.mean - my.mean) / std::sqrt(pooled * (1.0 / mx.n + 1.0 / my.n));
    }
  }
  r.p = student_t_two_sided_p(r.t, r.df);
  r.significant = r.p < alpha;
  return r;
}

}  // namespace expertadapt::report
