#include "tempcog/stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tempcog/errors.hpp"

namespace tempcog::neurons {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance, exactly 0 for constant input
};

Moments moments(std::span<const double> v) {
  Moments m;
  const auto n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) {
    m.mean = *lo;
    return m;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = ss / (n - 1.0);
  return m;
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DomainError("student t needs df > 0");
  if (std::isnan(t)) throw DomainError("student t of NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

double cohens_d(std::span<const double> temporal, std::span<const double> numerical) {
  if (temporal.size() != numerical.size()) throw StructuralError("cohens_d: unequal lengths");
  if (temporal.size() < 2) {
    throw InsufficientDataError(fmt::format("cohens_d needs n >= 2, got {}", temporal.size()));
  }
  const auto t = moments(temporal);
  const auto n = moments(numerical);
  const double diff = t.mean - n.mean;
  const double pooled = std::sqrt((t.var + n.var) / 2.0);
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  }
  return diff / pooled;
}

TTest paired_t(std::span<const double> deltas) {
  if (deltas.size() < 2) {
    throw InsufficientDataError(fmt::format("paired_t needs n >= 2, got {}", deltas.size()));
  }
  const auto m = moments(deltas);
  if (m.var == 0.0) {
    if (m.mean == 0.0) return {0.0, 1.0};
    return {m.mean > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity(),
            0.0};
  }
  const auto n = static_cast<double>(deltas.size());
  const double t = m.mean / (std::sqrt(m.var) / std::sqrt(n));
  return {t, student_t_two_sided(t, n - 1.0)};
}

std::vector<double> bh_fdr(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(fmt::format("p-value {} outside [0,1]", v));
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  std::vector<double> q(m);
  double running = 1.0;
  for (std::size_t rank = m; rank-- > 0;) {
    const double scaled = p[order[rank]] * static_cast<double>(m) / static_cast<double>(rank + 1);
    running = std::min(running, scaled);
    q[order[rank]] = running;
  }
  return q;
}

double consistency(std::span<const double> deltas) {
  if (deltas.empty()) throw InsufficientDataError("consistency of an empty vector");
  const auto positive = std::count_if(deltas.begin(), deltas.end(), [](double d) { return d > 0.0; });
  return static_cast<double>(positive) / static_cast<double>(deltas.size());
}

}  // namespace tempcog::neurons
