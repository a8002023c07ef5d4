#include "tempcog/analysis.hpp"

#include <fmt/format.h>

#include <cmath>

namespace tempcog::analysis {

RegressionFit ols_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StructuralError("ols_fit: x and y differ in length");
  const std::size_t n = x.size();
  if (n < 2) throw InsufficientDataError(fmt::format("ols_fit needs n >= 2, got {}", n));

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(y[k])) {
      throw DataError("ols_fit: non-finite sample");
    }
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }

  RegressionFit fit;
  fit.n = n;
  if (sxx <= 0.0) {
    fit.alpha = 0.0;
    fit.beta = my;
    fit.r2 = 0.0;
    fit.degenerate = true;
    return fit;
  }
  fit.alpha = sxy / sxx;
  fit.beta = my - fit.alpha * mx;
  if (syy < kDegenerateSsTot) {
    fit.r2 = 0.0;
    fit.degenerate = true;
    return fit;
  }
  double ss_res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = y[k] - (fit.alpha * x[k] + fit.beta);
    ss_res += e * e;
  }
  fit.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

MetricComparison compare_on_samples(std::span<const core::YearPair> pairs,
                                    std::span<const double> observed,
                                    std::span<const core::TheoreticalMetric> metrics) {
  if (pairs.size() != observed.size()) {
    throw StructuralError("compare: pair and observation counts differ");
  }
  if (metrics.empty()) throw ConfigError("compare: no metrics given");

  std::vector<std::size_t> keep;
  keep.reserve(pairs.size());
  std::vector<double> y;
  y.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (std::isnan(observed[k])) continue;
    keep.push_back(k);
    y.push_back(observed[k]);
  }
  if (y.size() < 2) {
    throw InsufficientDataError(
        fmt::format("compare: {} present samples, need at least 2", y.size()));
  }

  MetricComparison out;
  out.samples = y.size();
  std::vector<double> x(y.size());
  for (const auto& metric : metrics) {
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const auto& p = pairs[keep[k]];
      x[k] = metric(p.i, p.j);
    }
    out.fits.push_back({metric, ols_fit(x, y)});
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < out.fits.size(); ++k) {
    if (out.fits[k].fit.r2 > out.fits[best].fit.r2) best = k;
  }
  out.best = out.fits[best].metric;
  return out;
}

MetricComparison compare_metrics(const core::DistanceMatrix& d, const core::PairSet& pairs,
                                 std::span<const core::TheoreticalMetric> metrics) {
  std::vector<double> observed(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    if (!d.range().contains(p.i) || !d.range().contains(p.j)) {
      throw StructuralError(fmt::format("pair ({}, {}) outside matrix range {}", p.i, p.j,
                                        d.range().to_string()));
    }
    const auto v = d.at(d.range().index_of(p.i), d.range().index_of(p.j));
    observed[k] = v ? *v : std::numeric_limits<double>::quiet_NaN();
  }
  return compare_on_samples(pairs.pairs(), observed, metrics);
}

ReferenceEstimate estimate_reference(const core::SimilarityMatrix& s, int window) {
  if (window < 1 || window % 2 == 0) {
    throw ConfigError(fmt::format("window must be an odd positive integer, got {}", window));
  }
  const std::size_t n = s.size();
  const auto w = static_cast<std::size_t>(window);
  if (n < w) {
    throw InsufficientDataError(fmt::format("matrix of size {} is smaller than window {}", n, w));
  }
  const std::size_t half = w / 2;

  ReferenceEstimate est;
  est.window = window;
  for (std::size_t c = half; c + half < n; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = c - half; r <= c + half; ++r) {
      for (std::size_t q = c - half; q <= c + half; ++q) {
        if (r == q) continue;
        if (auto v = s.at(r, q)) {
          sum += *v;
          ++count;
        }
      }
    }
    if (count == 0) continue;
    est.centers.push_back(s.range().year_at(c));
    est.profile.push_back(sum / static_cast<double>(count));
  }
  if (est.centers.empty()) {
    throw InsufficientDataError("estimate_reference: every window is empty");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < est.profile.size(); ++k) {
    if (est.profile[k] < est.profile[best]) best = k;
  }
  est.argmin = est.centers[best];
  est.min_value = est.profile[best];
  return est;
}

}  // namespace tempcog::analysis
