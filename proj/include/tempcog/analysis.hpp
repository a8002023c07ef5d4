#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tempcog/core.hpp"

namespace tempcog::analysis {

// y = alpha * x + beta + e
struct RegressionFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
  // SStot below 1e-12 (or constant x): r2 is reported as 0.
  bool degenerate = false;
};

inline constexpr double kDegenerateSsTot = 1e-12;

// Closed-form least squares. Inputs must already be filtered of Missing
// entries. Throws InsufficientDataError for n < 2 and DataError for
// non-finite values.
[[nodiscard]] RegressionFit ols_fit(std::span<const double> x, std::span<const double> y);

struct MetricFit {
  core::TheoreticalMetric metric;
  RegressionFit fit;
};

struct MetricComparison {
  std::vector<MetricFit> fits;  // in the order the metrics were given
  core::TheoreticalMetric best;
  std::size_t samples = 0;
};

// Regresses observed distances onto each metric over the same samples. NaN
// in `observed` marks Missing. The best metric has maximal r2; ties go to
// the earliest metric in `metrics`.
[[nodiscard]] MetricComparison compare_on_samples(std::span<const core::YearPair> pairs,
                                                  std::span<const double> observed,
                                                  std::span<const core::TheoreticalMetric> metrics);

[[nodiscard]] MetricComparison compare_metrics(const core::DistanceMatrix& d,
                                               const core::PairSet& pairs,
                                               std::span<const core::TheoreticalMetric> metrics);

struct ReferenceEstimate {
  int window = 5;
  std::vector<core::Year> centers;  // admissible centers with at least one present cell
  std::vector<double> profile;      // mean windowed similarity per center
  core::Year argmin = 0;
  double min_value = 0.0;
};

// Diagonal sliding window: for each center c, the mean of present cells
// s(i, j) with i, j in [c - h, c + h] and i != j, h = (window - 1) / 2.
// Centers closer than h to either edge are excluded. Ties resolve to the
// earliest year.
[[nodiscard]] ReferenceEstimate estimate_reference(const core::SimilarityMatrix& s,
                                                   int window = 5);

}  // namespace tempcog::analysis
