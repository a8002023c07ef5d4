#pragma once

#include <span>
#include <vector>

// Per-neuron screening statistics.
namespace tempcog::neurons {

// (mean(temp) - mean(num)) / sqrt((s_t^2 + s_n^2) / 2) with sample variances.
// Zero pooled spread yields 0 for equal means and +/-infinity otherwise.
[[nodiscard]] double cohens_d(std::span<const double> temporal, std::span<const double> numerical);

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t on the differences, n - 1 degrees of freedom.
// Constant differences give t = +/-inf, p = 0 (nonzero mean) or t = 0, p = 1.
[[nodiscard]] TTest paired_t(std::span<const double> deltas);

// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees of freedom.
[[nodiscard]] double student_t_two_sided(double t, double df);

// Regularized incomplete beta I_x(a, b).
[[nodiscard]] double regularized_incomplete_beta(double a, double b, double x);

// Benjamini-Hochberg step-up adjustment, returned in input order.
// Throws DomainError for p outside [0,1].
[[nodiscard]] std::vector<double> bh_fdr(std::span<const double> p);

// Fraction of strictly positive deltas.
[[nodiscard]] double consistency(std::span<const double> deltas);

}  // namespace tempcog::neurons
