#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempcog/core.hpp"
#include "tempcog/dumpio.hpp"

namespace tempcog::probes {

// Last-token residual states for one layer, row-major [n_pairs x dim].
struct HiddenStateBatch {
  int layer = 0;
  std::vector<std::size_t> pair_indices;
  std::size_t dim = 0;
  std::vector<float> states;

  [[nodiscard]] std::size_t rows() const noexcept { return pair_indices.size(); }
  [[nodiscard]] std::span<const float> row(std::size_t r) const {
    return std::span<const float>(states).subspan(r * dim, dim);
  }
};

// f(h) = w . h + b in the original (unstandardized) coordinates.
struct ProbeModel {
  std::vector<double> weights;
  double bias = 0.0;

  [[nodiscard]] double predict(std::span<const float> h) const;
};

struct ProbeTrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 1024;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;  // split shuffle only
  bool standardize = true;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic shuffle of 0..n-1 cut at round(n * train_fraction).
[[nodiscard]] Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed);

[[nodiscard]] HiddenStateBatch take_rows(const HiddenStateBatch& batch,
                                         std::span<const std::size_t> rows);

struct TrainedProbe {
  ProbeModel model;
  Split split;
  double train_mse = 0.0;
  // Least-squares optimum on the train split, computed when dim <= 64.
  std::optional<double> closed_form_mse;
  // Adam ended more than 1% above the closed-form optimum.
  bool convexity_flag = false;
  bool degenerate_target = false;
};

inline constexpr std::size_t kClosedFormMaxDim = 64;

// MSE + Adam from zero weights on the train split only. Inputs (optionally)
// and targets are standardized with train-split statistics; the learned map
// is folded back into original coordinates.
[[nodiscard]] TrainedProbe train_probe(const HiddenStateBatch& batch, std::span<const double> targets,
                                       const ProbeTrainConfig& config = {});

struct ProbeScore {
  double r2 = 0.0;
  double adjusted_r2 = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;
  bool degenerate = false;    // SStot < 1e-12, both scores reported as 0
  bool small_sample = false;  // n <= p + 1, adjusted_r2 falls back to r2
  bool negative = false;      // adjusted_r2 < 0, reported unclamped
};

// Scores a probe on a held-out batch. Adjusted R^2 uses p = dim.
[[nodiscard]] ProbeScore evaluate_probe(const ProbeModel& model, const HiddenStateBatch& batch,
                                        std::span<const double> targets);

// Adjusted R^2 from plain R^2, sample count n and input count p.
[[nodiscard]] ProbeScore adjust_r2(double r2, std::size_t n, std::size_t p);

struct LayerSamplingPlan {
  std::size_t total_layers = 0;
  std::vector<int> layers;
};

// All layers when n_layers <= target, else round(linspace(0, n_layers - 1, target)).
[[nodiscard]] LayerSamplingPlan sample_layers(std::size_t n_layers, std::size_t target = 25);

[[nodiscard]] std::vector<double> make_targets(std::span<const core::YearPair> pairs,
                                               const core::TheoreticalMetric& metric);
[[nodiscard]] std::vector<double> make_targets(const core::PairSet& pairs,
                                               const core::TheoreticalMetric& metric);

// One pair index drawn per equal-width stratum of [0, n_pairs); sorted.
[[nodiscard]] std::vector<std::size_t> stratified_pair_sample(std::size_t n_pairs,
                                                              std::size_t count,
                                                              std::uint64_t seed);

struct ProbeReportRow {
  int layer = 0;
  core::TheoreticalMetric metric;
  ProbeScore score;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_mse = 0.0;
  std::optional<double> closed_form_mse;
  bool convexity_flag = false;
};

struct ProbeGap {
  int layer = 0;
  std::string reason;
};

struct ProbeReport {
  std::vector<ProbeReportRow> rows;  // layer order, then metric order
  std::vector<ProbeGap> gaps;
  std::uint64_t seed = 0;
};

// Trains one probe per (layer, metric) over an HSDUMP, one layer in memory
// at a time. All metrics and layers share the same split. Unreadable or
// absent layers are recorded as gaps.
[[nodiscard]] ProbeReport probe_sweep(const dumpio::DumpReader& dump,
                                      std::span<const core::TheoreticalMetric> metrics,
                                      const ProbeTrainConfig& config = {},
                                      std::optional<std::vector<int>> layers = std::nullopt);

// Pairs addressed by an HSDUMP header, in row order.
[[nodiscard]] std::vector<core::YearPair> dump_pairs(const dumpio::DumpHeader& header);

}  // namespace tempcog::probes
