#include "tempcog/probes.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tempcog::probes {

double ProbeModel::predict(std::span<const float> h) const {
  double acc = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * static_cast<double>(h[k]);
  return acc;
}

void ProbeTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("probe learning rate must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("probe train fraction must lie in (0,1)");
  }
  if (batch_size == 0) throw ConfigError("probe batch size must be positive");
}

Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng() % k);
    std::swap(order[k - 1], order[j]);
  }
  auto cut = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  cut = std::clamp<std::size_t>(cut, n > 1 ? 1 : 0, n > 1 ? n - 1 : n);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  return s;
}

HiddenStateBatch take_rows(const HiddenStateBatch& batch, std::span<const std::size_t> rows) {
  HiddenStateBatch out;
  out.layer = batch.layer;
  out.dim = batch.dim;
  out.pair_indices.reserve(rows.size());
  out.states.reserve(rows.size() * batch.dim);
  for (auto r : rows) {
    if (r >= batch.rows()) throw StructuralError("row index beyond batch");
    out.pair_indices.push_back(batch.pair_indices[r]);
    const auto src = batch.row(r);
    out.states.insert(out.states.end(), src.begin(), src.end());
  }
  return out;
}

namespace {

void check_batch(const HiddenStateBatch& batch, std::span<const double> targets) {
  if (batch.dim == 0) throw StructuralError("hidden state dimension must be positive");
  if (batch.states.size() != batch.rows() * batch.dim) {
    throw StructuralError("hidden state buffer does not match rows x dim");
  }
  if (targets.size() != batch.rows()) {
    throw StructuralError(fmt::format("{} targets for {} hidden states", targets.size(), batch.rows()));
  }
  for (float v : batch.states) {
    if (!std::isfinite(v)) throw DataError(fmt::format("layer {}: non-finite hidden state", batch.layer));
  }
  for (double v : targets) {
    if (!std::isfinite(v)) throw DataError("non-finite probe target");
  }
}

double mse(const ProbeModel& model, const HiddenStateBatch& batch, std::span<const double> targets,
           std::span<const std::size_t> rows) {
  double acc = 0.0;
  for (auto r : rows) {
    const double e = model.predict(batch.row(r)) - targets[r];
    acc += e * e;
  }
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

}  // namespace

TrainedProbe train_probe(const HiddenStateBatch& batch, std::span<const double> targets,
                         const ProbeTrainConfig& config) {
  config.validate();
  check_batch(batch, targets);
  if (batch.rows() < 2) throw InsufficientDataError("probe training needs at least 2 rows");

  TrainedProbe out;
  out.split = split_rows(batch.rows(), config.train_fraction, config.seed);
  const auto& train = out.split.train;
  const std::size_t n = train.size();
  const std::size_t dim = batch.dim;

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  Eigen::VectorXd sigma = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim));
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto h = batch.row(train[r]);
    for (std::size_t k = 0; k < dim; ++k) z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = h[k];
    y(static_cast<Eigen::Index>(r)) = targets[train[r]];
  }
  if (config.standardize) {
    mu = z.colwise().mean().transpose();
    z.rowwise() -= mu.transpose();
    sigma = (z.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    for (Eigen::Index k = 0; k < sigma.size(); ++k) {
      if (sigma(k) == 0.0) sigma(k) = 1.0;
    }
    z = z.array().rowwise() / sigma.transpose().array();
  }
  const double y_mean = y.mean();
  const double y_sd = std::sqrt((y.array() - y_mean).square().mean());

  out.model.weights.assign(dim, 0.0);
  if (y_sd < 1e-12) {
    out.degenerate_target = true;
    out.model.bias = y_mean;
    out.train_mse = mse(out.model, batch, targets, train);
    return out;
  }
  const Eigen::VectorXd ys = (y.array() - y_mean) / y_sd;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  double b = 0.0;
  Eigen::VectorXd m_w = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd v_w = Eigen::VectorXd::Zero(w.size());
  double m_b = 0.0;
  double v_b = 0.0;
  double beta1_t = 1.0;
  double beta2_t = 1.0;
  const std::size_t bs = std::min(config.batch_size, n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t start = 0; start < n; start += bs) {
      const auto len = static_cast<Eigen::Index>(std::min(bs, n - start));
      const auto zb = z.middleRows(static_cast<Eigen::Index>(start), len);
      const Eigen::VectorXd resid =
          (zb * w).array() + b - ys.segment(static_cast<Eigen::Index>(start), len).array();
      const Eigen::VectorXd g_w = (2.0 / static_cast<double>(len)) * (zb.transpose() * resid);
      const double g_b = 2.0 * resid.mean();

      beta1_t *= config.beta1;
      beta2_t *= config.beta2;
      m_w = config.beta1 * m_w + (1.0 - config.beta1) * g_w;
      v_w = config.beta2 * v_w + (1.0 - config.beta2) * g_w.cwiseAbs2();
      m_b = config.beta1 * m_b + (1.0 - config.beta1) * g_b;
      v_b = config.beta2 * v_b + (1.0 - config.beta2) * g_b * g_b;
      const double c1 = 1.0 - beta1_t;
      const double c2 = 1.0 - beta2_t;
      w.array() -= config.learning_rate * (m_w.array() / c1) /
                   ((v_w.array() / c2).sqrt() + config.epsilon);
      b -= config.learning_rate * (m_b / c1) / (std::sqrt(v_b / c2) + config.epsilon);
    }
  }

  // Fold standardization into the affine map.
  double bias = y_sd * b + y_mean;
  for (std::size_t k = 0; k < dim; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double wk = y_sd * w(kk) / sigma(kk);
    out.model.weights[k] = wk;
    bias -= wk * mu(kk);
  }
  out.model.bias = bias;
  out.train_mse = mse(out.model, batch, targets, train);

  if (dim <= kClosedFormMaxDim) {
    Eigen::MatrixXd design(z.rows(), z.cols() + 1);
    design << z, Eigen::VectorXd::Ones(z.rows());
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(ys);
    const double ls_mse = (design * coef - ys).squaredNorm() / static_cast<double>(n) * y_sd * y_sd;
    out.closed_form_mse = ls_mse;
    out.convexity_flag = out.train_mse > 1.01 * ls_mse + 1e-12 * y_sd * y_sd;
  }
  return out;
}

ProbeScore evaluate_probe(const ProbeModel& model, const HiddenStateBatch& batch,
                          std::span<const double> targets) {
  check_batch(batch, targets);
  if (model.weights.size() != batch.dim) {
    throw StructuralError(fmt::format("probe of dim {} applied to states of dim {}",
                                      model.weights.size(), batch.dim));
  }
  ProbeScore s;
  s.n = batch.rows();
  s.p = batch.dim;
  if (s.n == 0) throw InsufficientDataError("probe evaluation on an empty batch");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(s.n);
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t r = 0; r < s.n; ++r) {
    const double e = model.predict(batch.row(r)) - targets[r];
    ss_res += e * e;
    ss_tot += (targets[r] - mean) * (targets[r] - mean);
  }
  if (ss_tot < 1e-12) {
    s.degenerate = true;
    return s;
  }
  return adjust_r2(1.0 - ss_res / ss_tot, s.n, s.p);
}

ProbeScore adjust_r2(double r2, std::size_t n, std::size_t p) {
  ProbeScore s;
  s.r2 = r2;
  s.n = n;
  s.p = p;
  if (n <= p + 1) {
    s.small_sample = true;
    s.adjusted_r2 = r2;
  } else {
    s.adjusted_r2 = 1.0 - (1.0 - r2) * static_cast<double>(n - 1) / static_cast<double>(n - p - 1);
  }
  s.negative = s.adjusted_r2 < 0.0;
  return s;
}

LayerSamplingPlan sample_layers(std::size_t n_layers, std::size_t target) {
  if (n_layers == 0) throw ConfigError("model must have at least one layer");
  if (target == 0) throw ConfigError("layer sampling target must be positive");
  LayerSamplingPlan plan;
  plan.total_layers = n_layers;
  if (n_layers <= target || target == 1) {
    if (n_layers <= target) {
      for (std::size_t k = 0; k < n_layers; ++k) plan.layers.push_back(static_cast<int>(k));
    } else {
      plan.layers = {0, static_cast<int>(n_layers - 1)};
    }
    return plan;
  }
  const double step = static_cast<double>(n_layers - 1) / static_cast<double>(target - 1);
  for (std::size_t k = 0; k < target; ++k) {
    const int id = static_cast<int>(std::lround(step * static_cast<double>(k)));
    if (plan.layers.empty() || plan.layers.back() != id) plan.layers.push_back(id);
  }
  return plan;
}

std::vector<double> make_targets(std::span<const core::YearPair> pairs,
                                 const core::TheoreticalMetric& metric) {
  if (pairs.empty()) throw InsufficientDataError("no pairs to build probe targets from");
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(metric(p.i, p.j));
  return out;
}

std::vector<double> make_targets(const core::PairSet& pairs, const core::TheoreticalMetric& metric) {
  return make_targets(pairs.pairs(), metric);
}

std::vector<std::size_t> stratified_pair_sample(std::size_t n_pairs, std::size_t count,
                                                std::uint64_t seed) {
  std::vector<std::size_t> out;
  if (count >= n_pairs) {
    out.resize(n_pairs);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  std::mt19937_64 rng(seed);
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    // Integer stratum bounds avoid floating drift for very large pair sets.
    const std::size_t lo = static_cast<std::size_t>((static_cast<unsigned __int128>(k) * n_pairs) / count);
    const std::size_t hi = static_cast<std::size_t>((static_cast<unsigned __int128>(k + 1) * n_pairs) / count);
    out.push_back(lo + static_cast<std::size_t>(rng() % (hi - lo)));
  }
  return out;
}

std::vector<core::YearPair> dump_pairs(const dumpio::DumpHeader& header) {
  if (header.kind != dumpio::DumpKind::HiddenStates || !header.pairs) {
    throw StructuralError("not a hidden-state dump");
  }
  const auto all = core::enumerate_pairs(header.pairs->range, header.pairs->mode);
  std::vector<core::YearPair> out;
  out.reserve(header.pairs->indices.size());
  for (auto idx : header.pairs->indices) out.push_back(all[idx]);
  return out;
}

ProbeReport probe_sweep(const dumpio::DumpReader& dump,
                        std::span<const core::TheoreticalMetric> metrics,
                        const ProbeTrainConfig& config, std::optional<std::vector<int>> layers) {
  config.validate();
  if (metrics.empty()) throw ConfigError("probe sweep needs at least one metric");
  const auto& header = dump.header();
  const auto pairs = dump_pairs(header);
  std::vector<std::vector<double>> targets;
  for (const auto& m : metrics) targets.push_back(make_targets(pairs, m));

  std::vector<int> wanted;
  if (layers) {
    wanted = *layers;
  } else {
    for (const auto& l : header.layers) wanted.push_back(l.id);
  }

  ProbeReport report;
  report.seed = config.seed;
  for (int layer : wanted) {
    HiddenStateBatch batch;
    try {
      const auto arr = dump.read_layer(layer);
      batch.layer = layer;
      batch.dim = arr.cols();
      batch.pair_indices.assign(header.pairs->indices.begin(), header.pairs->indices.end());
      batch.states = arr.to_float32();
    } catch (const dumpio::DumpError& e) {
      report.gaps.push_back({layer, e.what()});
      continue;
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const auto trained = train_probe(batch, targets[m], config);
      const auto test = take_rows(batch, trained.split.test);
      std::vector<double> test_targets;
      test_targets.reserve(trained.split.test.size());
      for (auto r : trained.split.test) test_targets.push_back(targets[m][r]);
      ProbeReportRow row;
      row.layer = layer;
      row.metric = metrics[m];
      row.score = evaluate_probe(trained.model, test, test_targets);
      row.n_train = trained.split.train.size();
      row.n_test = trained.split.test.size();
      row.train_mse = trained.train_mse;
      row.closed_form_mse = trained.closed_form_mse;
      row.convexity_flag = trained.convexity_flag;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace tempcog::probes
