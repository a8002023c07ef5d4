#include "tempcog/synthkit.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

namespace tempcog::synth {

namespace {

// In-place Fisher-Yates; rng() % k keeps the draw sequence portable.
template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t k = v.size(); k > 1; --k) {
    std::swap(v[k - 1], v[rng() % k]);
  }
}

double log_gap(core::Year reference, core::Year x) {
  return std::log(std::max(std::abs(static_cast<double>(reference - x)), 1.0));
}

std::vector<double> standardized(std::vector<double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  for (double& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
  return v;
}

}  // namespace

ReferenceSimilarity gen_reference_similarity(const ReferenceSimilaritySpec& spec) {
  if (!(spec.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (spec.sigma < 0.0) throw ConfigError("sigma must be nonnegative");
  ReferenceSimilarity out{core::SimilarityMatrix(spec.range, {"synthetic-reference", core::Condition::Temporal}),
                          spec};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& r = spec.range;
  for (std::size_t a = 0; a < r.size(); ++a) {
    for (std::size_t b = 0; b < r.size(); ++b) {
      const double clean = std::exp(-spec.lambda * core::d_ref(r.year_at(a), r.year_at(b), spec.reference));
      const double e = spec.sigma > 0.0 ? spec.sigma * noise(rng) : 0.0;
      out.matrix.set(a, b, std::clamp(clean + e, 0.0, 1.0));
    }
  }
  return out;
}

MetricDistance gen_metric_distance(const MetricDistanceSpec& spec) {
  if (spec.sigma < 0.0) throw ConfigError("sigma must be nonnegative");
  const auto& r = spec.range;
  MetricDistance out{core::DistanceMatrix(r, {"synthetic-metric", core::Condition::Temporal}), spec, 0.0};
  for (std::size_t a = 0; a < r.size(); ++a) {
    for (std::size_t b = 0; b < r.size(); ++b) {
      out.scale = std::max(out.scale, spec.metric(r.year_at(a), r.year_at(b)));
    }
  }
  if (out.scale == 0.0) out.scale = 1.0;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t a = 0; a < r.size(); ++a) {
    for (std::size_t b = 0; b < r.size(); ++b) {
      const double clean = spec.metric(r.year_at(a), r.year_at(b)) / out.scale;
      const double e = spec.sigma > 0.0 ? spec.sigma * noise(rng) : 0.0;
      out.matrix.set(a, b, std::clamp(clean + e, 0.0, 1.0));
    }
  }
  return out;
}

PlantedNeurons gen_planted_neurons(const PlantedNeuronSpec& spec) {
  if (spec.n_planted > spec.n_neurons) throw ConfigError("more planted neurons than neurons");
  if (spec.n_layers == 0 || spec.n_neurons % spec.n_layers != 0) {
    throw ConfigError("neuron count must split evenly across a positive number of layers");
  }
  if (spec.n_planted > 0 && !(spec.consistency > 1.0 / 3.0 && spec.consistency <= 1.0)) {
    throw ConfigError("planted consistency must lie in (1/3, 1]");
  }
  const std::size_t per_layer = spec.n_neurons / spec.n_layers;
  const std::size_t n_stim = spec.range.size();
  const auto years = spec.range.years();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::size_t> order(spec.n_neurons);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<char> is_planted(spec.n_neurons, 0);
  for (std::size_t k = 0; k < spec.n_planted; ++k) is_planted[order[k]] = 1;

  // Positive shift +a on round(c * n) stimuli, -a/2 elsewhere: mean shift a(1.5c - 0.5).
  const double amplitude = spec.n_planted > 0 ? spec.d_effect / (1.5 * spec.consistency - 0.5) : 0.0;
  const auto n_positive = static_cast<std::size_t>(std::lround(spec.consistency * static_cast<double>(n_stim)));

  PlantedNeurons out;
  out.truth = spec;
  std::vector<std::size_t> stim_order(n_stim);
  for (std::size_t layer = 0; layer < spec.n_layers; ++layer) {
    neurons::ActivationTensor temp{static_cast<int>(layer), core::Condition::Temporal, years, per_layer,
                                   std::vector<float>(n_stim * per_layer)};
    neurons::ActivationTensor num{static_cast<int>(layer), core::Condition::Numerical, years, per_layer,
                                  std::vector<float>(n_stim * per_layer)};
    for (std::size_t n = 0; n < per_layer; ++n) {
      const std::size_t global = layer * per_layer + n;
      std::vector<double> shift(n_stim, 0.0);
      if (is_planted[global]) {
        std::iota(stim_order.begin(), stim_order.end(), std::size_t{0});
        shuffle(stim_order, rng);
        for (std::size_t k = 0; k < n_stim; ++k) {
          shift[stim_order[k]] = (k < n_positive ? amplitude : -0.5 * amplitude) + 0.1 * normal(rng);
        }
        out.planted.emplace_back(static_cast<int>(layer), n);
      } else {
        for (auto& s : shift) s = 0.5 * normal(rng);
      }
      for (std::size_t s = 0; s < n_stim; ++s) {
        const double x = normal(rng);
        num.values[s * per_layer + n] = static_cast<float>(x);
        temp.values[s * per_layer + n] = static_cast<float>(x + shift[s]);
      }
    }
    out.source.add(std::move(temp));
    out.source.add(std::move(num));
  }
  std::sort(out.planted.begin(), out.planted.end());
  return out;
}

LogCoding gen_log_coding(const LogCodingSpec& spec) {
  if (spec.sigma < 0.0) throw ConfigError("sigma must be nonnegative");
  if (spec.future_fidelity < 0.0 || spec.future_fidelity > 1.0) {
    throw ConfigError("future fidelity must lie in [0, 1]");
  }
  if (spec.n_layers == 0 || spec.neurons_per_layer == 0) throw ConfigError("empty log-coding model");
  const auto years = spec.range.years();
  const std::size_t n_stim = years.size();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> law(n_stim);
  std::vector<std::size_t> future;
  for (std::size_t s = 0; s < n_stim; ++s) {
    law[s] = spec.alpha * log_gap(spec.reference, years[s]);
    if (years[s] > spec.reference) future.push_back(s);
  }
  std::vector<std::size_t> permuted = future;
  shuffle(permuted, rng);
  std::vector<double> signal = law;
  for (std::size_t k = 0; k < future.size(); ++k) {
    signal[future[k]] = spec.future_fidelity * law[future[k]] + (1.0 - spec.future_fidelity) * law[permuted[k]];
  }

  LogCoding out;
  out.truth = spec;
  const std::size_t width = spec.neurons_per_layer;
  for (std::size_t layer = 0; layer < spec.n_layers; ++layer) {
    neurons::ActivationTensor temp{static_cast<int>(layer), core::Condition::Temporal, years, width,
                                   std::vector<float>(n_stim * width)};
    neurons::ActivationTensor num{static_cast<int>(layer), core::Condition::Numerical, years, width,
                                  std::vector<float>(n_stim * width)};
    for (std::size_t s = 0; s < n_stim; ++s) {
      for (std::size_t n = 0; n < width; ++n) {
        temp.values[s * width + n] = static_cast<float>(signal[s] + spec.beta + spec.sigma * normal(rng));
        num.values[s * width + n] = static_cast<float>(spec.beta - 1.0 + spec.sigma * normal(rng));
      }
    }
    out.source.add(std::move(temp));
    out.source.add(std::move(num));
  }
  return out;
}

LinearCode gen_linear_code(const LinearCodeSpec& spec) {
  if (spec.dim == 0 || spec.n_samples == 0) throw ConfigError("empty linear code");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LinearCode out;
  out.truth = spec;
  out.weights.resize(spec.dim);
  for (auto& w : out.weights) w = normal(rng);
  out.bias = normal(rng);
  out.batch.layer = 0;
  out.batch.dim = spec.dim;
  out.batch.pair_indices.resize(spec.n_samples);
  std::iota(out.batch.pair_indices.begin(), out.batch.pair_indices.end(), std::size_t{0});
  out.batch.states.resize(spec.n_samples * spec.dim);
  out.targets.resize(spec.n_samples);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    double t = out.bias;
    for (std::size_t k = 0; k < spec.dim; ++k) {
      const auto h = static_cast<float>(normal(rng));
      out.batch.states[s * spec.dim + k] = h;
      t += out.weights[k] * static_cast<double>(h);
    }
    out.targets[s] = t + (spec.noise > 0.0 ? spec.noise * normal(rng) : 0.0);
  }
  return out;
}

HierarchicalCode write_hierarchical_code(const std::filesystem::path& path, const HierarchicalCodeSpec& spec) {
  if (spec.n_layers < 2 || spec.dim < 2) throw ConfigError("hierarchical code needs >= 2 layers and dims");
  const auto pair_set = core::enumerate_pairs(spec.range, spec.mode);
  HierarchicalCode out;
  out.truth = spec;
  out.pair_indices = probes::stratified_pair_sample(pair_set.size(), spec.n_pairs, spec.seed);
  const std::size_t rows = out.pair_indices.size();

  std::vector<double> log_d(rows);
  std::vector<double> ref_d(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& p = pair_set[out.pair_indices[r]];
    log_d[r] = core::d_log(p.i, p.j);
    ref_d[r] = core::d_ref(p.i, p.j, spec.reference);
  }
  log_d = standardized(std::move(log_d));
  ref_d = standardized(std::move(ref_d));

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(spec.dim);
  std::vector<double> v(spec.dim);
  for (auto& x : u) x = normal(rng);
  for (auto& x : v) x = normal(rng);
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  const double un = std::sqrt(dot(u, u));
  for (auto& x : u) x /= un;
  const double uv = dot(u, v);
  for (std::size_t k = 0; k < spec.dim; ++k) v[k] -= uv * u[k];
  const double vn = std::sqrt(dot(v, v));
  for (auto& x : v) x /= vn;

  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    out.ref_share.push_back(static_cast<double>(l) / static_cast<double>(spec.n_layers - 1));
  }

  dumpio::DumpHeader h;
  h.kind = dumpio::DumpKind::HiddenStates;
  h.model = "synthetic-hierarchical";
  h.condition = "year";
  h.pairs = dumpio::PairIndexDescription{spec.range, spec.mode, {}};
  for (auto idx : out.pair_indices) h.pairs->indices.push_back(idx);
  for (std::size_t l = 0; l < spec.n_layers; ++l) h.layers.push_back({static_cast<int>(l), rows, spec.dim});
  h.element_type = spec.element_type;
  h.attributes["token"] = "last";
  h.attributes["generator"] = "hierarchical-code";

  // Layers are generated in order, so the shared rng stream stays deterministic.
  dumpio::write_dump(path, h, [&](std::size_t position) {
    const double t = out.ref_share[position];
    std::vector<float> states(rows * spec.dim);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < spec.dim; ++k) {
        const double clean = (1.0 - t) * log_d[r] * u[k] + t * ref_d[r] * v[k];
        states[r * spec.dim + k] = static_cast<float>(clean + spec.noise * normal(rng));
      }
    }
    return spec.element_type == dumpio::ElementType::Float16
               ? dumpio::LayerArray::quantize_float16(rows, spec.dim, states)
               : dumpio::LayerArray::from_float32(rows, spec.dim, states);
  });
  return out;
}

FunctionJudge::FunctionJudge(Rule rule) : rule_(std::move(rule)) {}

std::string FunctionJudge::complete(const behavior::JudgeRequest& request) {
  ++calls_;
  const auto [i, j] = request.pair;
  const auto key = static_cast<std::size_t>(std::abs(i + j));
  std::size_t attempt = 0;
  {
    std::lock_guard lock(mu_);
    attempt = attempts_[{i, j}]++;
  }
  if (always_fail_every > 0 && key % always_fail_every == 0) {
    throw TransportError(fmt::format("injected permanent failure for ({}, {})", i, j));
  }
  if (fail_every > 0 && key % fail_every == 0 && attempt < transient_failures) {
    throw TransportError(fmt::format("injected transient failure for ({}, {})", i, j));
  }
  if (garble_every > 0 && key % garble_every == 0 && attempt == 0) {
    return "I cannot rate that.";
  }
  return fmt::format("{}", rule_(i, j));
}

FunctionJudge::Rule reference_rule(core::Year reference) {
  return [reference](core::Year i, core::Year j) { return std::exp(-core::d_ref(i, j, reference)); };
}

core::Year year_from_stimulus(std::string_view text) {
  core::Year y = 0;
  bool any = false;
  for (char c : text) {
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      y = y * 10 + (c - '0');
      any = true;
    }
  }
  if (!any) throw DataError(fmt::format("no year in stimulus '{}'", text));
  return y;
}

AngleEmbeddingProvider::AngleEmbeddingProvider(core::Year reference, double scale)
    : reference_(reference), scale_(scale) {}

std::vector<std::vector<double>> AngleEmbeddingProvider::embed(std::string_view,
                                                               std::span<const std::string> inputs) {
  ++calls_;
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const auto& text : inputs) {
    const core::Year y = year_from_stimulus(text);
    const double side = y < reference_ ? -1.0 : 1.0;
    const double theta = side * scale_ * log_gap(reference_, y);
    out.push_back({std::cos(theta), std::sin(theta)});
  }
  return out;
}

}  // namespace tempcog::synth
