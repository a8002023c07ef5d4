#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "tempcog/behavior.hpp"
#include "tempcog/core.hpp"
#include "tempcog/embeddings.hpp"
#include "tempcog/neurons.hpp"
#include "tempcog/probes.hpp"

// Seeded ground-truth generators. Every generator returns the parameters it
// planted next to the data, and identical specs give identical output.
namespace tempcog::synth {

struct ReferenceSimilaritySpec {
  core::YearRange range;
  core::Year reference = core::kDefaultReference;
  double lambda = 1.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct ReferenceSimilarity {
  core::SimilarityMatrix matrix;
  ReferenceSimilaritySpec truth;
};

// s(i, j) = clamp(exp(-lambda * d_ref(i, j, R)) + N(0, sigma), 0, 1), cells drawn row-major.
[[nodiscard]] ReferenceSimilarity gen_reference_similarity(const ReferenceSimilaritySpec& spec);

struct MetricDistanceSpec {
  core::YearRange range;
  core::TheoreticalMetric metric;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct MetricDistance {
  core::DistanceMatrix matrix;
  MetricDistanceSpec truth;
  double scale = 1.0;  // largest metric value in the range
};

// d(i, j) = clamp(metric(i, j) / scale + N(0, sigma), 0, 1).
[[nodiscard]] MetricDistance gen_metric_distance(const MetricDistanceSpec& spec);

struct PlantedNeuronSpec {
  std::size_t n_neurons = 5000;
  std::size_t n_planted = 50;
  double d_effect = 3.0;
  double consistency = 1.0;
  std::size_t n_layers = 1;
  core::YearRange range;  // one stimulus per year
  std::uint64_t seed = 0;
};

struct PlantedNeurons {
  neurons::InMemoryActivations source;
  std::vector<std::pair<int, std::size_t>> planted;  // (layer, index), sorted
  PlantedNeuronSpec truth;
};

// Numerical activations x ~ N(0, 1). Planted neurons add a per-stimulus
// shift (positive on a `consistency` fraction of stimuli) sized so that the
// mean shift is d_effect; null neurons redraw independent noise.
[[nodiscard]] PlantedNeurons gen_planted_neurons(const PlantedNeuronSpec& spec);

struct LogCodingSpec {
  core::YearRange range;
  core::Year reference = core::kDefaultReference;
  double alpha = 0.8;
  double beta = 0.1;
  double sigma = 0.04;
  // Share of the future-side signal kept; the rest is replaced by the law's
  // values permuted across future years. 1 keeps both sides intact.
  double future_fidelity = 1.0;
  std::size_t n_layers = 1;
  std::size_t neurons_per_layer = 16;
  std::uint64_t seed = 0;
};

struct LogCoding {
  neurons::InMemoryActivations source;  // temporal law plus a numerical control
  LogCodingSpec truth;
};

// Temporal: alpha * ln(max(|R - x|, 1)) + beta + N(0, sigma) for every neuron.
// Numerical control: beta - 1 + N(0, sigma), so every neuron passes the gates.
[[nodiscard]] LogCoding gen_log_coding(const LogCodingSpec& spec);

struct LinearCodeSpec {
  std::size_t n_samples = 5000;
  std::size_t dim = 8;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct LinearCode {
  probes::HiddenStateBatch batch;
  std::vector<double> targets;
  std::vector<double> weights;
  double bias = 0.0;
  LinearCodeSpec truth;
};

// h ~ N(0, I), t = w . h + b + N(0, noise).
[[nodiscard]] LinearCode gen_linear_code(const LinearCodeSpec& spec);

struct HierarchicalCodeSpec {
  core::YearRange range;
  core::PairMode mode = core::PairMode::UpperTriangle;
  std::size_t n_pairs = 2000;  // stratified sample of the pair set
  std::size_t n_layers = 8;
  std::size_t dim = 16;
  double noise = 0.05;
  core::Year reference = core::kDefaultReference;
  dumpio::ElementType element_type = dumpio::ElementType::Float32;
  std::uint64_t seed = 0;
};

struct HierarchicalCode {
  std::vector<double> ref_share;  // per layer: weight of d_ref, d_log gets 1 - share
  std::vector<std::size_t> pair_indices;
  HierarchicalCodeSpec truth;
};

// HSDUMP whose layer l carries (1 - t_l) * z_log * u + t_l * z_ref * v plus
// isotropic noise, t_l = l / (L - 1), z_* standardized distances and u, v
// fixed random unit directions. Shallow layers decode d_log, deep ones d_ref.
HierarchicalCode write_hierarchical_code(const std::filesystem::path& path,
                                         const HierarchicalCodeSpec& spec);

// Replies with the shortest round-trip text of f(i, j). Fault injection is
// keyed on (i + j): a multiple of fail_every fails its first
// transient_failures attempts with TransportError, a multiple of
// garble_every answers without a number on its first attempt, and a multiple
// of always_fail_every never answers.
class FunctionJudge final : public behavior::RatingProvider {
 public:
  using Rule = std::function<double(core::Year, core::Year)>;
  explicit FunctionJudge(Rule rule);

  std::size_t fail_every = 0;
  std::size_t transient_failures = 0;
  std::size_t garble_every = 0;
  std::size_t always_fail_every = 0;  // these pairs never answer

  [[nodiscard]] std::string complete(const behavior::JudgeRequest& request) override;
  [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

 private:
  Rule rule_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mu_;
  std::map<std::pair<core::Year, core::Year>, std::size_t> attempts_;
};

// exp(-d_ref(i, j, R)).
[[nodiscard]] FunctionJudge::Rule reference_rule(core::Year reference = core::kDefaultReference);

// 2-d vectors (cos theta, sin theta), theta = +/- scale * ln(max(|R - y|, 1))
// with the sign of y - R, so the angle between two years is scale * d_ref.
// The year is parsed back from the rendered stimulus.
class AngleEmbeddingProvider final : public embeddings::EmbeddingProvider {
 public:
  explicit AngleEmbeddingProvider(core::Year reference = core::kDefaultReference, double scale = 0.25);
  [[nodiscard]] std::vector<std::vector<double>> embed(std::string_view model,
                                                       std::span<const std::string> inputs) override;
  [[nodiscard]] std::size_t calls() const noexcept { return calls_; }

 private:
  core::Year reference_;
  double scale_;
  std::size_t calls_ = 0;
};

// Recovers the year from a rendered stimulus such as "Year: 1-9-9-9".
[[nodiscard]] core::Year year_from_stimulus(std::string_view text);

}  // namespace tempcog::synth
