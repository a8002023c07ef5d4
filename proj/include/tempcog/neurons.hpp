#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempcog/analysis.hpp"
#include "tempcog/core.hpp"
#include "tempcog/dumpio.hpp"
#include "tempcog/stats.hpp"

namespace tempcog::neurons {

// Last-token FFN activations for one layer and one condition,
// row-major [n_stimuli x n_neurons].
struct ActivationTensor {
  int layer = 0;
  core::Condition condition = core::Condition::Temporal;
  std::vector<core::Year> years;
  std::size_t n_neurons = 0;
  std::vector<float> values;

  [[nodiscard]] std::size_t n_stimuli() const noexcept { return years.size(); }
  [[nodiscard]] float at(std::size_t stimulus, std::size_t neuron) const {
    return values[stimulus * n_neurons + neuron];
  }
};

// Layer-at-a-time access to a model's activations under both conditions.
class ActivationSource {
 public:
  virtual ~ActivationSource() = default;
  [[nodiscard]] virtual std::vector<int> layers() const = 0;
  [[nodiscard]] virtual ActivationTensor load(int layer, core::Condition condition) const = 0;
};

class InMemoryActivations final : public ActivationSource {
 public:
  void add(ActivationTensor tensor);
  [[nodiscard]] std::vector<int> layers() const override;
  [[nodiscard]] ActivationTensor load(int layer, core::Condition condition) const override;

 private:
  std::map<std::pair<int, core::Condition>, ActivationTensor> tensors_;
};

// Pair of ACTDUMP files, one per condition. Layers are read lazily.
class DumpActivations final : public ActivationSource {
 public:
  DumpActivations(const std::filesystem::path& temporal, const std::filesystem::path& numerical);
  // Temporal-only source, for curve and log-fit passes.
  explicit DumpActivations(const std::filesystem::path& temporal);

  [[nodiscard]] std::vector<int> layers() const override;
  [[nodiscard]] ActivationTensor load(int layer, core::Condition condition) const override;

 private:
  std::unique_ptr<dumpio::DumpReader> temporal_;
  std::unique_ptr<dumpio::DumpReader> numerical_;
};

// Writes one condition of a source as an ACTDUMP (float32).
void write_activation_dump(const std::filesystem::path& path, const ActivationSource& source,
                           core::Condition condition, const std::string& model = "");

struct NeuronStats {
  int layer = 0;
  std::size_t index = 0;
  double cohen_d = 0.0;
  double t_stat = 0.0;
  double p_raw = 1.0;
  double p_fdr = 1.0;
  double consistency = 0.0;
};

struct SelectionCriteria {
  double min_effect = 2.0;
  double max_p_fdr = 1e-4;
  double min_consistency = 0.95;
  std::size_t top_k = 1000;

  // "d=2.0,p=1e-4,c=0.95" (any subset, any order).
  static SelectionCriteria parse(std::string_view text);
  // Strict on all three gates: d > min, p_fdr < max, consistency > min.
  [[nodiscard]] bool admits(const NeuronStats& s) const noexcept;
};

struct NeuronSelection {
  SelectionCriteria criteria;
  std::vector<NeuronStats> selected;  // cohen_d descending, ties by (layer, index)
  std::map<int, std::size_t> per_layer;
  std::size_t total_neurons = 0;
  double proportion = 0.0;
};

struct NeuronScreen {
  std::vector<NeuronStats> all;  // layer order, then neuron index
  NeuronSelection selection;
};

// Per-neuron statistics for one layer; p_fdr is left equal to p_raw.
[[nodiscard]] std::vector<NeuronStats> layer_stats(const ActivationTensor& temporal,
                                                   const ActivationTensor& numerical);

// Screens every neuron of every layer. FDR correction runs once over all
// neurons of the model.
[[nodiscard]] NeuronScreen identify_neurons(const ActivationSource& source,
                                            const SelectionCriteria& criteria = {});

struct ActivationCurve {
  std::vector<core::Year> years;
  std::vector<double> mean;
  std::size_t neurons_used = 0;
};

// Mean temporal activation of the top min(k, |selection|) neurons per stimulus.
[[nodiscard]] ActivationCurve mean_activation_curve(const NeuronSelection& selection,
                                                    const ActivationSource& source,
                                                    std::size_t k = 1000);

enum class Side { Past, Future };
[[nodiscard]] std::string_view to_string(Side side);

struct LayerLogFit {
  int layer = 0;
  Side side = Side::Past;
  std::size_t neurons = 0;
  analysis::RegressionFit fit;  // activation = alpha * ln|R - x| + beta
};

struct LogFitReport {
  core::Year reference = core::kDefaultReference;
  std::vector<LayerLogFit> fits;
  std::optional<LayerLogFit> best_past;
  std::optional<LayerLogFit> best_future;
};

// Per layer, the mean activation of that layer's selected neurons regressed
// on ln|R - x|, past (x < R) and future (x > R) separately.
[[nodiscard]] LogFitReport layerwise_log_fit(const ActivationSource& source,
                                             const NeuronSelection& selection,
                                             core::Year reference = core::kDefaultReference);

}  // namespace tempcog::neurons
