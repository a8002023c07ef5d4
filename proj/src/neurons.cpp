#include "tempcog/neurons.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace tempcog::neurons {

void InMemoryActivations::add(ActivationTensor tensor) {
  if (tensor.values.size() != tensor.years.size() * tensor.n_neurons) {
    throw StructuralError(fmt::format("layer {}: {} values for {}x{} tensor", tensor.layer,
                                      tensor.values.size(), tensor.years.size(), tensor.n_neurons));
  }
  const auto key = std::make_pair(tensor.layer, tensor.condition);
  tensors_[key] = std::move(tensor);
}

std::vector<int> InMemoryActivations::layers() const {
  std::vector<int> out;
  for (const auto& [key, _] : tensors_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

ActivationTensor InMemoryActivations::load(int layer, core::Condition condition) const {
  const auto it = tensors_.find({layer, condition});
  if (it == tensors_.end()) {
    throw StructuralError(fmt::format("no {} activations for layer {}", core::to_string(condition), layer));
  }
  return it->second;
}

namespace {

std::unique_ptr<dumpio::DumpReader> open_activation_dump(const std::filesystem::path& path) {
  auto reader = std::make_unique<dumpio::DumpReader>(path);
  if (reader->header().kind != dumpio::DumpKind::Activations) {
    throw StructuralError(path.string() + " is not an activation dump");
  }
  if (reader->header().element_type != dumpio::ElementType::Float32) {
    throw StructuralError(path.string() + ": activation dumps must be float32");
  }
  return reader;
}

}  // namespace

DumpActivations::DumpActivations(const std::filesystem::path& temporal,
                                 const std::filesystem::path& numerical)
    : temporal_(open_activation_dump(temporal)), numerical_(open_activation_dump(numerical)) {
  const auto& a = temporal_->header();
  const auto& b = numerical_->header();
  if (a.stimuli != b.stimuli) throw StructuralError("condition dumps have different stimulus lists");
  if (a.layers != b.layers) throw StructuralError("condition dumps have different layer shapes");
}

DumpActivations::DumpActivations(const std::filesystem::path& temporal)
    : temporal_(open_activation_dump(temporal)) {}

std::vector<int> DumpActivations::layers() const {
  std::vector<int> out;
  for (const auto& l : temporal_->header().layers) out.push_back(l.id);
  return out;
}

ActivationTensor DumpActivations::load(int layer, core::Condition condition) const {
  const dumpio::DumpReader* reader =
      condition == core::Condition::Temporal ? temporal_.get() : numerical_.get();
  if (reader == nullptr) throw StructuralError("numerical activations were not provided");
  const auto arr = reader->read_layer(layer);
  ActivationTensor t;
  t.layer = layer;
  t.condition = condition;
  t.years = reader->header().stimuli;
  t.n_neurons = arr.cols();
  t.values = arr.to_float32();
  return t;
}

void write_activation_dump(const std::filesystem::path& path, const ActivationSource& source,
                           core::Condition condition, const std::string& model) {
  const auto layer_ids = source.layers();
  if (layer_ids.empty()) throw StructuralError("activation source has no layers");
  dumpio::DumpHeader h;
  h.kind = dumpio::DumpKind::Activations;
  h.model = model;
  h.condition = std::string(core::to_string(condition));
  h.element_type = dumpio::ElementType::Float32;
  h.attributes["neuron"] = "ffn-post-activation";
  h.attributes["token"] = "last";
  // Shapes need one pass up front; tensors are reloaded per layer while writing.
  for (int id : layer_ids) {
    const auto t = source.load(id, condition);
    if (h.stimuli.empty()) h.stimuli = t.years;
    h.layers.push_back({id, t.n_stimuli(), t.n_neurons});
  }
  dumpio::write_dump(path, h, [&](std::size_t k) {
    const auto t = source.load(layer_ids[k], condition);
    return dumpio::LayerArray::from_float32(t.n_stimuli(), t.n_neurons, t.values);
  });
}

SelectionCriteria SelectionCriteria::parse(std::string_view text) {
  SelectionCriteria c;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(',', pos);
    if (next == std::string_view::npos) next = text.size();
    const auto item = text.substr(pos, next - pos);
    pos = next + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("criteria item '{}' lacks '='", item));
    const auto key = item.substr(0, eq);
    const auto val = item.substr(eq + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size()) {
      throw ConfigError(fmt::format("criteria value '{}' is not a number", val));
    }
    if (key == "d") {
      c.min_effect = v;
    } else if (key == "p") {
      c.max_p_fdr = v;
    } else if (key == "c") {
      c.min_consistency = v;
    } else {
      throw ConfigError(fmt::format("unknown criteria key '{}' (expected d, p, c)", key));
    }
  }
  return c;
}

bool SelectionCriteria::admits(const NeuronStats& s) const noexcept {
  return s.cohen_d > min_effect && s.p_fdr < max_p_fdr && s.consistency > min_consistency;
}

std::vector<NeuronStats> layer_stats(const ActivationTensor& temporal,
                                     const ActivationTensor& numerical) {
  if (temporal.years != numerical.years) {
    throw StructuralError(fmt::format("layer {}: conditions have different stimulus lists", temporal.layer));
  }
  if (temporal.n_neurons != numerical.n_neurons) {
    throw StructuralError(fmt::format("layer {}: {} temporal vs {} numerical neurons", temporal.layer,
                                      temporal.n_neurons, numerical.n_neurons));
  }
  const std::size_t n = temporal.n_stimuli();
  const std::size_t width = temporal.n_neurons;
  std::vector<double> t(n);
  std::vector<double> u(n);
  std::vector<double> delta(n);
  std::vector<NeuronStats> out(width);
  for (std::size_t k = 0; k < width; ++k) {
    for (std::size_t s = 0; s < n; ++s) {
      t[s] = temporal.at(s, k);
      u[s] = numerical.at(s, k);
      if (!std::isfinite(t[s]) || !std::isfinite(u[s])) {
        throw DataError(fmt::format("layer {} neuron {}: non-finite activation", temporal.layer, k));
      }
      delta[s] = t[s] - u[s];
    }
    auto& st = out[k];
    st.layer = temporal.layer;
    st.index = k;
    st.cohen_d = cohens_d(t, u);
    const auto test = paired_t(delta);
    st.t_stat = test.t;
    st.p_raw = test.p;
    st.p_fdr = test.p;
    st.consistency = consistency(delta);
  }
  return out;
}

NeuronScreen identify_neurons(const ActivationSource& source, const SelectionCriteria& criteria) {
  NeuronScreen screen;
  std::optional<std::vector<core::Year>> stimuli;
  for (int layer : source.layers()) {
    const auto temporal = source.load(layer, core::Condition::Temporal);
    const auto numerical = source.load(layer, core::Condition::Numerical);
    if (stimuli && *stimuli != temporal.years) {
      throw StructuralError(fmt::format("layer {} uses a different stimulus list", layer));
    }
    stimuli = temporal.years;
    auto stats = layer_stats(temporal, numerical);
    screen.all.insert(screen.all.end(), stats.begin(), stats.end());
  }

  std::vector<double> p(screen.all.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = screen.all[k].p_raw;
  const auto q = bh_fdr(p);
  for (std::size_t k = 0; k < q.size(); ++k) screen.all[k].p_fdr = q[k];

  auto& sel = screen.selection;
  sel.criteria = criteria;
  sel.total_neurons = screen.all.size();
  for (const auto& s : screen.all) {
    if (criteria.admits(s)) {
      sel.selected.push_back(s);
      ++sel.per_layer[s.layer];
    }
  }
  std::stable_sort(sel.selected.begin(), sel.selected.end(), [](const auto& a, const auto& b) {
    if (a.cohen_d != b.cohen_d) return a.cohen_d > b.cohen_d;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
  });
  sel.proportion = sel.total_neurons == 0 ? 0.0
                                          : static_cast<double>(sel.selected.size()) /
                                                static_cast<double>(sel.total_neurons);
  return screen;
}

ActivationCurve mean_activation_curve(const NeuronSelection& selection,
                                      const ActivationSource& source, std::size_t k) {
  if (selection.selected.empty()) throw InsufficientDataError("activation curve of an empty selection");
  if (k == 0) throw ConfigError("top-k must be positive");
  const std::size_t used = std::min(k, selection.selected.size());

  std::map<int, std::vector<std::size_t>> by_layer;
  for (std::size_t r = 0; r < used; ++r) {
    by_layer[selection.selected[r].layer].push_back(selection.selected[r].index);
  }

  ActivationCurve curve;
  curve.neurons_used = used;
  for (const auto& [layer, indices] : by_layer) {
    const auto t = source.load(layer, core::Condition::Temporal);
    if (curve.years.empty()) {
      curve.years = t.years;
      curve.mean.assign(t.n_stimuli(), 0.0);
    } else if (curve.years != t.years) {
      throw StructuralError("layers disagree on stimulus list");
    }
    for (std::size_t s = 0; s < t.n_stimuli(); ++s) {
      for (auto idx : indices) {
        if (idx >= t.n_neurons) throw StructuralError("selected neuron index beyond layer width");
        curve.mean[s] += t.at(s, idx);
      }
    }
  }
  for (auto& v : curve.mean) v /= static_cast<double>(used);
  return curve;
}

std::string_view to_string(Side side) { return side == Side::Past ? "past" : "future"; }

LogFitReport layerwise_log_fit(const ActivationSource& source, const NeuronSelection& selection,
                               core::Year reference) {
  if (selection.selected.empty()) throw InsufficientDataError("log fit of an empty selection");
  std::map<int, std::vector<std::size_t>> by_layer;
  for (const auto& s : selection.selected) by_layer[s.layer].push_back(s.index);
  for (auto& [_, idx] : by_layer) std::sort(idx.begin(), idx.end());

  LogFitReport report;
  report.reference = reference;
  for (const auto& [layer, indices] : by_layer) {
    const auto t = source.load(layer, core::Condition::Temporal);
    std::vector<double> past_x, past_y, future_x, future_y;
    for (std::size_t s = 0; s < t.n_stimuli(); ++s) {
      const core::Year year = t.years[s];
      if (year == reference) continue;
      double mean = 0.0;
      for (auto idx : indices) mean += t.at(s, idx);
      mean /= static_cast<double>(indices.size());
      const double x = std::log(std::abs(static_cast<double>(reference - year)));
      if (year < reference) {
        past_x.push_back(x);
        past_y.push_back(mean);
      } else {
        future_x.push_back(x);
        future_y.push_back(mean);
      }
    }
    auto fit_side = [&](Side side, const std::vector<double>& x, const std::vector<double>& y) {
      if (x.size() < 2) return;
      report.fits.push_back({layer, side, indices.size(), analysis::ols_fit(x, y)});
    };
    fit_side(Side::Past, past_x, past_y);
    fit_side(Side::Future, future_x, future_y);
  }
  for (const auto& f : report.fits) {
    auto& best = f.side == Side::Past ? report.best_past : report.best_future;
    if (!best || f.fit.r2 > best->fit.r2) best = f;
  }
  return report;
}

}  // namespace tempcog::neurons
