#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempcog/analysis.hpp"
#include "tempcog/core.hpp"
#include "tempcog/embeddings.hpp"
#include "tempcog/neurons.hpp"
#include "tempcog/probes.hpp"

// Tables, SVG figures and run manifests.
namespace tempcog::report {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

[[nodiscard]] std::string to_hex(Rgb c);

// Linear interpolation between `low` (value 0) and `high` (value 1).
struct Palette {
  Rgb low{255, 255, 255};
  Rgb high{8, 48, 107};
  Rgb missing{204, 204, 204};

  [[nodiscard]] Rgb at(double value) const;
};

struct HeatmapOptions {
  Palette palette;
  std::size_t downsample = 1;  // block edge in cells; blocks average their present cells
  double cell_px = 0.0;        // 0: fit into roughly 600 px
  std::string title;
};

// One rect per block, row-major, with year tick labels on both axes.
[[nodiscard]] std::string render_heatmap(const core::SimilarityMatrix& m, const HeatmapOptions& options = {});

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // non-finite values break the polyline
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 720.0;
  double height = 420.0;
};

// Polyline chart with a legend. Throws ConfigError for an empty series list.
[[nodiscard]] std::string render_series(std::span<const Series> series, const ChartOptions& options = {});

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;  // colour in [0,1]
  std::string label;   // drawn when nonempty
};

[[nodiscard]] std::string render_scatter(std::span<const ScatterPoint> points, const ChartOptions& options = {},
                                         const Palette& palette = {});

// Table layout: model,log_linear,levenshtein,reference_log_linear,best.
struct MetricTableRow {
  std::string model;
  analysis::MetricComparison comparison;
};
void write_metric_table(std::ostream& out, std::span<const MetricTableRow> rows);

void write_reference_profile(std::ostream& out, const analysis::ReferenceEstimate& e);
void write_neuron_stats(std::ostream& out, std::span<const neurons::NeuronStats> stats);
void write_selection_summary(std::ostream& out, const neurons::NeuronSelection& selection);
void write_activation_curve(std::ostream& out, const neurons::ActivationCurve& curve);
void write_log_fits(std::ostream& out, const neurons::LogFitReport& report);
void write_probe_report(std::ostream& out, const probes::ProbeReport& report);
void write_semantic_matrix(std::ostream& out, const embeddings::SemanticMatrix& s);
void write_mds_coordinates(std::ostream& out, const core::YearRange& range, const embeddings::MdsResult& r);

struct ArtifactDigest {
  std::string path;  // relative to the run directory for outputs
  std::string sha256;
  std::uintmax_t bytes = 0;
};

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(std::string canonical_config);  // digested, stored verbatim
  void add_input(const std::filesystem::path& path);
  // Records every regular file under `run_dir` except the manifest itself.
  void collect_outputs(const std::filesystem::path& run_dir);
  void finish();

  [[nodiscard]] std::string to_json() const;
  // Writes run_dir/manifest.json.
  void write(const std::filesystem::path& run_dir) const;

  [[nodiscard]] const std::vector<ArtifactDigest>& outputs() const noexcept { return outputs_; }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_;
  std::string config_digest_;
  std::vector<ArtifactDigest> inputs_;
  std::vector<ArtifactDigest> outputs_;
  std::chrono::system_clock::time_point started_;
  std::chrono::system_clock::time_point finished_;
};

inline constexpr std::string_view kManifestName = "manifest.json";

// Writes through a temporary sibling and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace tempcog::report
