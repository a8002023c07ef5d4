#include "tempcog/report.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <ostream>

#include "tempcog/digest.hpp"

namespace tempcog::report {

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

constexpr std::array<Rgb, 8> kSeriesColors{{{31, 119, 180},
                                            {255, 127, 14},
                                            {44, 160, 44},
                                            {214, 39, 40},
                                            {148, 103, 189},
                                            {140, 86, 75},
                                            {227, 119, 194},
                                            {127, 127, 127}}};

struct Extent {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    } else if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

// Plot frame shared by line and scatter charts.
class Frame {
 public:
  Frame(const ChartOptions& o, Extent x, Extent y) : o_(o), x_(x), y_(y) {
    x_.settle();
    y_.settle();
  }

  [[nodiscard]] double px(double x) const { return left + (x - x_.lo) / (x_.hi - x_.lo) * plot_w(); }
  [[nodiscard]] double py(double y) const { return top + (1.0 - (y - y_.lo) / (y_.hi - y_.lo)) * plot_h(); }
  [[nodiscard]] double plot_w() const { return o_.width - left - right; }
  [[nodiscard]] double plot_h() const { return o_.height - top - bottom; }

  void open(std::string& svg) const {
    svg += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
        "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        o_.width, o_.height, o_.width, o_.height);
    svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"#ffffff\"/>\n", o_.width,
                       o_.height);
    if (!o_.title.empty()) {
      svg += fmt::format("<text x=\"{:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                         o_.width / 2.0, xml_escape(o_.title));
    }
    svg += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" stroke=\"#000000\"/>\n",
        left, top, plot_w(), plot_h());
    for (int k = 0; k <= 5; ++k) {
      const double xv = x_.lo + (x_.hi - x_.lo) * k / 5.0;
      const double yv = y_.lo + (y_.hi - y_.lo) * k / 5.0;
      svg += fmt::format(
          "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#000000\"/>"
          "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4:.4g}</text>\n",
          px(xv), top + plot_h(), top + plot_h() + 4.0, top + plot_h() + 16.0, xv);
      svg += fmt::format(
          "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"#000000\"/>"
          "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:.4g}</text>\n",
          left - 4.0, py(yv), left, left - 6.0, py(yv) + 4.0, yv);
    }
    if (!o_.x_label.empty()) {
      svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", left + plot_w() / 2.0,
                         o_.height - 8.0, xml_escape(o_.x_label));
    }
    if (!o_.y_label.empty()) {
      svg += fmt::format(
          "<text x=\"14\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0:.2f})\">{1}</text>\n",
          top + plot_h() / 2.0, xml_escape(o_.y_label));
    }
  }

  static constexpr double left = 64.0;
  static constexpr double right = 150.0;
  static constexpr double top = 36.0;
  static constexpr double bottom = 48.0;

 private:
  ChartOptions o_;
  Extent x_;
  Extent y_;
};

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{}", v);
}

}  // namespace

std::string to_hex(Rgb c) { return fmt::format("#{:02x}{:02x}{:02x}", c.r, c.g, c.b); }

Rgb Palette::at(double value) const {
  if (!std::isfinite(value)) return missing;
  const double t = std::clamp(value, 0.0, 1.0);
  auto mix = [t](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround(a + (static_cast<double>(b) - a) * t));
  };
  return {mix(low.r, high.r), mix(low.g, high.g), mix(low.b, high.b)};
}

std::string render_heatmap(const core::SimilarityMatrix& m, const HeatmapOptions& options) {
  const std::size_t n = m.size();
  if (n == 0) throw ConfigError("cannot render an empty matrix");
  if (options.downsample == 0) throw ConfigError("downsample factor must be at least 1");
  const std::size_t ds = options.downsample;
  const std::size_t blocks = (n + ds - 1) / ds;
  const double cell = options.cell_px > 0.0 ? options.cell_px : std::max(600.0 / static_cast<double>(blocks), 1.0);
  const double left = 64.0;
  const double top = options.title.empty() ? 16.0 : 36.0;
  const double side = cell * static_cast<double>(blocks);
  const double width = left + side + 80.0;
  const double height = top + side + 48.0;

  std::string svg;
  svg.reserve(blocks * blocks * 80 + 4096);
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" "
      "viewBox=\"0 0 {0:.0f} {1:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height);
  if (!options.title.empty()) {
    svg += fmt::format("<text x=\"{:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       left + side / 2.0, xml_escape(options.title));
  }
  svg += "<g shape-rendering=\"crispEdges\">\n";
  for (std::size_t br = 0; br < blocks; ++br) {
    for (std::size_t bc = 0; bc < blocks; ++bc) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t r = br * ds; r < std::min(n, (br + 1) * ds); ++r) {
        for (std::size_t c = bc * ds; c < std::min(n, (bc + 1) * ds); ++c) {
          if (auto v = m.at(r, c)) {
            sum += *v;
            ++count;
          }
        }
      }
      const double mean = count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
      svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                         left + cell * static_cast<double>(bc), top + cell * static_cast<double>(br), cell, cell,
                         to_hex(options.palette.at(mean)));
    }
  }
  svg += "</g>\n";
  const std::size_t step = std::max<std::size_t>(1, (blocks + 9) / 10);
  for (std::size_t b = 0; b < blocks; b += step) {
    const double at = cell * (static_cast<double>(b) + 0.5);
    const core::Year year = m.range().year_at(b * ds);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", left + at,
                       top + side + 14.0, year);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", left - 4.0, top + at + 4.0,
                       year);
  }
  // Colour bar.
  const double bar_x = left + side + 24.0;
  svg += fmt::format(
      "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
      "<stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/></linearGradient></defs>\n",
      to_hex(options.palette.low), to_hex(options.palette.high));
  svg += fmt::format(
      "<rect x=\"{0:.2f}\" y=\"{1:.2f}\" width=\"14\" height=\"{2:.2f}\" fill=\"url(#scale)\" stroke=\"#000000\"/>\n"
      "<text x=\"{3:.2f}\" y=\"{4:.2f}\">1</text><text x=\"{3:.2f}\" y=\"{5:.2f}\">0</text>\n",
      bar_x, top, side, bar_x + 18.0, top + 10.0, top + side);
  svg += "</svg>\n";
  return svg;
}

std::string render_series(std::span<const Series> series, const ChartOptions& options) {
  if (series.empty()) throw ConfigError("a line chart needs at least one series");
  Extent xe;
  Extent ye;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw StructuralError(fmt::format("series '{}' has unequal x and y", s.label));
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (std::isfinite(s.y[k])) {
        xe.add(s.x[k]);
        ye.add(s.y[k]);
      }
    }
  }
  const Frame frame(options, xe, ye);
  std::string svg;
  frame.open(svg);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string colour = to_hex(kSeriesColors[k % kSeriesColors.size()]);
    std::string points;
    auto flush = [&] {
      if (!points.empty()) {
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", colour,
                           points);
      }
      points.clear();
    };
    for (std::size_t p = 0; p < s.x.size(); ++p) {
      if (!std::isfinite(s.y[p]) || !std::isfinite(s.x[p])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += fmt::format("{:.2f},{:.2f}", frame.px(s.x[p]), frame.py(s.y[p]));
    }
    flush();
    const double ly = Frame::top + 12.0 + 16.0 * static_cast<double>(k);
    const double lx = options.width - Frame::right + 12.0;
    svg += fmt::format(
        "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" stroke-width=\"2\"/>"
        "<text x=\"{4:.2f}\" y=\"{5:.2f}\">{6}</text>\n",
        lx, ly, lx + 18.0, colour, lx + 22.0, ly + 4.0, xml_escape(s.label));
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_scatter(std::span<const ScatterPoint> points, const ChartOptions& options, const Palette& palette) {
  if (points.empty()) throw ConfigError("a scatter plot needs at least one point");
  Extent xe;
  Extent ye;
  for (const auto& p : points) {
    xe.add(p.x);
    ye.add(p.y);
  }
  const Frame frame(options, xe, ye);
  std::string svg;
  frame.open(svg);
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\" stroke=\"#333333\" stroke-width=\"0.3\"/>\n",
                       frame.px(p.x), frame.py(p.y), to_hex(palette.at(p.value)));
    if (!p.label.empty()) {
      svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"9\">{}</text>\n", frame.px(p.x) + 4.0,
                         frame.py(p.y) - 4.0, xml_escape(p.label));
    }
  }
  svg += "</svg>\n";
  return svg;
}

void write_metric_table(std::ostream& out, std::span<const MetricTableRow> rows) {
  out << "model,log_linear,levenshtein,reference_log_linear,best\n";
  for (const auto& row : rows) {
    std::array<std::string, 3> cells;
    for (const auto& f : row.comparison.fits) {
      cells[static_cast<std::size_t>(f.metric.kind)] = fmt_double(f.fit.r2);
    }
    out << fmt::format("{},{},{},{},{}\n", row.model, cells[0], cells[1], cells[2], row.comparison.best.name());
  }
}

void write_reference_profile(std::ostream& out, const analysis::ReferenceEstimate& e) {
  out << "center,mean_similarity,is_argmin\n";
  for (std::size_t k = 0; k < e.centers.size(); ++k) {
    out << fmt::format("{},{},{}\n", e.centers[k], fmt_double(e.profile[k]), e.centers[k] == e.argmin ? 1 : 0);
  }
}

void write_neuron_stats(std::ostream& out, std::span<const neurons::NeuronStats> stats) {
  out << "layer,neuron,cohen_d,t,p,p_fdr,consistency\n";
  for (const auto& s : stats) {
    out << fmt::format("{},{},{},{},{},{},{}\n", s.layer, s.index, s.cohen_d, s.t_stat, s.p_raw, s.p_fdr,
                       s.consistency);
  }
}

void write_selection_summary(std::ostream& out, const neurons::NeuronSelection& selection) {
  out << "layer,selected\n";
  for (const auto& [layer, count] : selection.per_layer) out << fmt::format("{},{}\n", layer, count);
  out << fmt::format("total,{}\n", selection.selected.size());
  out << fmt::format("neurons,{}\n", selection.total_neurons);
  out << fmt::format("proportion,{}\n", selection.proportion);
}

void write_activation_curve(std::ostream& out, const neurons::ActivationCurve& curve) {
  out << "year,mean_activation\n";
  for (std::size_t k = 0; k < curve.years.size(); ++k) {
    out << fmt::format("{},{}\n", curve.years[k], fmt_double(curve.mean[k]));
  }
}

void write_log_fits(std::ostream& out, const neurons::LogFitReport& report) {
  out << "layer,side,neurons,alpha,beta,r2,n,degenerate,best\n";
  for (const auto& f : report.fits) {
    const auto& best = f.side == neurons::Side::Past ? report.best_past : report.best_future;
    const bool is_best = best && best->layer == f.layer;
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", f.layer, neurons::to_string(f.side), f.neurons, f.fit.alpha,
                       f.fit.beta, f.fit.r2, f.fit.n, f.fit.degenerate ? 1 : 0, is_best ? 1 : 0);
  }
}

void write_probe_report(std::ostream& out, const probes::ProbeReport& report) {
  out << "layer,metric,r2,adjusted_r2,n_train,n_test,p,train_mse,closed_form_mse,degenerate,small_sample,negative,"
         "convexity_flag,seed\n";
  for (const auto& r : report.rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.layer, r.metric.name(), r.score.r2,
                       r.score.adjusted_r2, r.n_train, r.n_test, r.score.p, r.train_mse,
                       r.closed_form_mse ? fmt::format("{}", *r.closed_form_mse) : std::string(),
                       r.score.degenerate ? 1 : 0, r.score.small_sample ? 1 : 0, r.score.negative ? 1 : 0,
                       r.convexity_flag ? 1 : 0, report.seed);
  }
  for (const auto& g : report.gaps) {
    out << fmt::format("{},gap,,,,,,,,,,,,{}\n", g.layer, report.seed);
  }
}

void write_semantic_matrix(std::ostream& out, const embeddings::SemanticMatrix& s) {
  const auto& range = s.range();
  out << "year";
  for (core::Year y : range.years()) out << ',' << y;
  out << '\n';
  for (std::size_t r = 0; r < s.size(); ++r) {
    out << range.year_at(r);
    for (std::size_t c = 0; c < s.size(); ++c) {
      out << ',';
      if (auto v = s.at(r, c)) out << fmt::format("{}", *v);
    }
    out << '\n';
  }
}

void write_mds_coordinates(std::ostream& out, const core::YearRange& range, const embeddings::MdsResult& r) {
  out << "year";
  for (Eigen::Index k = 0; k < r.coordinates.cols(); ++k) out << ",x" << k + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < r.coordinates.rows(); ++i) {
    out << range.year_at(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < r.coordinates.cols(); ++k) out << fmt::format(",{}", r.coordinates(i, k));
    out << '\n';
  }
}

namespace {

std::string iso8601(std::chrono::system_clock::time_point t) {
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(t);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t - secs).count();
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(secs)), ms);
}

ArtifactDigest digest_of(const std::filesystem::path& path, std::string shown) {
  return {std::move(shown), file_sha256(path), std::filesystem::file_size(path)};
}

}  // namespace

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_(std::chrono::system_clock::now()) {}

void RunManifest::set_config(std::string canonical_config) {
  config_digest_ = sha256_hex(canonical_config);
  config_ = std::move(canonical_config);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.push_back(digest_of(path, path.string()));
}

void RunManifest::collect_outputs(const std::filesystem::path& run_dir) {
  outputs_.clear();
  if (!std::filesystem::exists(run_dir)) return;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), run_dir).generic_string();
    if (rel == kManifestName) continue;
    outputs_.push_back(digest_of(entry.path(), rel));
  }
  std::sort(outputs_.begin(), outputs_.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
}

void RunManifest::finish() { finished_ = std::chrono::system_clock::now(); }

std::string RunManifest::to_json() const {
  using nlohmann::json;
  auto list = [](const std::vector<ArtifactDigest>& v) {
    json a = json::array();
    for (const auto& d : v) a.push_back({{"path", d.path}, {"sha256", d.sha256}, {"bytes", d.bytes}});
    return a;
  };
  json config = json::parse(config_.empty() ? "{}" : config_, nullptr, false);
  if (config.is_discarded()) config = config_;
  const json j = {{"command", command_},
                  {"argv", argv_},
                  {"tool_version", kToolVersion},
                  {"config", config},
                  {"config_sha256", config_digest_},
                  {"inputs", list(inputs_)},
                  {"outputs", list(outputs_)},
                  {"started", iso8601(started_)},
                  {"finished", iso8601(finished_)}};
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& run_dir) const {
  write_file_atomic(run_dir / kManifestName, to_json());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tempcog::report
