#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tempcog/errors.hpp"
#include "tempcog/report.hpp"

using namespace tempcog;
using namespace tempcog::report;

namespace {

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string cell_block(const std::string& svg) {
  const auto begin = svg.find("<g shape-rendering=\"crispEdges\">");
  const auto end = svg.find("</g>", begin);
  return svg.substr(begin, end - begin);
}

core::SimilarityMatrix identity(std::size_t n) {
  core::SimilarityMatrix m(core::YearRange(2000, 2000 + core::Year(n) - 1));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m.set(r, c, r == c ? 1.0 : 0.0);
  return m;
}

}  // namespace

TEST_CASE("palette endpoints") {
  const Palette p;
  CHECK(p.at(0.0) == p.low);
  CHECK(p.at(1.0) == p.high);
  CHECK(p.at(std::nan("")) == p.missing);
  CHECK(to_hex({8, 48, 107}) == "#08306b");
}

TEST_CASE("2x2 heatmap") {
  const auto svg = render_heatmap(identity(2));
  const auto cells = cell_block(svg);
  CHECK(count_of(cells, "<rect") == 4);
  CHECK(count_of(cells, "#08306b") == 2);
  CHECK(count_of(cells, "#ffffff") == 2);
  CHECK(svg.find(">2000<") != std::string::npos);
  CHECK(svg.find(">2001<") != std::string::npos);
}

TEST_CASE("downsampled heatmap") {
  core::SimilarityMatrix m(core::YearRange(1525, 2524));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m.size(); ++c) m.set(r, c, 0.5);
  HeatmapOptions o;
  o.downsample = 4;
  const auto svg = render_heatmap(m, o);
  CHECK(count_of(cell_block(svg), "<rect") == 250 * 250);
  CHECK(svg == render_heatmap(m, o));
}

TEST_CASE("missing cells use the missing colour") {
  core::SimilarityMatrix m(core::YearRange(2000, 2001));
  m.set(0, 0, 1.0);
  CHECK(count_of(cell_block(render_heatmap(m)), "#cccccc") == 3);
}

TEST_CASE("line charts") {
  const std::vector<Series> none;
  CHECK_THROWS_AS((void)render_series(none), ConfigError);
  const std::vector<Series> two{{"a", {0, 1, 2}, {0, 1, 4}}, {"b", {0, 1, 2}, {1, std::nan(""), 3}}};
  const auto svg = render_series(two, {"t", "x", "y"});
  CHECK(svg == render_series(two, {"t", "x", "y"}));
  CHECK(count_of(svg, "<polyline") == 3);
  CHECK(svg.find(">a<") != std::string::npos);
  CHECK(svg.find(">b<") != std::string::npos);
}

TEST_CASE("metric table layout") {
  analysis::MetricComparison cmp;
  cmp.best = {core::MetricKind::ReferenceLogLinear, 2025};
  for (auto m : core::all_metrics()) {
    analysis::MetricFit f;
    f.metric = m;
    f.fit.r2 = m.kind == core::MetricKind::ReferenceLogLinear ? 0.5 : 0.25;
    cmp.fits.push_back(f);
  }
  std::ostringstream out;
  const std::vector<MetricTableRow> rows{{"toy", cmp}};
  write_metric_table(out, rows);
  CHECK(out.str() == "model,log_linear,levenshtein,reference_log_linear,best\ntoy,0.25,0.25,0.5,reference-log-linear\n");
}

TEST_CASE("manifest lists outputs with digests") {
  const auto dir = std::filesystem::temp_directory_path() / "tempcog_manifest_test";
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "sub" / "a.txt", "abc");
  write_file_atomic(dir / "b.txt", "");
  CHECK_FALSE(std::filesystem::exists(dir / "b.txt.partial"));
  RunManifest m("synth", {"tempcog", "synth"});
  m.set_config("kind=reference\n");
  m.collect_outputs(dir);
  m.finish();
  m.write(dir);
  m.collect_outputs(dir);
  REQUIRE(m.outputs().size() == 2);
  CHECK(m.outputs()[0].path == "b.txt");
  CHECK(m.outputs()[1].path == "sub/a.txt");
  CHECK(m.outputs()[1].sha256 == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto j = nlohmann::json::parse(std::ifstream(dir / kManifestName));
  CHECK(j["command"] == "synth");
  CHECK(j["tool_version"] == std::string(kToolVersion));
  CHECK(j["outputs"].size() == 2);
}
