#include <doctest.h>

#include <cmath>
#include <set>

#include "tempcog/errors.hpp"
#include "tempcog/synthkit.hpp"

using namespace tempcog;
using namespace tempcog::synth;

TEST_CASE("reference similarity is seeded and noise-free on the diagonal") {
  const ReferenceSimilaritySpec spec{core::YearRange(1990, 2060), 2025, 1.0, 0.05, 9};
  const auto a = gen_reference_similarity(spec);
  const auto b = gen_reference_similarity(spec);
  CHECK(behavior::matrix_digest(a.matrix) == behavior::matrix_digest(b.matrix));
  auto other = spec;
  other.seed = 10;
  CHECK(behavior::matrix_digest(gen_reference_similarity(other).matrix) != behavior::matrix_digest(a.matrix));
  CHECK(a.truth.reference == 2025);

  const auto exact = gen_reference_similarity({core::YearRange(1990, 2060), 2025, 1.0, 0.0, 0});
  for (std::size_t k = 0; k < exact.matrix.size(); ++k) CHECK(*exact.matrix.at(k, k) == 1.0);
  CHECK(*exact.matrix.at_years(2000, 2050) == doctest::Approx(std::exp(-core::d_ref(2000, 2050, 2025))));
  for (std::size_t r = 0; r < a.matrix.size(); ++r)
    for (std::size_t c = 0; c < a.matrix.size(); ++c) {
      CHECK(*a.matrix.at(r, c) >= 0.0);
      CHECK(*a.matrix.at(r, c) <= 1.0);
    }
}

TEST_CASE("metric distance scale") {
  const auto g = gen_metric_distance({core::YearRange(1925, 2124), {core::MetricKind::LogLinear}, 0.0, 0});
  CHECK(g.scale == doctest::Approx(std::log(2124.0 / 1925.0)));
  CHECK(*g.matrix.at_years(1925, 2124) == doctest::Approx(1.0));
}

TEST_CASE("planted neurons") {
  const auto p = gen_planted_neurons({400, 20, 3.0, 1.0, 4, core::YearRange(2000, 2099), 1});
  CHECK(p.planted.size() == 20);
  CHECK(std::set(p.planted.begin(), p.planted.end()).size() == 20);
  CHECK(p.source.layers() == std::vector<int>{0, 1, 2, 3});
  const auto again = gen_planted_neurons({400, 20, 3.0, 1.0, 4, core::YearRange(2000, 2099), 1});
  CHECK(again.planted == p.planted);
  CHECK(again.source.load(2, core::Condition::Temporal).values == p.source.load(2, core::Condition::Temporal).values);

  const auto zero = gen_planted_neurons({400, 20, 0.0, 1.0, 1, core::YearRange(1525, 2524), 1});
  const auto screen = neurons::identify_neurons(zero.source);
  std::set<std::pair<int, std::size_t>> truth(zero.planted.begin(), zero.planted.end());
  for (const auto& s : screen.selection.selected) CHECK_FALSE(truth.count({s.layer, s.index}));
  CHECK_THROWS_AS((void)gen_planted_neurons({10, 11, 3.0, 1.0, 1, core::YearRange(2000, 2009), 1}), ConfigError);
}

TEST_CASE("planted effect size matches the request") {
  const auto p = gen_planted_neurons({100, 100, 3.0, 1.0, 1, core::YearRange(1525, 2524), 4});
  const auto t = p.source.load(0, core::Condition::Temporal);
  const auto n = p.source.load(0, core::Condition::Numerical);
  const auto stats = neurons::layer_stats(t, n);
  double mean_d = 0.0;
  for (const auto& s : stats) mean_d += s.cohen_d / 100.0;
  CHECK(mean_d == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("log coding has the planted law") {
  LogCodingSpec spec;
  spec.range = core::YearRange(2000, 2050);
  spec.sigma = 0.0;
  const auto lc = gen_log_coding(spec);
  const auto t = lc.source.load(0, core::Condition::Temporal);
  const auto idx = spec.range.index_of(2015);
  CHECK(t.at(idx, 3) == doctest::Approx(0.8 * std::log(10.0) + 0.1).epsilon(1e-6));
  CHECK(t.at(spec.range.index_of(2025), 0) == doctest::Approx(0.1));
}

TEST_CASE("linear code returns its weights") {
  const auto c = gen_linear_code({50, 3, 0.0, 2});
  CHECK(c.weights.size() == 3);
  for (std::size_t r = 0; r < 50; ++r) {
    double t = c.bias;
    for (std::size_t k = 0; k < 3; ++k) t += c.weights[k] * double(c.batch.row(r)[k]);
    CHECK(c.targets[r] == doctest::Approx(t).epsilon(1e-5));
  }
}

TEST_CASE("function judge fault injection") {
  FunctionJudge j([](core::Year, core::Year) { return 0.25; });
  j.fail_every = 2;
  j.transient_failures = 1;
  j.garble_every = 3;
  CHECK(j.complete({"m", "p", 0.0, {0, 1}}) == "0.25");
  CHECK_THROWS_AS((void)j.complete({"m", "p", 0.0, {1, 3}}), TransportError);
  CHECK(j.complete({"m", "p", 0.0, {1, 3}}) == "0.25");
  CHECK_FALSE(behavior::parse_rating(j.complete({"m", "p", 0.0, {1, 2}})).has_value());
  CHECK(j.complete({"m", "p", 0.0, {1, 2}}) == "0.25");
  CHECK(j.calls() == 5);
}

TEST_CASE("stimulus years round trip") {
  CHECK(year_from_stimulus(core::render_stimulus(1999, core::Condition::Temporal)) == 1999);
  CHECK(year_from_stimulus("Number: 2-0-2-5") == 2025);
}
