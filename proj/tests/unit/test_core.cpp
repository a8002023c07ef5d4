#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tempcog/core.hpp"

using namespace tempcog;
using namespace tempcog::core;

TEST_CASE("default range holds 1000 years") {
  const YearRange r;
  CHECK(r.start() == 1525);
  CHECK(r.end() == 2524);
  CHECK(r.size() == 1000);
  CHECK(r.index_of(1525) == 0);
  CHECK(r.year_at(999) == 2524);
  CHECK_THROWS_AS((void)r.index_of(1524), DomainError);
  CHECK_THROWS_AS(YearRange(2000, 1999), DomainError);
}

TEST_CASE("range parsing") {
  CHECK(YearRange::parse("1525:2524") == YearRange(1525, 2524));
  CHECK(YearRange::parse("2000:2000").size() == 1);
  CHECK_THROWS_AS(YearRange::parse("2000"), ConfigError);
  CHECK_THROWS_AS(YearRange::parse("a:b"), ConfigError);
  CHECK(YearRange(1925, 2124).to_string() == "1925:2124");
}

TEST_CASE("pair enumeration counts") {
  CHECK(enumerate_pairs(YearRange(), PairMode::Full).size() == 1'000'000);
  CHECK(enumerate_pairs(YearRange(), PairMode::UpperTriangle).size() == 500'500);
  const auto single = enumerate_pairs(YearRange(2000, 2000), PairMode::Full);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == YearPair{2000, 2000});
}

TEST_CASE("pair enumeration is lexicographic and deterministic") {
  const auto a = enumerate_pairs(YearRange(1990, 1999), PairMode::UpperTriangle);
  const auto b = enumerate_pairs(YearRange(1990, 1999), PairMode::UpperTriangle);
  REQUIRE(a.size() == 55);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k] == b[k]);
    CHECK(a[k].i <= a[k].j);
    if (k > 0) {
      const bool ordered = a[k - 1].i < a[k].i || (a[k - 1].i == a[k].i && a[k - 1].j < a[k].j);
      CHECK(ordered);
    }
    CHECK(a.position(a[k]) == k);
  }
  CHECK_FALSE(a.position({1995, 1990}).has_value());
  const auto full = enumerate_pairs(YearRange(1990, 1999), PairMode::Full);
  for (std::size_t k = 0; k < full.size(); ++k) CHECK(full.position(full[k]) == k);
}

TEST_CASE("d_log examples") {
  CHECK(d_log(10, 10) == 0.0);
  CHECK(d_log(10, 20) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(d_log(500, 510) == doctest::Approx(0.019803).epsilon(1e-4));
  CHECK(d_log(500, 510) < d_log(10, 20));
  CHECK_THROWS_AS((void)d_log(0, 5), DomainError);
  CHECK_THROWS_AS((void)d_log(5, -1), DomainError);
}

TEST_CASE("d_lev examples") {
  CHECK(d_lev(1999, 1999) == 0);
  CHECK(d_lev(1999, 2000) == 4);
  CHECK(d_lev(2024, 2025) == 1);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "") == 3);
}

TEST_CASE("d_ref examples") {
  CHECK(d_ref(2000, 2010, 2025) == doctest::Approx(std::log(5.0 / 3.0)).epsilon(1e-12));
  CHECK(d_ref(2000, 2010, 2025) == doctest::Approx(0.510826).epsilon(1e-6));
  CHECK(d_ref(2020, 2030, 2025) == doctest::Approx(3.218876).epsilon(1e-6));
  CHECK(d_ref(2025, 2026, 2025) == 0.0);
  CHECK(d_ref(2025, 2025, 2025) == 0.0);
  CHECK(d_ref(2024, 2026, 2025) == 0.0);
}

TEST_CASE("metric properties over a subsample") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> year(1525, 2524);
  for (int k = 0; k < 2000; ++k) {
    const int i = year(rng);
    const int j = year(rng);
    const int l = year(rng);
    CHECK(d_log(i, j) == d_log(j, i));
    CHECK(d_lev(i, j) == d_lev(j, i));
    CHECK(d_ref(i, j) == d_ref(j, i));
    CHECK(d_lev(i, l) <= d_lev(i, j) + d_lev(j, l));
    CHECK((d_log(i, j) == 0.0) == (i == j));
    CHECK((d_lev(i, j) == 0) == (i == j));
    CHECK(d_ref(i, i) == 0.0);
    const double a = std::log(std::max(std::abs(2025.0 - i), 1.0));
    const double b = std::log(std::max(std::abs(2025.0 - j), 1.0));
    if ((i < 2025 && j < 2025) || (i > 2025 && j > 2025)) {
      CHECK(d_ref(i, j) <= std::max(a, b));
    } else if ((i < 2025 && j > 2025) || (i > 2025 && j < 2025)) {
      CHECK(d_ref(i, j) == doctest::Approx(a + b).epsilon(1e-12));
    }
  }
}

TEST_CASE("d_lev matches the table oracle on random digit strings") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<int> digit(0, 9);
  for (int k = 0; k < 1000; ++k) {
    std::string a(static_cast<std::size_t>(len(rng)), '0');
    std::string b(static_cast<std::size_t>(len(rng)), '0');
    for (auto& c : a) c = static_cast<char>('0' + digit(rng));
    for (auto& c : b) c = static_cast<char>('0' + digit(rng));
    CHECK(edit_distance(a, b) == oracle::levenshtein(a, b));
  }
}

TEST_CASE("metric objects") {
  const auto all = all_metrics();
  REQUIRE(all.size() == 3);
  CHECK(all[0].name() == "log-linear");
  CHECK(all[1].name() == "levenshtein");
  CHECK(all[2].name() == "reference-log-linear");
  CHECK(TheoreticalMetric::parse("ref", 1900).reference == 1900);
  CHECK(TheoreticalMetric::parse("lev").kind == MetricKind::Levenshtein);
  CHECK(parse_metric_list("all").size() == 3);
  CHECK(parse_metric_list("ref,log").size() == 2);
  CHECK_THROWS_AS(parse_metric_list("bogus"), ConfigError);
  const TheoreticalMetric ref{MetricKind::ReferenceLogLinear, 2025};
  CHECK(ref(2020, 2030) == d_ref(2020, 2030, 2025));
}

TEST_CASE("similarity to distance") {
  SimilarityMatrix s(YearRange(2000, 2001));
  s.set(0, 0, 1.0);
  s.set(0, 1, 0.25);
  s.set(1, 1, 1.0);
  const auto d = similarity_to_distance(s);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(0, 1) == 0.75);
  CHECK_FALSE(d.at(1, 0).has_value());
  CHECK(d.missing_count() == 1);
  CHECK_THROWS_AS(s.set(0, 0, 1.5), DomainError);
  CHECK_THROWS_AS(s.set(0, 0, -0.1), DomainError);
}

TEST_CASE("stimulus rendering") {
  CHECK(render_stimulus(1999, Condition::Temporal) == "Year: 1-9-9-9");
  CHECK(render_stimulus(1999, Condition::Numerical) == "Number: 1-9-9-9");
  CHECK(render_stimulus(7, Condition::Temporal) == "Year: 7");
  StimulusTemplate t;
  t.temporal = "The year {year}";
  CHECK(render_stimulus(1999, Condition::Temporal, t) == "The year 1999");
  CHECK(parse_condition("year") == Condition::Temporal);
  CHECK(parse_condition("number") == Condition::Numerical);
  CHECK_THROWS_AS(parse_condition("colour"), ConfigError);
}

TEST_CASE("matrix CSV round trip keeps exact values and missing cells") {
  SimilarityMatrix s(YearRange(1999, 2001), {"m", Condition::Temporal});
  s.set(0, 0, 1.0);
  s.set(0, 1, 0.1 + 0.2);
  s.set(1, 2, 1.0 / 3.0);
  std::stringstream ss;
  write_matrix_csv(ss, s);
  const auto back = read_similarity_csv(ss);
  CHECK(back.range() == s.range());
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(back.at(r, c) == s.at(r, c));
  }
  std::stringstream bad("year,1999,2001\n1999,1,1\n2001,1,1\n");
  CHECK_THROWS_AS(read_similarity_csv(bad), StructuralError);
}
