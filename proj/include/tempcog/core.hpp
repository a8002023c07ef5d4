#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempcog/errors.hpp"

namespace tempcog::core {

using Year = int;

inline constexpr Year kDefaultReference = 2025;

// Inclusive range of calendar years; indices 0..size()-1 map to start..end.
class YearRange {
 public:
  YearRange() = default;
  YearRange(Year start, Year end);

  // Parses "1525:2524".
  static YearRange parse(std::string_view text);

  [[nodiscard]] Year start() const noexcept { return start_; }
  [[nodiscard]] Year end() const noexcept { return end_; }
  [[nodiscard]] std::size_t size() const noexcept {
    return static_cast<std::size_t>(end_ - start_) + 1;
  }
  [[nodiscard]] bool contains(Year y) const noexcept { return y >= start_ && y <= end_; }
  [[nodiscard]] std::size_t index_of(Year y) const;
  [[nodiscard]] Year year_at(std::size_t index) const;
  [[nodiscard]] std::vector<Year> years() const;
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const YearRange&, const YearRange&) = default;

 private:
  Year start_ = 1525;
  Year end_ = 2524;
};

enum class PairMode { Full, UpperTriangle };

[[nodiscard]] std::string_view to_string(PairMode mode);
[[nodiscard]] PairMode parse_pair_mode(std::string_view text);

struct YearPair {
  Year i;
  Year j;
  friend bool operator==(const YearPair&, const YearPair&) = default;
};

// Ordered year pairs, lexicographic in (i, j).
class PairSet {
 public:
  PairSet(YearRange range, PairMode mode);

  [[nodiscard]] const YearRange& range() const noexcept { return range_; }
  [[nodiscard]] PairMode mode() const noexcept { return mode_; }
  [[nodiscard]] std::size_t size() const noexcept { return pairs_.size(); }
  [[nodiscard]] const YearPair& operator[](std::size_t k) const { return pairs_[k]; }
  [[nodiscard]] std::span<const YearPair> pairs() const noexcept { return pairs_; }
  [[nodiscard]] auto begin() const noexcept { return pairs_.begin(); }
  [[nodiscard]] auto end() const noexcept { return pairs_.end(); }

  // Position of (i, j) in this set; nullopt when the pair is not a member.
  [[nodiscard]] std::optional<std::size_t> position(YearPair p) const;

 private:
  YearRange range_;
  PairMode mode_;
  std::vector<YearPair> pairs_;
};

[[nodiscard]] PairSet enumerate_pairs(const YearRange& range, PairMode mode);

// |ln i - ln j|. Throws DomainError for nonpositive years.
[[nodiscard]] double d_log(Year i, Year j);

// Unit-cost insert/delete/substitute distance between two strings.
[[nodiscard]] std::size_t edit_distance(std::string_view a, std::string_view b);

// Edit distance between the plain decimal renderings of two years.
[[nodiscard]] int d_lev(Year i, Year j);

// Log distance relative to a reference year: |ln|R-i| - ln|R-j|| when both
// lie on the same side of R, ln|R-i| + ln|R-j| across it. |R-x| is clamped
// below at 1 and x == R counts as being on the other operand's side.
[[nodiscard]] double d_ref(Year i, Year j, Year reference = kDefaultReference);

enum class MetricKind { LogLinear, Levenshtein, ReferenceLogLinear };

struct TheoreticalMetric {
  MetricKind kind = MetricKind::LogLinear;
  Year reference = kDefaultReference;

  [[nodiscard]] double operator()(Year i, Year j) const;
  // "log-linear", "levenshtein", "reference-log-linear".
  [[nodiscard]] std::string_view name() const;
  // Accepts the long names above or the short CLI forms log|lev|ref.
  static TheoreticalMetric parse(std::string_view text, Year reference = kDefaultReference);

  friend bool operator==(const TheoreticalMetric&, const TheoreticalMetric&) = default;
};

// d_log, d_lev, d_ref in the fixed tie-break order.
[[nodiscard]] std::vector<TheoreticalMetric> all_metrics(Year reference = kDefaultReference);

// Parses "log", "lev", "ref", "all" or a comma-separated list of those.
[[nodiscard]] std::vector<TheoreticalMetric> parse_metric_list(std::string_view text,
                                                               Year reference = kDefaultReference);

enum class Condition { Temporal, Numerical };

// "year" / "number".
[[nodiscard]] std::string_view to_string(Condition c);
// Accepts year|number|temporal|numerical.
[[nodiscard]] Condition parse_condition(std::string_view text);

struct StimulusTemplate {
  // "{digits}" is replaced by the hyphen-joined digits, "{year}" by the plain year.
  std::string temporal = "Year: {digits}";
  std::string numerical = "Number: {digits}";
};

[[nodiscard]] std::string render_stimulus(Year year, Condition condition,
                                          const StimulusTemplate& tmpl = {});

struct MatrixMeta {
  std::string model;
  Condition condition = Condition::Temporal;
};

namespace detail {

struct SimilarityTag {};
struct DistanceTag {};

// n x n matrix over a YearRange with values in [0,1] or Missing (stored as NaN).
template <class Tag>
class UnitMatrix {
 public:
  UnitMatrix() = default;
  explicit UnitMatrix(YearRange range, MatrixMeta meta = {})
      : range_(range),
        meta_(std::move(meta)),
        cells_(range.size() * range.size(), std::numeric_limits<double>::quiet_NaN()) {}

  [[nodiscard]] const YearRange& range() const noexcept { return range_; }
  [[nodiscard]] const MatrixMeta& meta() const noexcept { return meta_; }
  [[nodiscard]] MatrixMeta& meta() noexcept { return meta_; }
  [[nodiscard]] std::size_t size() const noexcept { return range_.size(); }

  [[nodiscard]] bool missing(std::size_t r, std::size_t c) const {
    return std::isnan(cells_[r * size() + c]);
  }
  [[nodiscard]] std::optional<double> at(std::size_t r, std::size_t c) const {
    const double v = cells_[r * size() + c];
    if (std::isnan(v)) return std::nullopt;
    return v;
  }
  [[nodiscard]] std::optional<double> at_years(Year i, Year j) const {
    return at(range_.index_of(i), range_.index_of(j));
  }

  void set(std::size_t r, std::size_t c, double value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw DomainError("matrix cell outside [0,1]");
    }
    cells_[r * size() + c] = value;
  }
  void set_missing(std::size_t r, std::size_t c) {
    cells_[r * size() + c] = std::numeric_limits<double>::quiet_NaN();
  }

  // Row-major cells; NaN marks Missing.
  [[nodiscard]] std::span<const double> raw() const noexcept { return cells_; }

  [[nodiscard]] std::size_t missing_count() const noexcept {
    std::size_t n = 0;
    for (double v : cells_) n += std::isnan(v) ? 1 : 0;
    return n;
  }

 private:
  YearRange range_;
  MatrixMeta meta_;
  std::vector<double> cells_;
};

}  // namespace detail

using SimilarityMatrix = detail::UnitMatrix<detail::SimilarityTag>;
using DistanceMatrix = detail::UnitMatrix<detail::DistanceTag>;

// Cell-wise d = 1 - s; Missing propagates.
[[nodiscard]] DistanceMatrix similarity_to_distance(const SimilarityMatrix& s);

// CSV with a header row and first column of years; empty cell = Missing.
// Values use the shortest round-trip decimal form.
void write_matrix_csv(std::ostream& out, const SimilarityMatrix& m);
void write_matrix_csv(std::ostream& out, const DistanceMatrix& m);
[[nodiscard]] SimilarityMatrix read_similarity_csv(std::istream& in, MatrixMeta meta = {});

}  // namespace tempcog::core
