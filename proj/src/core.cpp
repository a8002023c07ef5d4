#include "tempcog/core.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace tempcog::core {

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError(fmt::format("invalid {} '{}'", what, text));
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace

YearRange::YearRange(Year start, Year end) : start_(start), end_(end) {
  if (start > end) {
    throw DomainError(fmt::format("year range start {} exceeds end {}", start, end));
  }
}

YearRange YearRange::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError(fmt::format("year range '{}' must look like START:END", text));
  }
  return YearRange(parse_int(trim(text.substr(0, colon)), "range start"),
                   parse_int(trim(text.substr(colon + 1)), "range end"));
}

std::size_t YearRange::index_of(Year y) const {
  if (!contains(y)) {
    throw DomainError(fmt::format("year {} outside range {}", y, to_string()));
  }
  return static_cast<std::size_t>(y - start_);
}

Year YearRange::year_at(std::size_t index) const {
  if (index >= size()) throw DomainError("year index out of range");
  return start_ + static_cast<Year>(index);
}

std::vector<Year> YearRange::years() const {
  std::vector<Year> out(size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = start_ + static_cast<Year>(k);
  return out;
}

std::string YearRange::to_string() const { return fmt::format("{}:{}", start_, end_); }

std::string_view to_string(PairMode mode) {
  return mode == PairMode::Full ? "full" : "upper";
}

PairMode parse_pair_mode(std::string_view text) {
  if (text == "full") return PairMode::Full;
  if (text == "upper" || text == "upper-triangle") return PairMode::UpperTriangle;
  throw ConfigError(fmt::format("unknown pair mode '{}' (expected full|upper)", text));
}

PairSet::PairSet(YearRange range, PairMode mode) : range_(range), mode_(mode) {
  const std::size_t n = range.size();
  pairs_.reserve(mode == PairMode::Full ? n * n : n * (n + 1) / 2);
  for (Year i = range.start(); i <= range.end(); ++i) {
    const Year j0 = mode == PairMode::Full ? range.start() : i;
    for (Year j = j0; j <= range.end(); ++j) pairs_.push_back({i, j});
  }
}

std::optional<std::size_t> PairSet::position(YearPair p) const {
  if (!range_.contains(p.i) || !range_.contains(p.j)) return std::nullopt;
  const std::size_t n = range_.size();
  const std::size_t r = range_.index_of(p.i);
  const std::size_t c = range_.index_of(p.j);
  if (mode_ == PairMode::Full) return r * n + c;
  if (c < r) return std::nullopt;
  // Rows 0..r-1 contribute n, n-1, ..., n-r+1 pairs.
  return r * n - r * (r - 1) / 2 + (c - r);
}

PairSet enumerate_pairs(const YearRange& range, PairMode mode) { return PairSet(range, mode); }

double d_log(Year i, Year j) {
  if (i <= 0 || j <= 0) {
    throw DomainError(fmt::format("d_log undefined for nonpositive years ({}, {})", i, j));
  }
  return std::abs(std::log(static_cast<double>(i)) - std::log(static_cast<double>(j)));
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t k = 0; k <= b.size(); ++k) row[k] = k;
  for (std::size_t x = 1; x <= a.size(); ++x) {
    std::size_t diag = row[0];
    row[0] = x;
    for (std::size_t y = 1; y <= b.size(); ++y) {
      const std::size_t up = row[y];
      const std::size_t sub = diag + (a[x - 1] == b[y - 1] ? 0 : 1);
      row[y] = std::min({up + 1, row[y - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

int d_lev(Year i, Year j) {
  return static_cast<int>(edit_distance(std::to_string(i), std::to_string(j)));
}

double d_ref(Year i, Year j, Year reference) {
  const long di = static_cast<long>(i) - reference;
  const long dj = static_cast<long>(j) - reference;
  const double li = std::log(static_cast<double>(std::max(std::labs(di), 1L)));
  const double lj = std::log(static_cast<double>(std::max(std::labs(dj), 1L)));
  const bool opposite = (di < 0 && dj > 0) || (di > 0 && dj < 0);
  return opposite ? li + lj : std::abs(li - lj);
}

double TheoreticalMetric::operator()(Year i, Year j) const {
  switch (kind) {
    case MetricKind::LogLinear:
      return d_log(i, j);
    case MetricKind::Levenshtein:
      return static_cast<double>(d_lev(i, j));
    case MetricKind::ReferenceLogLinear:
      return d_ref(i, j, reference);
  }
  return 0.0;
}

std::string_view TheoreticalMetric::name() const {
  switch (kind) {
    case MetricKind::LogLinear:
      return "log-linear";
    case MetricKind::Levenshtein:
      return "levenshtein";
    case MetricKind::ReferenceLogLinear:
      return "reference-log-linear";
  }
  return "";
}

TheoreticalMetric TheoreticalMetric::parse(std::string_view text, Year reference) {
  text = trim(text);
  if (text == "log" || text == "log-linear") return {MetricKind::LogLinear, reference};
  if (text == "lev" || text == "levenshtein") return {MetricKind::Levenshtein, reference};
  if (text == "ref" || text == "reference-log-linear") {
    return {MetricKind::ReferenceLogLinear, reference};
  }
  throw ConfigError(fmt::format("unknown metric '{}' (expected log|lev|ref|all)", text));
}

std::vector<TheoreticalMetric> all_metrics(Year reference) {
  return {{MetricKind::LogLinear, reference},
          {MetricKind::Levenshtein, reference},
          {MetricKind::ReferenceLogLinear, reference}};
}

std::vector<TheoreticalMetric> parse_metric_list(std::string_view text, Year reference) {
  if (trim(text) == "all") return all_metrics(reference);
  std::vector<TheoreticalMetric> out;
  for (auto part : split(text, ',')) {
    auto m = TheoreticalMetric::parse(part, reference);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::string_view to_string(Condition c) { return c == Condition::Temporal ? "year" : "number"; }

Condition parse_condition(std::string_view text) {
  if (text == "year" || text == "temporal") return Condition::Temporal;
  if (text == "number" || text == "numerical") return Condition::Numerical;
  throw ConfigError(fmt::format("unknown condition '{}' (expected year|number)", text));
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string render_stimulus(Year year, Condition condition, const StimulusTemplate& tmpl) {
  const std::string plain = std::to_string(year);
  std::string digits;
  for (char ch : plain) {
    if (ch == '-') {
      digits.push_back(ch);
      continue;
    }
    if (!digits.empty() && digits.back() != '-') digits.push_back('-');
    digits.push_back(ch);
  }
  std::string out = condition == Condition::Temporal ? tmpl.temporal : tmpl.numerical;
  replace_all(out, "{digits}", digits);
  replace_all(out, "{year}", plain);
  return out;
}

DistanceMatrix similarity_to_distance(const SimilarityMatrix& s) {
  DistanceMatrix d(s.range(), s.meta());
  const std::size_t n = s.size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (auto v = s.at(r, c)) d.set(r, c, 1.0 - *v);
    }
  }
  return d;
}

namespace {

template <class M>
void write_csv_impl(std::ostream& out, const M& m) {
  const auto& range = m.range();
  std::string line = "year";
  for (Year y = range.start(); y <= range.end(); ++y) fmt::format_to(std::back_inserter(line), ",{}", y);
  line.push_back('\n');
  out << line;
  const std::size_t n = m.size();
  for (std::size_t r = 0; r < n; ++r) {
    line = std::to_string(range.year_at(r));
    for (std::size_t c = 0; c < n; ++c) {
      line.push_back(',');
      if (auto v = m.at(r, c)) fmt::format_to(std::back_inserter(line), "{}", *v);
    }
    line.push_back('\n');
    out << line;
  }
}

double parse_cell(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError(fmt::format("unparsable matrix cell '{}'", text));
  }
  return v;
}

}  // namespace

void write_matrix_csv(std::ostream& out, const SimilarityMatrix& m) { write_csv_impl(out, m); }
void write_matrix_csv(std::ostream& out, const DistanceMatrix& m) { write_csv_impl(out, m); }

SimilarityMatrix read_similarity_csv(std::istream& in, MatrixMeta meta) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty matrix CSV");
  auto header = split(trim(line), ',');
  if (header.size() < 2) throw StructuralError("matrix CSV header has no year columns");
  std::vector<Year> cols;
  for (std::size_t k = 1; k < header.size(); ++k) cols.push_back(parse_int(trim(header[k]), "year"));
  YearRange range(cols.front(), cols.back());
  if (range.size() != cols.size()) throw StructuralError("matrix CSV years are not contiguous");
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] != range.year_at(k)) throw StructuralError("matrix CSV years are not contiguous");
  }
  SimilarityMatrix m(range, std::move(meta));
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (r >= range.size()) throw StructuralError("matrix CSV has more rows than columns");
    auto fields = split(trim(line), ',');
    if (fields.size() != cols.size() + 1) {
      throw StructuralError(fmt::format("matrix CSV row {} has {} fields, expected {}", r + 1,
                                        fields.size(), cols.size() + 1));
    }
    if (parse_int(trim(fields[0]), "year") != range.year_at(r)) {
      throw StructuralError(fmt::format("matrix CSV row {} year label mismatch", r + 1));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (trim(fields[c + 1]).empty()) continue;
      m.set(r, c, parse_cell(fields[c + 1]));
    }
    ++r;
  }
  if (r != range.size()) throw StructuralError("matrix CSV is not square");
  return m;
}

}  // namespace tempcog::core
