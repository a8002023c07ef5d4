#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempcog/core.hpp"
#include "tempcog/errors.hpp"

// Binary tensor container shared by the extractor and the analysis side.
//
// Layout (all integers little-endian):
//   [4  magic "CPRB"][4  version u32][8  metadata length u64][metadata UTF-8 JSON]
//   [offset table: per layer 8 offset u64 + 8 length u64 + 4 CRC32 u32][payloads]
// Offsets are absolute file positions. Payloads are row-major, one row per
// stimulus (or pair), in the declared element type.
namespace tempcog::dumpio {

inline constexpr std::array<char, 4> kMagic{'C', 'P', 'R', 'B'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kTableEntryBytes = 20;

enum class DumpKind { Activations, HiddenStates, Embeddings, Similarity };
enum class ElementType { Float32, Float16, Float64 };

[[nodiscard]] std::string_view to_string(DumpKind kind);
[[nodiscard]] std::string_view format_name(DumpKind kind);  // ACTDUMP, HSDUMP, ...
[[nodiscard]] std::string_view to_string(ElementType type);
[[nodiscard]] std::size_t element_size(ElementType type);

class DumpError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public DumpError {
 public:
  using DumpError::DumpError;
};
class UnknownVersionError : public DumpError {
 public:
  using DumpError::DumpError;
};
class ChecksumError : public DumpError {
 public:
  using DumpError::DumpError;
};
// Header inconsistent with itself or with the payload handed to the writer.
class ShapeError : public DumpError {
 public:
  using DumpError::DumpError;
};

struct LayerShape {
  int id = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Rows of a hidden-state dump index into enumerate_pairs(range, mode).
struct PairIndexDescription {
  core::YearRange range;
  core::PairMode mode = core::PairMode::UpperTriangle;
  std::vector<std::uint64_t> indices;
};

struct DumpHeader {
  DumpKind kind = DumpKind::Activations;
  std::string model;
  std::string condition;                       // "year" | "number" | ""
  std::vector<core::Year> stimuli;             // all kinds except hidden states
  std::optional<PairIndexDescription> pairs;   // hidden states only
  std::vector<LayerShape> layers;
  ElementType element_type = ElementType::Float32;
  std::map<std::string, std::string> attributes;  // conventions, templates, provenance

  [[nodiscard]] std::optional<std::size_t> position_of(int layer_id) const;
};

// One layer's payload. Bytes are kept verbatim so float16 never re-quantizes.
class LayerArray {
 public:
  LayerArray() = default;
  LayerArray(ElementType type, std::uint64_t rows, std::uint64_t cols, std::vector<std::byte> raw);

  static LayerArray from_float32(std::uint64_t rows, std::uint64_t cols, std::span<const float> v);
  static LayerArray from_float64(std::uint64_t rows, std::uint64_t cols, std::span<const double> v);
  // Rounds to nearest-even half precision.
  static LayerArray quantize_float16(std::uint64_t rows, std::uint64_t cols,
                                     std::span<const float> v);

  [[nodiscard]] ElementType type() const noexcept { return type_; }
  [[nodiscard]] std::uint64_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::uint64_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::span<const std::byte> bytes() const noexcept { return raw_; }

  [[nodiscard]] std::vector<float> to_float32() const;
  [[nodiscard]] std::vector<double> to_float64() const;

 private:
  ElementType type_ = ElementType::Float32;
  std::uint64_t rows_ = 0;
  std::uint64_t cols_ = 0;
  std::vector<std::byte> raw_;
};

// Called once per declared layer, in header order.
using LayerProvider = std::function<LayerArray(std::size_t position)>;

// Throws ShapeError (and leaves no file behind) when the header is
// inconsistent or a provided layer does not match its declared shape.
void write_dump(const std::filesystem::path& path, const DumpHeader& header,
                const LayerProvider& provider);

struct TableEntry {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t crc = 0;
};

// Parses header and offset table on construction; layers are read on demand.
// Safe for concurrent read_layer calls.
class DumpReader {
 public:
  explicit DumpReader(std::filesystem::path path);

  [[nodiscard]] const DumpHeader& header() const noexcept { return header_; }
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return table_.size(); }
  [[nodiscard]] const TableEntry& table_entry(std::size_t position) const {
    return table_.at(position);
  }

  // Throws ChecksumError naming the layer on CRC mismatch or short read.
  [[nodiscard]] LayerArray read_layer_at(std::size_t position) const;
  [[nodiscard]] LayerArray read_layer(int layer_id) const;

  [[nodiscard]] std::uint64_t payload_bytes_read() const noexcept { return bytes_read_.load(); }
  [[nodiscard]] std::uint64_t payload_bytes_total() const noexcept;

 private:
  std::filesystem::path path_;
  DumpHeader header_;
  std::vector<TableEntry> table_;
  mutable std::atomic<std::uint64_t> bytes_read_{0};
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> problems;
};

// Opens the file and verifies every layer's checksum.
[[nodiscard]] ValidationReport validate_dump(const std::filesystem::path& path);

// Similarity matrices travel as a single float64 layer, NaN = Missing.
void write_similarity_dump(const std::filesystem::path& path, const core::SimilarityMatrix& m);
[[nodiscard]] core::SimilarityMatrix read_similarity_dump(const std::filesystem::path& path);

}  // namespace tempcog::dumpio
