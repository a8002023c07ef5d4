#include "tempcog/dumpio.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "tempcog/digest.hpp"

namespace tempcog::dumpio {

static_assert(std::endian::native == std::endian::little,
              "payloads are memcpy'd; big-endian hosts are not supported");

using nlohmann::json;

std::string_view to_string(DumpKind kind) {
  switch (kind) {
    case DumpKind::Activations:
      return "activations";
    case DumpKind::HiddenStates:
      return "hidden_states";
    case DumpKind::Embeddings:
      return "embeddings";
    case DumpKind::Similarity:
      return "similarity";
  }
  return "";
}

std::string_view format_name(DumpKind kind) {
  switch (kind) {
    case DumpKind::Activations:
      return "ACTDUMP";
    case DumpKind::HiddenStates:
      return "HSDUMP";
    case DumpKind::Embeddings:
      return "EMBDUMP";
    case DumpKind::Similarity:
      return "SIMDUMP";
  }
  return "";
}

std::string_view to_string(ElementType type) {
  switch (type) {
    case ElementType::Float32:
      return "float32";
    case ElementType::Float16:
      return "float16";
    case ElementType::Float64:
      return "float64";
  }
  return "";
}

std::size_t element_size(ElementType type) {
  switch (type) {
    case ElementType::Float32:
      return 4;
    case ElementType::Float16:
      return 2;
    case ElementType::Float64:
      return 8;
  }
  return 0;
}

namespace {

DumpKind parse_kind(const std::string& s) {
  for (auto k : {DumpKind::Activations, DumpKind::HiddenStates, DumpKind::Embeddings,
                 DumpKind::Similarity}) {
    if (to_string(k) == s) return k;
  }
  throw DumpError(fmt::format("unknown dump kind '{}'", s));
}

ElementType parse_element_type(const std::string& s) {
  for (auto t : {ElementType::Float32, ElementType::Float16, ElementType::Float64}) {
    if (to_string(t) == s) return t;
  }
  throw DumpError(fmt::format("unknown element type '{}'", s));
}

template <class T>
void put_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

json header_to_json(const DumpHeader& h) {
  json j;
  j["format"] = format_name(h.kind);
  j["kind"] = to_string(h.kind);
  j["model"] = h.model;
  j["condition"] = h.condition;
  j["element_type"] = to_string(h.element_type);
  j["byte_order"] = "little";
  j["stimuli"] = h.stimuli;
  json layers = json::array();
  for (const auto& l : h.layers) layers.push_back({{"id", l.id}, {"rows", l.rows}, {"cols", l.cols}});
  j["layers"] = layers;
  if (h.pairs) {
    j["pairs"] = {{"range", h.pairs->range.to_string()},
                  {"mode", core::to_string(h.pairs->mode)},
                  {"indices", h.pairs->indices}};
  }
  j["attributes"] = h.attributes;
  return j;
}

DumpHeader header_from_json(const json& j) {
  DumpHeader h;
  h.kind = parse_kind(j.at("kind").get<std::string>());
  h.model = j.value("model", "");
  h.condition = j.value("condition", "");
  h.element_type = parse_element_type(j.at("element_type").get<std::string>());
  if (j.value("byte_order", "little") != "little") throw DumpError("only little-endian dumps are supported");
  h.stimuli = j.value("stimuli", std::vector<core::Year>{});
  for (const auto& l : j.at("layers")) {
    h.layers.push_back({l.at("id").get<int>(), l.at("rows").get<std::uint64_t>(),
                        l.at("cols").get<std::uint64_t>()});
  }
  if (j.contains("pairs")) {
    const auto& p = j.at("pairs");
    h.pairs = PairIndexDescription{core::YearRange::parse(p.at("range").get<std::string>()),
                                   core::parse_pair_mode(p.at("mode").get<std::string>()),
                                   p.at("indices").get<std::vector<std::uint64_t>>()};
  }
  if (j.contains("attributes")) {
    h.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  }
  return h;
}

void check_header(const DumpHeader& h) {
  if (h.layers.empty()) throw ShapeError("dump declares no layers");
  if (h.element_type == ElementType::Float16 && h.kind != DumpKind::HiddenStates) {
    throw ShapeError("float16 is only permitted for hidden-state dumps");
  }
  if (h.element_type == ElementType::Float64 && h.kind != DumpKind::Similarity) {
    throw ShapeError("float64 is only permitted for similarity dumps");
  }
  if (h.kind == DumpKind::Similarity && h.element_type != ElementType::Float64) {
    throw ShapeError("similarity dumps are float64");
  }
  for (std::size_t a = 0; a < h.layers.size(); ++a) {
    for (std::size_t b = a + 1; b < h.layers.size(); ++b) {
      if (h.layers[a].id == h.layers[b].id) {
        throw ShapeError(fmt::format("layer id {} declared twice", h.layers[a].id));
      }
    }
  }
  std::uint64_t expected_rows = 0;
  if (h.kind == DumpKind::HiddenStates) {
    if (!h.pairs) throw ShapeError("hidden-state dump lacks a pair description");
    expected_rows = h.pairs->indices.size();
    const auto full = core::enumerate_pairs(h.pairs->range, h.pairs->mode).size();
    for (auto idx : h.pairs->indices) {
      if (idx >= full) throw ShapeError(fmt::format("pair index {} outside the declared pair set", idx));
    }
  } else {
    if (h.stimuli.empty()) throw ShapeError("dump declares no stimuli");
    expected_rows = h.stimuli.size();
  }
  for (const auto& l : h.layers) {
    if (l.rows != expected_rows) {
      throw ShapeError(fmt::format("layer {} declares {} rows, expected {}", l.id, l.rows,
                                   expected_rows));
    }
    if (h.kind == DumpKind::Similarity && l.cols != expected_rows) {
      throw ShapeError("similarity layer must be square");
    }
  }
}

}  // namespace

std::optional<std::size_t> DumpHeader::position_of(int layer_id) const {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].id == layer_id) return k;
  }
  return std::nullopt;
}

LayerArray::LayerArray(ElementType type, std::uint64_t rows, std::uint64_t cols,
                       std::vector<std::byte> raw)
    : type_(type), rows_(rows), cols_(cols), raw_(std::move(raw)) {
  if (raw_.size() != rows * cols * element_size(type)) {
    throw ShapeError(fmt::format("layer payload of {} bytes does not match {}x{} {}", raw_.size(),
                                 rows, cols, to_string(type)));
  }
}

namespace {

template <class T>
std::vector<std::byte> to_bytes(std::span<const T> v) {
  std::vector<std::byte> raw(v.size_bytes());
  if (!v.empty()) std::memcpy(raw.data(), v.data(), v.size_bytes());
  return raw;
}

}  // namespace

LayerArray LayerArray::from_float32(std::uint64_t rows, std::uint64_t cols,
                                    std::span<const float> v) {
  return LayerArray(ElementType::Float32, rows, cols, to_bytes(v));
}

LayerArray LayerArray::from_float64(std::uint64_t rows, std::uint64_t cols,
                                    std::span<const double> v) {
  return LayerArray(ElementType::Float64, rows, cols, to_bytes(v));
}

LayerArray LayerArray::quantize_float16(std::uint64_t rows, std::uint64_t cols,
                                        std::span<const float> v) {
  std::vector<std::uint16_t> bits(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) bits[k] = Eigen::half(v[k]).x;
  return LayerArray(ElementType::Float16, rows, cols, to_bytes(std::span<const std::uint16_t>(bits)));
}

std::vector<float> LayerArray::to_float32() const {
  const std::size_t n = rows_ * cols_;
  std::vector<float> out(n);
  switch (type_) {
    case ElementType::Float32:
      if (n > 0) std::memcpy(out.data(), raw_.data(), n * 4);
      break;
    case ElementType::Float16:
      for (std::size_t k = 0; k < n; ++k) {
        std::uint16_t bits;
        std::memcpy(&bits, raw_.data() + 2 * k, 2);
        out[k] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
      }
      break;
    case ElementType::Float64:
      for (std::size_t k = 0; k < n; ++k) {
        double d;
        std::memcpy(&d, raw_.data() + 8 * k, 8);
        out[k] = static_cast<float>(d);
      }
      break;
  }
  return out;
}

std::vector<double> LayerArray::to_float64() const {
  if (type_ == ElementType::Float64) {
    std::vector<double> out(rows_ * cols_);
    if (!out.empty()) std::memcpy(out.data(), raw_.data(), out.size() * 8);
    return out;
  }
  const auto f = to_float32();
  return {f.begin(), f.end()};
}

void write_dump(const std::filesystem::path& path, const DumpHeader& header,
                const LayerProvider& provider) {
  check_header(header);
  const std::string meta = header_to_json(header).dump();
  const std::size_t n_layers = header.layers.size();

  std::vector<TableEntry> table(n_layers);
  std::uint64_t offset = 4 + 4 + 8 + meta.size() + n_layers * kTableEntryBytes;
  for (std::size_t k = 0; k < n_layers; ++k) {
    table[k].offset = offset;
    table[k].length =
        header.layers[k].rows * header.layers[k].cols * element_size(header.element_type);
    offset += table[k].length;
  }

  const auto tmp = std::filesystem::path(path).concat(".partial");
  try {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DumpError("cannot create " + tmp.string());

    std::string head(kMagic.begin(), kMagic.end());
    put_le<std::uint32_t>(head, kFormatVersion);
    put_le<std::uint64_t>(head, meta.size());
    head += meta;
    const auto table_pos = static_cast<std::streamoff>(head.size());
    head.append(n_layers * kTableEntryBytes, '\0');
    out.write(head.data(), static_cast<std::streamsize>(head.size()));

    for (std::size_t k = 0; k < n_layers; ++k) {
      const LayerArray layer = provider(k);
      const auto& shape = header.layers[k];
      if (layer.type() != header.element_type || layer.rows() != shape.rows ||
          layer.cols() != shape.cols) {
        throw ShapeError(fmt::format("layer {}: provided {}x{} {} but header declares {}x{} {}",
                                     shape.id, layer.rows(), layer.cols(), to_string(layer.type()),
                                     shape.rows, shape.cols, to_string(header.element_type)));
      }
      table[k].crc = crc32(layer.bytes());
      out.write(reinterpret_cast<const char*>(layer.bytes().data()),
                static_cast<std::streamsize>(layer.bytes().size()));
    }

    std::string tab;
    for (const auto& e : table) {
      put_le<std::uint64_t>(tab, e.offset);
      put_le<std::uint64_t>(tab, e.length);
      put_le<std::uint32_t>(tab, e.crc);
    }
    out.seekp(table_pos);
    out.write(tab.data(), static_cast<std::streamsize>(tab.size()));
    out.close();
    if (!out) throw DumpError("write failed for " + tmp.string());
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  std::filesystem::rename(tmp, path);
}

DumpReader::DumpReader(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw DumpError("cannot open " + path_.string());
  char fixed[16];
  in.read(fixed, sizeof fixed);
  if (in.gcount() < 4 || std::memcmp(fixed, kMagic.data(), 4) != 0) {
    throw BadMagicError(path_.string() + ": bad magic, not a CPRB dump");
  }
  if (in.gcount() < 16) throw DumpError(path_.string() + ": truncated header");
  const auto version = get_le<std::uint32_t>(fixed + 4);
  if (version != kFormatVersion) {
    throw UnknownVersionError(fmt::format("{}: unknown format version {}", path_.string(), version));
  }
  const auto meta_len = get_le<std::uint64_t>(fixed + 8);
  const auto file_size = std::filesystem::file_size(path_);
  if (meta_len > file_size) throw DumpError(path_.string() + ": truncated metadata");
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (static_cast<std::uint64_t>(in.gcount()) != meta_len) {
    throw DumpError(path_.string() + ": truncated metadata");
  }
  try {
    header_ = header_from_json(json::parse(meta));
  } catch (const json::exception& e) {
    throw DumpError(fmt::format("{}: malformed metadata: {}", path_.string(), e.what()));
  }
  check_header(header_);

  const std::size_t n = header_.layers.size();
  std::string tab(n * kTableEntryBytes, '\0');
  in.read(tab.data(), static_cast<std::streamsize>(tab.size()));
  if (static_cast<std::size_t>(in.gcount()) != tab.size()) {
    throw DumpError(path_.string() + ": truncated offset table");
  }
  table_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const char* p = tab.data() + k * kTableEntryBytes;
    table_[k] = {get_le<std::uint64_t>(p), get_le<std::uint64_t>(p + 8),
                 get_le<std::uint32_t>(p + 16)};
    const auto& shape = header_.layers[k];
    if (table_[k].length != shape.rows * shape.cols * element_size(header_.element_type)) {
      throw ShapeError(fmt::format("{}: layer {} payload length disagrees with declared shape",
                                   path_.string(), shape.id));
    }
  }
}

std::uint64_t DumpReader::payload_bytes_total() const noexcept {
  std::uint64_t total = 0;
  for (const auto& e : table_) total += e.length;
  return total;
}

LayerArray DumpReader::read_layer_at(std::size_t position) const {
  const auto& entry = table_.at(position);
  const auto& shape = header_.layers[position];
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw DumpError("cannot open " + path_.string());
  std::vector<std::byte> raw(entry.length);
  in.seekg(static_cast<std::streamoff>(entry.offset));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(entry.length));
  const auto got = static_cast<std::uint64_t>(std::max<std::streamsize>(in.gcount(), 0));
  bytes_read_ += got;
  if (got != entry.length) {
    throw ChecksumError(fmt::format("{}: layer {} checksum failure (payload truncated: {} of {} bytes)",
                                    path_.string(), shape.id, got, entry.length));
  }
  const auto crc = crc32(raw);
  if (crc != entry.crc) {
    throw ChecksumError(fmt::format("{}: layer {} checksum failure (crc {:08x}, expected {:08x})",
                                    path_.string(), shape.id, crc, entry.crc));
  }
  return LayerArray(header_.element_type, shape.rows, shape.cols, std::move(raw));
}

LayerArray DumpReader::read_layer(int layer_id) const {
  const auto pos = header_.position_of(layer_id);
  if (!pos) throw DumpError(fmt::format("{}: no layer {}", path_.string(), layer_id));
  return read_layer_at(*pos);
}

ValidationReport validate_dump(const std::filesystem::path& path) {
  ValidationReport report;
  try {
    DumpReader reader(path);
    for (std::size_t k = 0; k < reader.layer_count(); ++k) {
      try {
        (void)reader.read_layer_at(k);
      } catch (const DumpError& e) {
        report.ok = false;
        report.problems.emplace_back(e.what());
      }
    }
    const auto expected_end = reader.layer_count() == 0
                                  ? 0
                                  : reader.table_entry(reader.layer_count() - 1).offset +
                                        reader.table_entry(reader.layer_count() - 1).length;
    const auto size = std::filesystem::file_size(path);
    if (report.ok && size != expected_end) {
      report.ok = false;
      report.problems.push_back(
          fmt::format("{}: {} trailing bytes after the last layer", path.string(), size - expected_end));
    }
  } catch (const Error& e) {
    report.ok = false;
    report.problems.emplace_back(e.what());
  }
  return report;
}

void write_similarity_dump(const std::filesystem::path& path, const core::SimilarityMatrix& m) {
  DumpHeader h;
  h.kind = DumpKind::Similarity;
  h.model = m.meta().model;
  h.condition = std::string(core::to_string(m.meta().condition));
  h.stimuli = m.range().years();
  h.element_type = ElementType::Float64;
  h.layers = {{0, m.size(), m.size()}};
  write_dump(path, h, [&](std::size_t) { return LayerArray::from_float64(m.size(), m.size(), m.raw()); });
}

core::SimilarityMatrix read_similarity_dump(const std::filesystem::path& path) {
  DumpReader reader(path);
  const auto& h = reader.header();
  if (h.kind != DumpKind::Similarity) throw DumpError(path.string() + ": not a similarity dump");
  core::YearRange range(h.stimuli.front(), h.stimuli.back());
  if (range.years() != h.stimuli) throw ShapeError("similarity dump stimuli are not contiguous");
  core::MatrixMeta meta{h.model, h.condition.empty() ? core::Condition::Temporal
                                                     : core::parse_condition(h.condition)};
  core::SimilarityMatrix m(range, meta);
  const auto values = reader.read_layer_at(0).to_float64();
  const std::size_t n = m.size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = values[r * n + c];
      if (!std::isnan(v)) m.set(r, c, v);
    }
  }
  return m;
}

}  // namespace tempcog::dumpio
