#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "tempcog/dumpio.hpp"
#include "tempcog/neurons.hpp"

using namespace tempcog;
using namespace tempcog::dumpio;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tempcog_dump_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

DumpHeader act_header(std::size_t layers, std::size_t rows, std::size_t cols) {
  DumpHeader h;
  h.kind = DumpKind::Activations;
  h.model = "toy";
  h.condition = "year";
  for (std::size_t r = 0; r < rows; ++r) h.stimuli.push_back(core::Year(2000 + r));
  for (std::size_t l = 0; l < layers; ++l) h.layers.push_back({int(l), rows, cols});
  h.attributes["neuron_site"] = "post_activation";
  return h;
}

std::vector<float> layer_values(std::size_t l, std::size_t n) {
  std::vector<float> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = float(l) + 0.25f * float(k);
  return v;
}

void write_act(const std::filesystem::path& p, std::size_t layers = 3) {
  const auto h = act_header(layers, 4, 5);
  write_dump(p, h, [](std::size_t pos) { return LayerArray::from_float32(4, 5, layer_values(pos, 20)); });
}

void overwrite_byte(const std::filesystem::path& p, std::uintmax_t offset, char value) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(std::streamoff(offset));
  f.put(value);
}

}  // namespace

TEST_CASE("activation dump round trip") {
  const auto p = temp_path("act.dump");
  write_act(p);
  const DumpReader r(p);
  CHECK(r.header().kind == DumpKind::Activations);
  CHECK(r.header().model == "toy");
  CHECK(r.header().stimuli.size() == 4);
  CHECK(r.header().attributes.at("neuron_site") == "post_activation");
  CHECK(r.layer_count() == 3);
  for (int l = 0; l < 3; ++l) CHECK(r.read_layer(l).to_float32() == layer_values(std::size_t(l), 20));
  CHECK(validate_dump(p).ok);
}

TEST_CASE("layers are read lazily") {
  const auto p = temp_path("lazy.dump");
  write_act(p, 5);
  const DumpReader r(p);
  CHECK(r.payload_bytes_read() == 0);
  (void)r.read_layer(2);
  CHECK(r.payload_bytes_read() == 20 * 4);
  CHECK(r.payload_bytes_total() == 5 * 20 * 4);
}

TEST_CASE("bad magic and unknown version") {
  const auto p = temp_path("magic.dump");
  write_act(p);
  overwrite_byte(p, 0, 'X');
  CHECK_THROWS_AS(DumpReader{p}, BadMagicError);
  write_act(p);
  overwrite_byte(p, 4, 9);
  CHECK_THROWS_AS(DumpReader{p}, UnknownVersionError);
}

TEST_CASE("truncation and corruption are checksum errors naming the layer") {
  const auto p = temp_path("trunc.dump");
  write_act(p);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 7);
  const DumpReader r(p);
  CHECK_NOTHROW((void)r.read_layer(0));
  try {
    (void)r.read_layer(2);
    FAIL("expected a checksum error");
  } catch (const ChecksumError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  const auto v = validate_dump(p);
  CHECK_FALSE(v.ok);
  REQUIRE_FALSE(v.problems.empty());

  write_act(p);
  const DumpReader clean(p);
  overwrite_byte(p, clean.table_entry(1).offset + 3, 0x55);
  CHECK_THROWS_AS((void)DumpReader(p).read_layer(1), ChecksumError);
}

TEST_CASE("float16 hidden states keep their bytes") {
  const auto p = temp_path("hs.dump");
  DumpHeader h;
  h.kind = DumpKind::HiddenStates;
  h.element_type = ElementType::Float16;
  h.pairs = PairIndexDescription{core::YearRange(2000, 2003), core::PairMode::UpperTriangle, {0, 4, 9}};
  h.layers = {{0, 3, 2}};
  const std::vector<float> v{1.0f, -2.5f, 0.1f, 65504.0f, 1e-3f, 0.0f};
  const auto arr = LayerArray::quantize_float16(3, 2, v);
  write_dump(p, h, [&](std::size_t) { return arr; });
  const DumpReader r(p);
  const auto back = r.read_layer(0);
  CHECK(back.type() == ElementType::Float16);
  CHECK(std::equal(back.bytes().begin(), back.bytes().end(), arr.bytes().begin(), arr.bytes().end()));
  const auto f = back.to_float32();
  CHECK(f[0] == 1.0f);
  CHECK(f[1] == -2.5f);
  CHECK(f[2] == doctest::Approx(0.1f).epsilon(1e-3));
  CHECK(f[3] == 65504.0f);
  REQUIRE(r.header().pairs.has_value());
  CHECK(r.header().pairs->indices == std::vector<std::uint64_t>{0, 4, 9});
}

TEST_CASE("writer rejects inconsistent headers and leaves nothing behind") {
  const auto p = temp_path("shape.dump");
  std::filesystem::remove(p);
  const auto h = act_header(1, 4, 5);
  CHECK_THROWS_AS(write_dump(p, h, [](std::size_t) { return LayerArray::from_float32(3, 5, layer_values(0, 15)); }),
                  ShapeError);
  CHECK_FALSE(std::filesystem::exists(p));
  auto f16 = h;
  f16.element_type = ElementType::Float16;
  CHECK_THROWS_AS(
      write_dump(p, f16, [](std::size_t) { return LayerArray::quantize_float16(4, 5, layer_values(0, 20)); }),
      ShapeError);
  auto dup = act_header(2, 4, 5);
  dup.layers[1].id = 0;
  CHECK_THROWS_AS(write_dump(p, dup, [](std::size_t) { return LayerArray::from_float32(4, 5, layer_values(0, 20)); }),
                  ShapeError);
}

TEST_CASE("similarity dump keeps Missing cells") {
  const auto p = temp_path("sim.dump");
  core::SimilarityMatrix m(core::YearRange(1999, 2001));
  m.set(0, 1, 0.25);
  m.set(2, 2, 1.0);
  write_similarity_dump(p, m);
  const auto back = read_similarity_dump(p);
  CHECK(back.range() == m.range());
  CHECK(back.at(0, 1) == 0.25);
  CHECK_FALSE(back.at(1, 0).has_value());
  CHECK(back.missing_count() == m.missing_count());
}

TEST_CASE("activation dumps feed the neuron screen") {
  const auto tp = temp_path("t.act");
  const auto np = temp_path("n.act");
  neurons::InMemoryActivations src;
  for (auto cond : {core::Condition::Temporal, core::Condition::Numerical}) {
    neurons::ActivationTensor t{1, cond, {2000, 2001, 2002}, 2, {}};
    for (int k = 0; k < 6; ++k) t.values.push_back(float(k) + (cond == core::Condition::Temporal ? 1.0f : 0.0f));
    src.add(t);
  }
  neurons::write_activation_dump(tp, src, core::Condition::Temporal, "toy");
  neurons::write_activation_dump(np, src, core::Condition::Numerical, "toy");
  const neurons::DumpActivations dumps(tp, np);
  CHECK(dumps.layers() == std::vector<int>{1});
  const auto back = dumps.load(1, core::Condition::Temporal);
  CHECK(back.values == src.load(1, core::Condition::Temporal).values);
  CHECK(neurons::identify_neurons(dumps).all.size() == 2);
}
