#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "osteoforge/dataset.hpp"
#include "osteoforge/error.hpp"
#include "osteoforge/weights.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace osteoforge;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string read_text(const fs::path& p) {
  const auto b = testutil::read_bytes(p);
  return std::string(b.begin(), b.end());
}

template <class Fn>
std::string load_error_field(Fn&& fn) {
  try {
    fn();
  } catch (const LoadError& e) {
    return e.field();
  }
  return "<no error>";
}

ModelWeights small_weights() {
  ModelWeights w;
  w.tensors.push_back({"a.weight", {2, 3}, {1, 2, 3, 4, 5, 6}});
  w.tensors.push_back({"a.bias", {2}, {-0.5f, 0.25f}});
  w.attributes["depth"] = 1;
  return w;
}

}  // namespace

TEST_CASE("images round-trip at float32 precision") {
  const auto dir = testutil::scratch_dir("images");
  std::mt19937_64 rng(1);
  const auto img = oracle::random_unit(13, 7, rng);
  save_image(img, dir / "a");
  const auto back = load_image(dir / "a.img.json");
  CHECK(back.width() == 13);
  CHECK(back.height() == 7);
  CHECK(back.tag() == RangeTag::unit);
  for (std::size_t i = 0; i < img.size(); ++i)
    REQUIRE(back.pixels()[i] == static_cast<double>(static_cast<float>(img.pixels()[i])));
  CHECK(testutil::read_bytes(dir / "a.img.raw").size() == 13 * 7 * 4);

  save_image(back, dir / "b");
  CHECK(load_image(dir / "b") == back);

  const RadiographImage m(3, 3, RangeTag::binary, 1.0);
  save_image(m, dir / "m");
  CHECK(load_image(dir / "m").tag() == RangeTag::binary);
}

TEST_CASE("image loading rejects corrupt files") {
  const auto dir = testutil::scratch_dir("bad_images");
  save_image(RadiographImage(4, 4, RangeTag::unit, 0.5), dir / "x");
  const std::string header = read_text(dir / "x.img.json");

  CHECK(load_error_field([&] { load_image(dir / "missing"); }) != "<no error>");

  write_text(dir / "x.img.raw", std::string(60, '\0'));
  CHECK(load_error_field([&] { load_image(dir / "x"); }) == "data");

  save_image(RadiographImage(4, 4, RangeTag::raw, 2.0), dir / "y");
  std::string h = read_text(dir / "y.img.json");
  h.replace(h.find("\"raw\""), 5, "\"unit\"");
  write_text(dir / "y.img.json", h);
  CHECK(load_error_field([&] { load_image(dir / "y"); }) == "range");

  std::string d = header;
  d.replace(d.find("f32le"), 5, "u16le");
  write_text(dir / "x.img.json", d);
  write_text(dir / "x.img.raw", std::string(64, '\0'));
  CHECK(load_error_field([&] { load_image(dir / "x"); }) == "dtype");

  write_text(dir / "w.img.json", "{\"width\": 4}");
  CHECK(load_error_field([&] { load_image(dir / "w"); }) == "height");
  write_text(dir / "v.img.json", "not json");
  CHECK_THROWS_AS(load_image(dir / "v"), LoadError);
}

TEST_CASE("16-bit pgm export") {
  const auto dir = testutil::scratch_dir("pgm");
  RadiographImage img(3, 2, RangeTag::raw, std::vector<double>{-1, 0, 1, 1, 1, 1});
  export_pgm16(img, dir / "a.pgm");
  const auto b = testutil::read_bytes(dir / "a.pgm");
  const std::string header = "P5\n3 2\n65535\n";
  REQUIRE(b.size() == header.size() + 12);
  CHECK(std::memcmp(b.data(), header.data(), header.size()) == 0);
  auto sample = [&](int i) {
    return (static_cast<unsigned char>(b[header.size() + 2 * i]) << 8) |
           static_cast<unsigned char>(b[header.size() + 2 * i + 1]);
  };
  CHECK(sample(0) == 0);
  CHECK(sample(1) == 32768);
  CHECK(sample(2) == 65535);

  export_pgm16(RadiographImage(2, 2, RangeTag::unit, 0.3), dir / "c.pgm");
  const auto c = testutil::read_bytes(dir / "c.pgm");
  for (std::size_t i = c.size() - 8; i < c.size(); ++i) CHECK(c[i] == 0);
}

TEST_CASE("dataset manifests store relative paths") {
  const auto dir = testutil::scratch_dir("dataset");
  std::mt19937_64 rng(2);
  fs::create_directories(dir / "pairs");
  std::vector<DatasetEntry> entries;
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 3; ++i) {
    TrainingPair p{oracle::random_unit(8, 8, rng), oracle::random_unit(8, 8, rng),
                   RadiographImage(8, 8, RangeTag::binary, i % 2)};
    entries.push_back(save_pair(p, dir / "pairs" / ("p" + std::to_string(i))));
    pairs.push_back(p);
  }
  save_dataset(entries, dir / "dataset.json");
  const std::string text = read_text(dir / "dataset.json");
  CHECK(text.find("pairs/p0_source.img.json") != std::string::npos);
  CHECK(text.find(dir.string()) == std::string::npos);

  // The manifest is relocatable together with its directory.
  const auto moved = dir.parent_path() / "dataset_moved";
  fs::remove_all(moved);
  fs::rename(dir, moved);
  const auto loaded = load_pairs(load_dataset(moved / "dataset.json"));
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded[i].nodule_mask == pairs[i].nodule_mask);
    CHECK(loaded[i].source.width() == 8);
  }
  write_text(moved / "bad.json", "{\"pairs\": 3}");
  CHECK(load_error_field([&] { load_dataset(moved / "bad.json"); }) == "pairs");
}

TEST_CASE("weights round-trip and corruption is named") {
  const auto dir = testutil::scratch_dir("weights");
  ModelWeights w = small_weights();
  w.input_offset = std::vector<double>{0.1};
  w.input_scale = std::vector<double>{2.0};
  save_weights(w, dir / "w");
  CHECK(load_weights(dir / "w") == w);
  CHECK(load_weights(dir / "w.wts.json") == w);
  CHECK(testutil::read_bytes(dir / "w.wts.raw").size() == 32);

  const std::string header = read_text(dir / "w.wts.json");
  auto with_header = [&](std::string h) {
    write_text(dir / "w.wts.json", h);
    return load_error_field([&] { load_weights(dir / "w"); });
  };
  std::string h = header;
  h.replace(h.find("\"offset\": 24"), 12, "\"offset\": 20");
  CHECK(with_header(h) == "a.bias");
  h = header;
  h.replace(h.find("\"len\": 8"), 8, "\"len\": 12");
  CHECK(with_header(h) == "a.bias");
  h = header;
  h.replace(h.find("f32le"), 5, "f16le");
  CHECK(with_header(h) == "a.weight");
  write_text(dir / "w.wts.json", header);
  write_text(dir / "w.wts.raw", std::string(36, '\0'));
  CHECK(load_error_field([&] { load_weights(dir / "w"); }) == "data");
  write_text(dir / "w.wts.raw", std::string(16, '\0'));
  CHECK(load_error_field([&] { load_weights(dir / "w"); }) == "a.weight");

  ModelWeights dup = small_weights();
  dup.tensors.push_back(dup.tensors[0]);
  CHECK_THROWS_AS(save_weights(dup, dir / "dup"), ConfigError);
  ModelWeights ragged = small_weights();
  ragged.tensors[1].values.push_back(1);
  CHECK_THROWS_AS(ragged.validate(), ConfigError);
}
