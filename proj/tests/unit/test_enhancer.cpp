#include <algorithm>
#include <random>

#include "doctest.h"
#include "osteoforge/enhancer.hpp"
#include "osteoforge/error.hpp"
#include "support/oracles.hpp"

using namespace osteoforge;

TEST_CASE("fusion with zero weight returns the radiograph") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto cxr = oracle::random_unit(17, 9, rng);
    const auto bone = oracle::random_unit(17, 9, rng);
    REQUIRE(fuse(cxr, bone, {0.0}) == cxr);
  }
}

TEST_CASE("fused output stays in unit range") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    const auto cxr = oracle::random_unit(8, 8, rng);
    const auto bone = oracle::random_unit(8, 8, rng);
    const auto out = fuse(cxr, bone);
    REQUIRE(out.tag() == RangeTag::unit);
    for (double v : out.pixels()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
  const RadiographImage half(4, 4, RangeTag::unit, 0.5);
  const RadiographImage full(4, 4, RangeTag::unit, 1.0);
  CHECK(fuse(half, full).at(1, 1) == 1.0);
  CHECK(fuse(half, RadiographImage(4, 4, RangeTag::unit, 0.4)).at(2, 3) == doctest::Approx(0.7));
  const auto loose = fuse(full, full, {0.5, false});
  CHECK(loose.at(0, 0) == 1.5);
  CHECK(loose.tag() == RangeTag::raw);
}

TEST_CASE("fusion is monotone in the weight") {
  std::mt19937_64 rng(3);
  const auto cxr = oracle::random_unit(16, 16, rng);
  const auto bone = oracle::random_unit(16, 16, rng);
  RadiographImage prev = cxr;
  for (double w : {0.1, 0.25, 0.5, 1.0, 2.0}) {
    const auto cur = fuse(cxr, bone, {w});
    for (std::size_t i = 0; i < cur.size(); ++i) REQUIRE(cur.pixels()[i] >= prev.pixels()[i]);
    prev = cur;
  }
}

TEST_CASE("fusion rejects bad inputs") {
  const RadiographImage u(4, 4, RangeTag::unit, 0.5);
  CHECK_THROWS_AS(fuse(u, RadiographImage(4, 5, RangeTag::unit)), ShapeError);
  CHECK_THROWS_AS(fuse(RadiographImage(4, 4, RangeTag::raw, 2.0), u), ConfigError);
  CHECK_THROWS_AS(fuse(u, RadiographImage(4, 4, RangeTag::standardized)), ConfigError);
  CHECK_THROWS_AS(fuse(u, u, {-0.5}), ConfigError);
}

TEST_CASE("bone prediction") {
  const UNet<float> m(UNetConfig::toy());
  std::mt19937_64 rng(4);
  const auto at_size = oracle::random_unit(64, 64, rng);
  const auto a = predict_bone(m, at_size);
  CHECK(a == predict_bone(m, at_size));
  CHECK(a.tag() == RangeTag::unit);
  CHECK(a.width() == 64);
  CHECK(*std::max_element(a.pixels().begin(), a.pixels().end()) == doctest::Approx(1.0));
  CHECK(*std::min_element(a.pixels().begin(), a.pixels().end()) == doctest::Approx(0.0));

  const auto large = oracle::random_unit(100, 80, rng);
  const auto b = predict_bone(m, large);
  CHECK(b.width() == 100);
  CHECK(b.height() == 80);
  CHECK_NOTHROW(b.validate());
  CHECK_NOTHROW(fuse(large, b).validate());
  CHECK_THROWS_AS(predict_bone(m, RadiographImage{}), ShapeError);
}
