#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "osteoforge/error.hpp"
#include "osteoforge/gradcheck_suite.hpp"
#include "osteoforge/unet.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace osteoforge;
using ad::Shape;
using ad::Tensor;

namespace {

// Measured on the toy model with init_seed 0 (4.23), plus headroom.
constexpr double kToyLipschitz = 4.5;

Tensor<float> unit_batch(int n, int s, std::mt19937_64& rng) {
  return oracle::random_tensor<float>({n, 1, s, s}, rng, false, 0.0, 1.0);
}

bool same_values(const Tensor<float>& a, const Tensor<float>& b) {
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

}  // namespace

TEST_CASE("parameter count follows the closed form") {
  CHECK(unet_parameter_count(UNetConfig::toy()) == 134121);
  for (int depth = 1; depth <= 4; ++depth)
    for (int base : {1, 3, 8}) {
      UNetConfig c;
      c.input_size = 16 << depth;
      c.depth = depth;
      c.base_filters = base;
      const UNet<float> m(c);
      std::size_t n = 0;
      for (const auto& p : m.parameters()) n += p.tensor.numel();
      REQUIRE(n == unet_parameter_count(c));
      REQUIRE(m.parameter_count() == n);
    }
}

TEST_CASE("config validation") {
  UNetConfig c = UNetConfig::toy();
  c.input_size = 60;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = UNetConfig::toy();
  c.depth = 0;
  CHECK_THROWS_AS(UNet<float>{c}, ConfigError);
  c = UNetConfig::toy();
  c.output_scale = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(UNetConfig{}.input_size == 512);
}

TEST_CASE("initialization is deterministic in the seed") {
  const UNet<float> a(UNetConfig::toy());
  const UNet<float> b(UNetConfig::toy());
  CHECK(a.to_weights() == b.to_weights());
  UNetConfig other = UNetConfig::toy();
  other.init_seed = 1;
  CHECK_FALSE(UNet<float>(other).to_weights() == a.to_weights());
  for (const auto& p : a.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (float v : p.tensor.values()) CHECK(v == 0.0f);
    }
    CHECK(p.tensor.requires_grad());
  }
}

TEST_CASE("forward shape, range and noise contract") {
  const UNet<float> m(UNetConfig::toy());
  std::mt19937_64 rng(1);
  const auto x = unit_batch(2, 64, rng);
  const auto y = m.forward(x, false);
  CHECK(y.shape() == Shape{2, 1, 64, 64});
  for (float v : y.values()) {
    REQUIRE(v > -1.0f);
    REQUIRE(v < 1.0f);
  }
  CHECK(same_values(y, m.forward(x, false)));
  CHECK(same_values(m.forward(x, true, 3), m.forward(x, true, 3)));
  CHECK_FALSE(same_values(m.forward(x, true, 3), y));
  CHECK_FALSE(same_values(m.forward(x, true, 3), m.forward(x, true, 4)));

  UNetConfig quiet = UNetConfig::toy();
  quiet.noise_std = 0;
  const UNet<float> q(quiet);
  CHECK(same_values(q.forward(x, true, 3), q.forward(x, false)));

  CHECK_THROWS_AS(m.forward(unit_batch(1, 32, rng), false), ShapeError);
  CHECK_THROWS_AS(m.forward(Tensor<float>::zeros({1, 2, 64, 64}), false), ShapeError);
}

TEST_CASE("initialized model is Lipschitz-bounded on unit inputs") {
  const UNet<float> m(UNetConfig::toy());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> s(-1, 1);
  for (int t = 0; t < 10; ++t) {
    const auto x = unit_batch(1, 64, rng);
    std::vector<float> y(x.values().begin(), x.values().end());
    for (float& v : y) v = static_cast<float>(std::clamp(v + 1e-2 * s(rng), 0.0, 1.0));
    double din = 0, dout = 0;
    for (std::size_t i = 0; i < y.size(); ++i) din = std::max(din, std::abs(double(y[i]) - x.values()[i]));
    const auto a = m.forward(x, false);
    const auto b = m.forward(Tensor<float>::from_values(x.shape(), y), false);
    for (std::size_t i = 0; i < y.size(); ++i) dout = std::max(dout, std::abs(double(a.values()[i]) - b.values()[i]));
    REQUIRE(dout <= kToyLipschitz * din);
  }
}

TEST_CASE("outputs do not saturate at initialization") {
  const UNet<float> m(UNetConfig::toy());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.5);
  long saturated = 0, total = 0;
  for (int t = 0; t < 8; ++t) {
    std::vector<float> x(64 * 64);
    for (float& v : x) v = static_cast<float>(n(rng));
    const auto y = m.forward(Tensor<float>::from_values({1, 1, 64, 64}, x), false);
    for (float v : y.values()) {
      saturated += std::abs(v) > 0.999f;
      ++total;
    }
  }
  CHECK(static_cast<double>(saturated) / total < 0.01);
}

TEST_CASE("weights round-trip through disk") {
  const auto dir = testutil::scratch_dir("unet_weights");
  UNetConfig c = UNetConfig::toy();
  c.init_seed = 5;
  const UNet<float> m(c);
  save_weights(m.to_weights(), dir / "model");
  const ModelWeights w = load_weights(dir / "model");
  CHECK(w == m.to_weights());
  // The init seed is not stored with trained weights.
  UNetConfig recovered = unet_config_from_weights(w);
  CHECK(recovered.init_seed == 0);
  recovered.init_seed = c.init_seed;
  CHECK(recovered == c);
  const UNet<float> back = UNet<float>::from_weights(w);
  std::mt19937_64 rng(4);
  const auto x = unit_batch(1, 64, rng);
  CHECK(same_values(m.forward(x, false), back.forward(x, false)));
}

TEST_CASE("loading names the first mismatched tensor") {
  const ModelWeights w = UNet<float>(UNetConfig::toy()).to_weights();
  UNetConfig deeper = UNetConfig::toy();
  deeper.depth = 2;
  try {
    UNet<float>::from_weights(w, deeper);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "bottleneck.conv1.weight");
  }

  ModelWeights missing = w;
  missing.tensors.erase(missing.tensors.begin() + 3);
  try {
    UNet<float>::from_weights(missing);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == w.tensors[3].name);
  }

  ModelWeights bad_attr = w;
  bad_attr.attributes.erase("depth");
  CHECK_THROWS_AS(unet_config_from_weights(bad_attr), ConfigError);
}

TEST_CASE("end-to-end gradient check of the toy model") {
  UNetConfig c = UNetConfig::toy();
  c.noise_std = 0;
  UNet<double> m(c);
  // Nonzero biases move pre-activations off the ReLU kink.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> b(-0.05, 0.05);
  std::vector<Tensor<double>> inputs;
  for (auto& p : m.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (double& v : p.tensor.mutable_values()) v = b(rng);
    }
    inputs.push_back(p.tensor);
  }
  Tensor<double> x = oracle::random_tensor<double>({1, 1, 64, 64}, rng, true);
  inputs.push_back(x);

  ad::GradCheckOptions opt;
  opt.max_coords_per_input = 3;
  opt.seed = 9;
  const auto r = ad::grad_check<double>([&] { return ad::mean(m.forward(x, true)); }, inputs, opt);
  CHECK(r.coordinates_checked > 100);
  INFO("worst input ", r.worst_input, " index ", r.worst_index, " analytic ", r.analytic,
       " numeric ", r.numeric);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("packaged model gradient check") {
  const auto c = model_gradcheck(1);
  CHECK(c.passed());
  CHECK(c.result.coordinates_checked > 100);
}
