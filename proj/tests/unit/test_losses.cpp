#include <cmath>
#include <random>

#include "doctest.h"
#include "osteoforge/error.hpp"
#include "osteoforge/losses.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace osteoforge;
using ad::Shape;
using ad::Tensor;
using TD = Tensor<double>;

namespace {

TD mask_tensor(Shape s, std::mt19937_64& rng, double p = 0.3) {
  std::bernoulli_distribution on(p);
  std::vector<double> v(s.numel());
  for (double& x : v) x = on(rng) ? 1.0 : 0.0;
  return TD::from_values(s, v);
}

}  // namespace

TEST_CASE("l1 loss") {
  std::mt19937_64 rng(1);
  const TD a = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  const TD b = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  CHECK(l1_loss(a, a).item() == 0.0);
  CHECK(l1_loss(a, b).item() == l1_loss(b, a).item());
  CHECK(l1_loss(TD::full({1, 1, 4, 4}, 0.25), TD::full({1, 1, 4, 4}, 0.75)).item() == 0.5);
}

TEST_CASE("weighted l1 algebra") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const TD a = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
    const TD b = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
    const Tensor<float> af = oracle::random_tensor<float>({2, 1, 8, 8}, rng);
    const Tensor<float> bf = oracle::random_tensor<float>({2, 1, 8, 8}, rng);
    const double l1 = l1_loss(a, b).item();
    const TD ones = TD::full(a.shape(), 1.0);
    const TD zeros = TD::zeros(a.shape());
    REQUIRE(weighted_l1_loss(a, b, ones, {30.0}).item() == 31.0 * l1);
    REQUIRE(weighted_l1_loss(a, b, zeros, {30.0}).item() == l1);
    REQUIRE(weighted_l1_loss(a, b, mask_tensor(a.shape(), rng), {0.0}).item() == l1);
    REQUIRE(weighted_l1_loss(af, bf, Tensor<float>::full(af.shape(), 1.0f), {30.0}).item() ==
            31.0f * l1_loss(af, bf).item());
    REQUIRE(weighted_l1_loss(af, bf, Tensor<float>::zeros(af.shape()), {30.0}).item() == l1_loss(af, bf).item());

    const TD m = mask_tensor(a.shape(), rng);
    double prev = -1;
    for (double w : {0.0, 1.0, 5.0, 30.0, 100.0}) {
      const double v = weighted_l1_loss(a, b, m, {w}).item();
      REQUIRE(v >= prev);
      prev = v;
    }
  }
  const TD a = TD::zeros({1, 1, 2, 2});
  CHECK_THROWS_AS(weighted_l1_loss(a, a, TD::full({1, 1, 2, 2}, 0.5)), ConfigError);
  CHECK_THROWS_AS(WeightedL1Config{-1.0}.validate(), ConfigError);
}

TEST_CASE("triplicate") {
  std::mt19937_64 rng(3);
  TD x = oracle::random_tensor<double>({2, 1, 3, 4}, rng, true);
  const TD t = triplicate(x);
  CHECK(t.shape() == Shape{2, 3, 3, 4});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 12; ++i) REQUIRE(t.values()[(n * 3 + c) * 12 + i] == x.values()[n * 12 + i]);

  const std::vector<double> offset{0.1, -0.2, 0.3}, scale{2.0, 0.5, -1.0};
  const TD s = triplicate(x, offset, scale);
  for (int c = 0; c < 3; ++c) CHECK(s.values()[c * 12] == doctest::Approx(scale[c] * x.values()[0] + offset[c]));

  // Gradient is the scale-weighted sum of the channel gradients.
  backward(ad::sum(s));
  for (double g : x.grad()) CHECK(g == doctest::Approx(2.0 + 0.5 - 1.0));
  const auto r = ad::grad_check<double>([&] { return ad::reduce_mse(triplicate(x, offset, scale), TD::zeros(s.shape())); }, {x});
  CHECK(r.max_relative_error < 1e-6);
  CHECK_THROWS_AS(triplicate(TD::zeros({1, 2, 3, 3})), ShapeError);
}

TEST_CASE("loss network structure and determinism") {
  const auto a = LossNetwork<float>::random(7);
  const auto b = LossNetwork<float>::random(7);
  CHECK(a.to_weights() == b.to_weights());
  CHECK_FALSE(a.to_weights() == LossNetwork<float>::random(8).to_weights());
  for (const auto& t : a.tensors()) CHECK_FALSE(t.requires_grad());
  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor<float>({2, 1, 8, 6}, rng);
  CHECK(a.embed(x).shape() == Shape{2, 128, 4, 3});
  CHECK(LossNetwork<float>::layer_names().size() == 4);
}

TEST_CASE("loss network weights round-trip with input transform") {
  const auto dir = testutil::scratch_dir("lossnet");
  ModelWeights w = LossNetwork<float>::random(3).to_weights();
  w.input_offset = std::vector<double>{-0.485, -0.456, -0.406};
  w.input_scale = std::vector<double>{4.3668, 4.4643, 4.4444};
  save_weights(w, dir / "vgg");
  const auto back = LossNetwork<float>::from_weights(load_weights(dir / "vgg"));
  CHECK(back.input_offset() == *w.input_offset);
  CHECK(back.input_scale() == *w.input_scale);
  CHECK(back.to_weights() == w);

  ModelWeights bad = w;
  bad.tensors.pop_back();
  CHECK_THROWS_AS(LossNetwork<float>::from_weights(bad), ConfigError);
}

TEST_CASE("perceptual loss matches a forward-twice-and-subtract oracle") {
  std::mt19937_64 rng(5);
  for (bool transform : {false, true}) {
    ModelWeights w = LossNetwork<double>::random(11).to_weights();
    if (transform) {
      w.input_offset = std::vector<double>{0.1, 0.2, -0.3};
      w.input_scale = std::vector<double>{1.5, 0.75, 2.0};
    }
    const auto net = LossNetwork<double>::from_weights(w);
    for (int t = 0; t < 3; ++t) {
      const TD p = oracle::random_tensor<double>({2, 1, 8, 8}, rng, false, 0.0, 1.0);
      const TD q = oracle::random_tensor<double>({2, 1, 8, 8}, rng, false, 0.0, 1.0);
      const auto fp = oracle::loss_features(net.tensors(), p.values(), 2, 8, 8, net.input_offset(), net.input_scale());
      const auto fq = oracle::loss_features(net.tensors(), q.values(), 2, 8, 8, net.input_offset(), net.input_scale());
      double ss = 0;
      for (std::size_t i = 0; i < fp.size(); ++i) ss += (fp[i] - fq[i]) * (fp[i] - fq[i]);
      const double want = ss / fp.size();
      const double got = perceptual_loss(p, q, net).item();
      REQUIRE(got >= 0.0);
      REQUIRE(oracle::rel_diff(got, want) < 1e-10);
      REQUIRE(perceptual_loss(p, p, net).item() == 0.0);
    }
  }
}

TEST_CASE("perceptual loss gradient flows to the prediction only") {
  std::mt19937_64 rng(6);
  const auto net = LossNetwork<double>::random(2);
  TD p = oracle::random_tensor<double>({1, 1, 6, 6}, rng, true, 0.0, 1.0);
  TD q = oracle::random_tensor<double>({1, 1, 6, 6}, rng, true, 0.0, 1.0);
  backward(perceptual_loss(p, q, net));
  CHECK_FALSE(p.grad().empty());
  CHECK(q.grad().empty());
  ad::GradCheckOptions opt;
  opt.max_coords_per_input = 12;
  const auto r = ad::grad_check<double>([&] { return perceptual_loss(p, q, net); }, {p}, opt);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("losses vanish on equal inputs and mix linearly") {
  std::mt19937_64 rng(7);
  const auto net = LossNetwork<double>::random(1);
  const TD a = oracle::random_tensor<double>({1, 1, 8, 8}, rng);
  const TD b = oracle::random_tensor<double>({1, 1, 8, 8}, rng);
  const TD m = mask_tensor(a.shape(), rng);
  CHECK(l1_loss(a, a).item() == 0.0);
  CHECK(weighted_l1_loss(a, a, m).item() == 0.0);
  CHECK(perceptual_loss(a, a, net).item() == 0.0);
  CHECK(l1_loss(a, b).item() > 0.0);

  LossMix mix;
  mix.l1 = 1.0;
  mix.weighted_l1 = 0.5;
  mix.perceptual = 0.25;
  const double want = l1_loss(a, b).item() + 0.5 * weighted_l1_loss(a, b, m).item() +
                      0.25 * perceptual_loss(a, b, net).item();
  CHECK(mixed_loss(a, b, m, &net, mix).item() == doctest::Approx(want).epsilon(1e-12));
  LossMix only_l1;
  only_l1.l1 = 1.0;
  CHECK(mixed_loss(a, b, TD{}, static_cast<const LossNetwork<double>*>(nullptr), only_l1).item() ==
        l1_loss(a, b).item());
  CHECK_THROWS_AS(mixed_loss(a, b, m, static_cast<const LossNetwork<double>*>(nullptr), mix), ConfigError);
  CHECK_THROWS_AS(mixed_loss(a, b, TD{}, &net, mix), ShapeError);
}
