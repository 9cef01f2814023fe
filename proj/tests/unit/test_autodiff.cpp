#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "osteoforge/autodiff.hpp"
#include "osteoforge/error.hpp"
#include "osteoforge/gradcheck_suite.hpp"
#include "support/oracles.hpp"

using namespace osteoforge;
using namespace osteoforge::ad;

using TD = Tensor<double>;

namespace {

/// Random values kept at least `gap` away from zero, for ReLU checks.
TD away_from_zero(Shape s, std::mt19937_64& rng, double gap = 0.05) {
  TD t = oracle::random_tensor<double>(s, rng, true);
  for (double& v : t.mutable_values()) v = v < 0 ? v - gap : v + gap;
  return t;
}

/// Fixed random weighting so sum-like reductions see varied upstream grads.
TD probe(Shape s, std::mt19937_64& rng) { return oracle::random_tensor<double>(s, rng); }

/// sum(x * w) for a constant w.
TD dot(const TD& x, const TD& w) {
  std::vector<double> prod(x.numel());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = x.values()[i] * w.values()[i];
  return record_op<double>({1, 1, 1, 1}, {std::accumulate(prod.begin(), prod.end(), 0.0)}, {x},
                          [w](std::span<const double> g, std::span<TD> p) {
                            auto dx = p[0].mutable_grad();
                            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0] * w.values()[i];
                          });
}

}  // namespace

TEST_CASE("tensor factories and shape errors") {
  CHECK(TD::zeros({1, 2, 3, 4}).numel() == 24);
  CHECK(TD::full({1, 1, 2, 2}, 3.0).values()[3] == 3.0);
  CHECK(TD::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(TD::from_values({1, 1, 2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(TD::zeros({1, 1, 2, 2}).item(), ShapeError);
  CHECK(Shape{1, 2, 3, 4}.str() == "(1,2,3,4)");
}

TEST_CASE("backward examples") {
  TD x = TD::from_values({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);

  TD y = TD::from_values({1, 1, 1, 1}, {3.0}, true);
  backward(reduce_mse(y, TD::zeros(y.shape())));
  CHECK(y.grad()[0] == 6.0);

  CHECK_THROWS_AS(backward(x), ShapeError);
}

TEST_CASE("no-grad guard records nothing") {
  TD x = TD::full({1, 1, 2, 2}, 1.0, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_recording_enabled());
    TD y = scale(x, 2.0);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_recording_enabled());
  CHECK_FALSE(scale(x, 2.0).is_leaf());
  CHECK(scale(TD::full({1, 1, 2, 2}, 1.0), 2.0).is_leaf());
}

TEST_CASE("conv2d special kernels") {
  std::mt19937_64 rng(1);
  const TD x = oracle::random_tensor<double>({2, 3, 5, 4}, rng);
  std::vector<double> eye(9, 0.0);
  for (int c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  const TD id = conv2d(x, TD::from_values({3, 3, 1, 1}, eye), TD{});
  CHECK(std::equal(id.values().begin(), id.values().end(), x.values().begin()));

  const TD bias = TD::from_values({1, 2, 1, 1}, {0.5, -2.0});
  const TD zero_w = conv2d(x, TD::zeros({2, 3, 3, 3}), bias, {2});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 20; ++i) CHECK(zero_w.values()[(n * 2 + c) * 20 + i] == (c == 0 ? 0.5 : -2.0));

  CHECK_THROWS_AS(conv2d(x, TD::zeros({2, 2, 3, 3}), TD{}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, TD::zeros({2, 3, 2, 2}), TD{}), ShapeError);
}

TEST_CASE("conv2d matches the six-loop oracle on random shapes") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> small(1, 4), side(1, 9), kd(0, 2), dd(1, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = small(rng), cin = small(rng), cout = small(rng), h = side(rng), w = side(rng);
    const int k = 2 * kd(rng) + 1;
    const int dil = trial < 8 ? 2 : dd(rng);
    const TD x = oracle::random_tensor<double>({n, cin, h, w}, rng);
    const TD wt = oracle::random_tensor<double>({cout, cin, k, k}, rng);
    const TD b = oracle::random_tensor<double>({1, cout, 1, 1}, rng);
    const TD y = conv2d(x, wt, b, {dil});
    const auto want = oracle::conv2d(x.values(), n, cin, h, w, wt.values(), cout, k, b.values(), dil);
    REQUIRE(y.shape() == Shape{n, cout, h, w});
    for (std::size_t i = 0; i < want.size(); ++i) {
      REQUIRE(std::abs(y.values()[i] - want[i]) <= 1e-12 * std::max(1.0, std::abs(want[i])));
    }
  }
  // The documented fixture: 1x2x5x5 input, 3x3 kernel, dilation 2.
  const TD x = oracle::random_tensor<double>({1, 2, 5, 5}, rng);
  const TD wt = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
  const TD y = conv2d(x, wt, TD{}, {2});
  const auto want = oracle::conv2d(x.values(), 1, 2, 5, 5, wt.values(), 1, 3, {}, 2);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(oracle::rel_diff(y.values()[i], want[i]) < 1e-12);
}

TEST_CASE("pooling, upsampling and concatenation") {
  const TD four = TD::from_values({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  CHECK(maxpool2(four).item() == 4.0);
  CHECK(avgpool2(four).item() == 2.5);

  TD flat = TD::full({1, 2, 4, 4}, 7.0, true);
  const TD pooled = maxpool2(flat);
  for (double v : pooled.values()) CHECK(v == 7.0);
  backward(sum(pooled));
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        CHECK(flat.grad()[(c * 4 + y) * 4 + x] == ((x % 2 == 0 && y % 2 == 0) ? 1.0 : 0.0));
      }

  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const TD x = oracle::random_tensor<double>({2, 3, 6, 8}, rng);
    const auto want = oracle::maxpool2(x.values(), 6, 6, 8);
    const TD got = maxpool2(x);
    REQUIRE(got.shape() == Shape{2, 3, 3, 4});
    REQUIRE(std::equal(want.begin(), want.end(), got.values().begin()));
    const TD back = avgpool2(upsample_nearest2(x));
    REQUIRE(std::equal(back.values().begin(), back.values().end(), x.values().begin()));
  }

  const TD up = upsample_nearest2(TD::from_values({1, 1, 1, 1}, {5.0}));
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  for (double v : up.values()) CHECK(v == 5.0);
  CHECK_THROWS_AS(maxpool2(TD::zeros({1, 1, 3, 4})), ShapeError);

  TD a = oracle::random_tensor<double>({2, 2, 3, 3}, rng, true);
  TD b = oracle::random_tensor<double>({2, 3, 3, 3}, rng, true);
  const TD c = concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 5, 3, 3});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 18; ++i) CHECK(c.values()[n * 45 + i] == a.values()[n * 18 + i]);
  backward(sum(c));
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);
  CHECK_THROWS_AS(concat_channels(a, TD::zeros({2, 2, 4, 3})), ShapeError);
}

TEST_CASE("activations") {
  TD x = TD::from_values({1, 1, 1, 3}, {-1.0, 2.0, 0.0}, true);
  const TD r = relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 2.0);
  backward(sum(r));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);

  TD z = TD::from_values({1, 1, 1, 1}, {0.0}, true);
  const TD t = tanh_act(z);
  CHECK(t.item() == 0.0);
  backward(sum(t));
  CHECK(z.grad()[0] == 1.0);
}

TEST_CASE("gaussian noise") {
  std::mt19937_64 rng(4);
  const TD x = oracle::random_tensor<double>({2, 1, 32, 32}, rng);
  const TD off = gaussian_noise(x, 0.2, false, 1);
  CHECK(std::equal(off.values().begin(), off.values().end(), x.values().begin()));
  const TD zero = gaussian_noise(x, 0.0, true, 1);
  CHECK(std::equal(zero.values().begin(), zero.values().end(), x.values().begin()));

  const TD a = gaussian_noise(x, 0.2, true, 7);
  const TD b = gaussian_noise(x, 0.2, true, 7);
  const TD c = gaussian_noise(x, 0.2, true, 8);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  double m = 0, ss = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) m += a.values()[i] - x.values()[i];
  m /= x.numel();
  for (std::size_t i = 0; i < x.numel(); ++i) ss += std::pow(a.values()[i] - x.values()[i] - m, 2);
  CHECK(std::abs(m) < 0.03);
  CHECK(std::sqrt(ss / x.numel()) == doctest::Approx(0.2).epsilon(0.05));

  TD g = oracle::random_tensor<double>({1, 1, 4, 4}, rng, true);
  backward(sum(gaussian_noise(g, 0.5, true, 3)));
  for (double v : g.grad()) CHECK(v == 1.0);
}

TEST_CASE("reductions") {
  const TD a = TD::full({1, 1, 4, 4}, 1.0);
  const TD b = TD::full({1, 1, 4, 4}, 1.5);
  CHECK(reduce_l1(a, a).item() == 0.0);
  CHECK(reduce_mse(a, a).item() == 0.0);
  CHECK(reduce_l1(a, b).item() == 0.5);
  std::mt19937_64 rng(5);
  const TD p = oracle::random_tensor<double>({2, 1, 4, 4}, rng);
  const TD q = oracle::random_tensor<double>({2, 1, 4, 4}, rng);
  CHECK(reduce_l1(p, q, TD::full(p.shape(), 1.0)).item() == reduce_l1(p, q).item());
  CHECK(mean(p).item() == doctest::Approx(sum(p).item() / 32.0));
  CHECK_THROWS_AS(reduce_l1(p, a), ShapeError);
}

TEST_CASE("forward passes are deterministic") {
  std::mt19937_64 rng(6);
  const TD x = oracle::random_tensor<double>({2, 3, 8, 8}, rng);
  const TD w = oracle::random_tensor<double>({4, 3, 3, 3}, rng);
  auto run = [&] { return tanh_act(maxpool2(relu(conv2d(x, w, TD{}, {2})))); };
  const TD a = run();
  const TD b = run();
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

// ---------------------------------------------------------------------------
// Finite-difference checks, double precision.

TEST_CASE("grad_check on a linear op is exact to rounding") {
  std::mt19937_64 rng(10);
  TD x = oracle::random_tensor<double>({1, 2, 3, 3}, rng, true);
  const TD w = probe(x.shape(), rng);
  const auto r = grad_check<double>([&] { return dot(scale(x, 3.0), w); }, {x});
  CHECK(r.max_relative_error < 1e-7);
  CHECK(r.coordinates_checked == 18);
}

TEST_CASE("every differentiable op passes grad_check") {
  std::mt19937_64 rng(11);
  constexpr double kTol = 1e-4;

  SUBCASE("conv2d input, weight and bias") {
    for (int dil : {1, 2}) {
      TD x = oracle::random_tensor<double>({2, 3, 6, 5}, rng, true);
      TD w = oracle::random_tensor<double>({2, 3, 3, 3}, rng, true);
      TD b = oracle::random_tensor<double>({1, 2, 1, 1}, rng, true);
      const TD pr = probe({2, 2, 6, 5}, rng);
      const auto r = grad_check<double>([&] { return dot(conv2d(x, w, b, {dil}), pr); }, {x, w, b});
      CHECK(r.max_relative_error < kTol);
    }
    TD x = oracle::random_tensor<double>({1, 4, 3, 3}, rng, true);
    TD w = oracle::random_tensor<double>({3, 4, 1, 1}, rng, true);
    const TD pr = probe({1, 3, 3, 3}, rng);
    CHECK(grad_check<double>([&] { return dot(conv2d(x, w, TD{}), pr); }, {x, w}).max_relative_error < kTol);
  }
  SUBCASE("conv2d + relu + mean") {
    TD x = oracle::random_tensor<double>({1, 2, 6, 6}, rng, true);
    const TD w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    const TD b = oracle::random_tensor<double>({1, 3, 1, 1}, rng);
    CHECK(grad_check<double>([&] { return mean(relu(conv2d(x, w, b))); }, {x}).max_relative_error < kTol);
  }
  SUBCASE("maxpool2 and avgpool2") {
    // Distinct values keep every window's maximum unique under perturbation.
    std::vector<double> v(2 * 2 * 4 * 6);
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    for (double& e : v) e *= 0.1;
    TD x = TD::from_values({2, 2, 4, 6}, v, true);
    const TD pr = probe({2, 2, 2, 3}, rng);
    CHECK(grad_check<double>([&] { return dot(maxpool2(x), pr); }, {x}).max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return dot(avgpool2(x), pr); }, {x}).max_relative_error < kTol);
  }
  SUBCASE("upsample and concat") {
    TD x = oracle::random_tensor<double>({1, 2, 3, 2}, rng, true);
    TD y = oracle::random_tensor<double>({1, 1, 3, 2}, rng, true);
    const TD pu = probe({1, 2, 6, 4}, rng);
    const TD pc = probe({1, 3, 3, 2}, rng);
    CHECK(grad_check<double>([&] { return dot(upsample_nearest2(x), pu); }, {x}).max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return dot(concat_channels(x, y), pc); }, {x, y}).max_relative_error < kTol);
  }
  SUBCASE("relu away from the kink, tanh chain") {
    TD x = away_from_zero({1, 2, 4, 4}, rng);
    const TD pr = probe(x.shape(), rng);
    CHECK(grad_check<double>([&] { return dot(relu(x), pr); }, {x}).max_relative_error < kTol);
    TD t = oracle::random_tensor<double>({1, 1, 4, 4}, rng, true, -2.0, 2.0);
    CHECK(grad_check<double>([&] { return dot(tanh_act(scale(tanh_act(t), 1.7)), pr); }, {t})
              .max_relative_error < kTol);
  }
  SUBCASE("noise, add, scale, sum, mean") {
    TD x = oracle::random_tensor<double>({1, 1, 3, 3}, rng, true);
    TD y = oracle::random_tensor<double>({1, 1, 3, 3}, rng, true);
    const TD pr = probe(x.shape(), rng);
    CHECK(grad_check<double>([&] { return dot(gaussian_noise(x, 0.3, true, 5), pr); }, {x})
              .max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return dot(add(x, scale(y, -0.5)), pr); }, {x, y}).max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return scale(sum(x), 2.0); }, {x}).max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return mean(x); }, {x}).max_relative_error < kTol);
  }
  SUBCASE("l1 and mse reductions") {
    TD a = oracle::random_tensor<double>({2, 1, 3, 3}, rng, true);
    TD b = oracle::random_tensor<double>({2, 1, 3, 3}, rng, true);
    const TD w = oracle::random_tensor<double>(a.shape(), rng, false, 0.5, 3.0);
    CHECK(grad_check<double>([&] { return reduce_l1(a, b, w); }, {a, b}).max_relative_error < kTol);
    CHECK(grad_check<double>([&] { return reduce_mse(a, b); }, {a, b}).max_relative_error < kTol);
  }
}

TEST_CASE("grad_check validation and subset sampling") {
  TD x = TD::full({1, 1, 10, 10}, 0.5, true);
  const TD frozen = TD::full({1, 1, 2, 2}, 0.5);
  CHECK_THROWS_AS(grad_check<double>([&] { return mean(x); }, {frozen}), ConfigError);
  GradCheckOptions opt;
  opt.eps = 0;
  CHECK_THROWS_AS(grad_check<double>([&] { return mean(x); }, {x}, opt), ConfigError);
  opt = {};
  opt.max_coords_per_input = 7;
  CHECK(grad_check<double>([&] { return mean(x); }, {x}, opt).coordinates_checked == 7);
}

TEST_CASE("float tensors train the same graph") {
  std::mt19937_64 rng(12);
  Tensor<float> x = oracle::random_tensor<float>({1, 1, 4, 4}, rng, true);
  const Tensor<float> w = oracle::random_tensor<float>({2, 1, 3, 3}, rng);
  backward(mean(tanh_act(conv2d(x, w, Tensor<float>{}))));
  CHECK(x.grad().size() == 16);
}

TEST_CASE("packaged op suite passes for several seeds") {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    const auto cases = osteoforge::op_gradchecks(seed);
    CHECK(cases.size() >= 15);
    for (const auto& c : cases) {
      INFO(c.name, " seed ", seed);
      CHECK(c.passed());
      CHECK(c.result.coordinates_checked > 0);
    }
  }
}
