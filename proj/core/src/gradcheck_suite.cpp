#include "osteoforge/gradcheck_suite.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "osteoforge/losses.hpp"
#include "osteoforge/unet.hpp"

namespace osteoforge {

namespace {

using ad::Shape;
using TD = ad::Tensor<double>;

TD uniform(Shape s, std::mt19937_64& rng, bool requires_grad, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(s.numel());
  for (double& x : v) x = u(rng);
  return TD::from_values(s, std::move(v), requires_grad);
}

/// |x| >= gap for every element, so ReLU and max pooling stay differentiable.
TD away_from_zero(Shape s, std::mt19937_64& rng, double gap = 0.05) {
  TD t = uniform(s, rng, true);
  for (double& v : t.mutable_values()) v = v < 0 ? v - gap : v + gap;
  return t;
}

/// Distinct values spaced 0.1 apart so every pooling window has a unique max.
TD distinct(Shape s, std::mt19937_64& rng) {
  std::vector<double> v(s.numel());
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (double& e : v) e *= 0.1;
  return TD::from_values(s, std::move(v), true);
}

}  // namespace

std::vector<GradCheckCase> op_gradchecks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> out;
  auto run = [&](std::string name, const std::function<TD()>& f, std::vector<TD> inputs) {
    out.push_back({std::move(name), kOpGradTolerance, ad::grad_check<double>(f, std::move(inputs))});
  };
  // Each op output is reduced by an MSE against a fixed random target, so
  // upstream gradients differ per element.
  auto target = [&](Shape s) { return uniform(s, rng, false); };

  for (int dil : {1, 2}) {
    TD x = uniform({2, 3, 6, 5}, rng, true);
    TD w = uniform({2, 3, 3, 3}, rng, true);
    TD b = uniform({1, 2, 1, 1}, rng, true);
    const TD t = target({2, 2, 6, 5});
    run("conv2d k3 dilation " + std::to_string(dil),
        [=] { return ad::reduce_mse(ad::conv2d(x, w, b, {dil}), t); }, {x, w, b});
  }
  {
    TD x = uniform({1, 4, 3, 3}, rng, true);
    TD w = uniform({3, 4, 1, 1}, rng, true);
    const TD t = target({1, 3, 3, 3});
    run("conv2d k1 no bias", [=] { return ad::reduce_mse(ad::conv2d(x, w, TD{}), t); }, {x, w});
  }
  {
    TD x = distinct({2, 2, 4, 6}, rng);
    const TD t = target({2, 2, 2, 3});
    run("maxpool2", [=] { return ad::reduce_mse(ad::maxpool2(x), t); }, {x});
    run("avgpool2", [=] { return ad::reduce_mse(ad::avgpool2(x), t); }, {x});
  }
  {
    TD x = uniform({1, 2, 3, 2}, rng, true);
    TD y = uniform({1, 1, 3, 2}, rng, true);
    const TD tu = target({1, 2, 6, 4});
    const TD tc = target({1, 3, 3, 2});
    run("upsample_nearest2", [=] { return ad::reduce_mse(ad::upsample_nearest2(x), tu); }, {x});
    run("concat_channels", [=] { return ad::reduce_mse(ad::concat_channels(x, y), tc); }, {x, y});
  }
  {
    TD x = away_from_zero({1, 2, 4, 4}, rng);
    TD z = uniform({1, 2, 4, 4}, rng, true, -2.0, 2.0);
    const TD t = target(x.shape());
    run("relu", [=] { return ad::reduce_mse(ad::relu(x), t); }, {x});
    run("tanh", [=] { return ad::reduce_mse(ad::tanh_act(z), t); }, {z});
    run("gaussian_noise", [=] { return ad::reduce_mse(ad::gaussian_noise(z, 0.3, true, 5), t); }, {z});
    run("add and scale", [=] { return ad::reduce_mse(ad::add(x, ad::scale(z, -0.5)), t); }, {x, z});
    run("sum", [=] { return ad::scale(ad::sum(ad::tanh_act(z)), 0.5); }, {z});
    run("mean", [=] { return ad::mean(ad::tanh_act(z)); }, {z});
  }
  {
    TD a = uniform({2, 1, 4, 4}, rng, true);
    TD b = uniform({2, 1, 4, 4}, rng, true);
    const TD w = uniform(a.shape(), rng, false, 0.5, 3.0);
    std::bernoulli_distribution on(0.3);
    std::vector<double> m(a.numel());
    for (double& v : m) v = on(rng) ? 1.0 : 0.0;
    const TD mask = TD::from_values(a.shape(), m);
    run("reduce_l1", [=] { return ad::reduce_l1(a, b, w); }, {a, b});
    run("reduce_mse", [=] { return ad::reduce_mse(a, b); }, {a, b});
    run("l1_loss", [=] { return l1_loss(a, b); }, {a});
    run("weighted_l1_loss", [=] { return weighted_l1_loss(a, b, mask); }, {a});
  }
  {
    const auto net = LossNetwork<double>::random(seed);
    TD p = uniform({1, 1, 6, 6}, rng, true, 0.0, 1.0);
    const TD q = uniform({1, 1, 6, 6}, rng, false, 0.0, 1.0);
    ad::GradCheckOptions opt;
    opt.max_coords_per_input = 12;
    opt.seed = seed;
    out.push_back({"perceptual_loss", kOpGradTolerance,
                   ad::grad_check<double>([&] { return perceptual_loss(p, q, net); }, {p}, opt)});
  }
  return out;
}

GradCheckCase model_gradcheck(std::uint64_t seed, std::size_t coords_per_input) {
  UNetConfig c = UNetConfig::toy();
  c.noise_std = 0;
  c.init_seed = seed;
  UNet<double> m(c);
  std::mt19937_64 rng(seed + 5);
  std::uniform_real_distribution<double> b(-0.05, 0.05);
  std::vector<TD> inputs;
  for (auto& p : m.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (double& v : p.tensor.mutable_values()) v = b(rng);
    }
    inputs.push_back(p.tensor);
  }
  TD x = uniform({1, 1, c.input_size, c.input_size}, rng, true);
  inputs.push_back(x);
  ad::GradCheckOptions opt;
  opt.max_coords_per_input = coords_per_input;
  opt.seed = seed + 9;
  return {"toy unet", kModelGradTolerance,
          ad::grad_check<double>([&] { return ad::mean(m.forward(x, true)); }, inputs, opt)};
}

}  // namespace osteoforge
