#include <random>

#include <benchmark/benchmark.h>

#include "osteoforge/autodiff.hpp"
#include "osteoforge/losses.hpp"
#include "osteoforge/phantom.hpp"
#include "osteoforge/projector.hpp"
#include "osteoforge/quality.hpp"
#include "osteoforge/trainer.hpp"
#include "osteoforge/unet.hpp"

using namespace osteoforge;
using Tf = ad::Tensor<float>;

namespace {

Tf random_tensor(ad::Shape s, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<float> n(0.f, 0.1f);
  std::vector<float> v(s.numel());
  for (float& x : v) x = n(rng);
  return Tf::from_values(s, std::move(v), grad);
}

void BM_AttenuationMap(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const Volume v = generate_phantom(PhantomSpec::thorax({n, n, n}, 1, 2)).volume;
  for (auto _ : st) benchmark::DoNotOptimize(attenuation_map(v));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n) * n * n);
}
BENCHMARK(BM_AttenuationMap)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Conv2dForward(benchmark::State& st) {
  std::mt19937_64 rng(1);
  const int c = static_cast<int>(st.range(0));
  const Tf x = random_tensor({4, c, 64, 64}, rng);
  const Tf w = random_tensor({c, c, 3, 3}, rng);
  const Tf b = random_tensor({1, c, 1, 1}, rng);
  ad::NoGradGuard guard;
  for (auto _ : st) benchmark::DoNotOptimize(ad::conv2d(x, w, b));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& st) {
  std::mt19937_64 rng(2);
  const int c = static_cast<int>(st.range(0));
  const Tf x = random_tensor({4, c, 64, 64}, rng, true);
  Tf w = random_tensor({c, c, 3, 3}, rng, true);
  Tf b = random_tensor({1, c, 1, 1}, rng, true);
  for (auto _ : st) {
    const Tf loss = ad::sum(ad::conv2d(x, w, b));
    ad::backward(loss);
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_UNetTrainStep(benchmark::State& st) {
  std::mt19937_64 rng(3);
  UNetConfig cfg = UNetConfig::toy();
  UNet<float> model(cfg);
  const int n = cfg.input_size;
  const Tf x = random_tensor({8, 1, n, n}, rng);
  const Tf y = random_tensor({8, 1, n, n}, rng);
  std::vector<AdamMoments> moments(model.parameters().size());
  long t = 0;
  for (auto _ : st) {
    const Tf loss = l1_loss(model.forward(x, true, static_cast<std::uint64_t>(t)), y);
    ad::backward(loss);
    ++t;
    for (std::size_t i = 0; i < moments.size(); ++i) {
      auto& p = model.parameters()[i].tensor;
      adam_step<float>(p.mutable_values(), p.grad(), moments[i], {}, t);
      p.zero_grad();
    }
  }
}
BENCHMARK(BM_UNetTrainStep)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& st) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = static_cast<int>(st.range(0));
  RadiographImage a(n, n, RangeTag::unit, 0.0), b(n, n, RangeTag::unit, 0.0);
  for (double& p : a.pixels()) p = u(rng);
  for (double& p : b.pixels()) p = u(rng);
  for (auto _ : st) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Msssim(benchmark::State& st) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  RadiographImage a(512, 512, RangeTag::unit, 0.0), b(512, 512, RangeTag::unit, 0.0);
  for (double& p : a.pixels()) p = u(rng);
  for (double& p : b.pixels()) p = u(rng);
  for (auto _ : st) benchmark::DoNotOptimize(msssim(a, b));
}
BENCHMARK(BM_Msssim)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
