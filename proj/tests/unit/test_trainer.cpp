#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "osteoforge/error.hpp"
#include "osteoforge/phantom.hpp"
#include "osteoforge/trainer.hpp"
#include "support/oracles.hpp"

using namespace osteoforge;

namespace {

std::vector<TrainingPair> phantom_pairs(int n, std::uint64_t first_seed, int side = 64) {
  std::vector<TrainingPair> out;
  for (int i = 0; i < n; ++i) {
    const Phantom p = generate_phantom(PhantomSpec::thorax({side, side, side}, first_seed + i, 1));
    out.push_back(make_training_pair(p.volume, p.nodules));
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("split arithmetic") {
  const SplitCounts c = split_counts(644, {});
  CHECK(c.train == 386);
  CHECK(c.val == 129);
  CHECK(c.test == 129);

  std::vector<int> ten(10);
  std::iota(ten.begin(), ten.end(), 0);
  const auto all_train = split_dataset(ten, {1.0, 0.0, 0.0, 0});
  CHECK(all_train.train.size() == 10);
  CHECK(all_train.val.empty());
  CHECK(all_train.test.empty());

  const auto a = split_dataset(ten, {0.6, 0.2, 0.2, 5});
  const auto b = split_dataset(ten, {0.6, 0.2, 0.2, 5});
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  CHECK_THROWS_AS(split_dataset(std::vector<int>{}, SplitSpec{}), ConfigError);
  CHECK_THROWS_AS(split_counts(5, {0.5, 0.5, 0.5, 0}), ConfigError);
  CHECK_THROWS_AS(split_counts(5, {1.2, -0.2, 0.0, 0}), ConfigError);
}

TEST_CASE("splits are true partitions") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 300);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int n = size(rng);
    double f[3] = {u(rng), u(rng), u(rng)};
    const double s = f[0] + f[1] + f[2];
    SplitSpec spec{f[0] / s, f[1] / s, 0.0, rng()};
    spec.test = 1.0 - spec.train - spec.val;
    std::vector<int> items(static_cast<std::size_t>(n));
    std::iota(items.begin(), items.end(), 0);
    const auto sp = split_dataset(items, spec);
    REQUIRE(sp.train.size() + sp.val.size() + sp.test.size() == items.size());
    std::set<int> seen(sp.train.begin(), sp.train.end());
    seen.insert(sp.val.begin(), sp.val.end());
    seen.insert(sp.test.begin(), sp.test.end());
    REQUIRE(seen.size() == items.size());
    const SplitCounts c = split_counts(items.size(), spec);
    REQUIRE(sp.val.size() == c.val);
    REQUIRE(sp.test.size() == c.test);
  }
}

TEST_CASE("adam first step and zero gradients") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<float> p{1.0f};
  const std::vector<float> g{1.0f};
  AdamMoments st;
  adam_step<float>(p, g, st, cfg, 1);
  CHECK(1.0 - p[0] == doctest::Approx(0.1 / (1.0 + 1e-8)).epsilon(1e-6));
  CHECK(st.m[0] == doctest::Approx(0.1));
  CHECK(st.v[0] == doctest::Approx(0.001));

  std::vector<double> q{0.25, -3.0};
  const std::vector<double> zero{0.0, 0.0};
  AdamMoments zs;
  adam_step<double>(q, zero, zs, cfg, 1);
  CHECK(q[0] == 0.25);
  CHECK(q[1] == -3.0);

  const double m0 = st.m[0], v0 = st.v[0];
  const float before = p[0];
  adam_step<float>(p, std::vector<float>{0.0f}, st, cfg, 2);
  CHECK(st.m[0] == doctest::Approx(0.9 * m0));
  CHECK(st.v[0] == doctest::Approx(0.999 * v0));
  CHECK(p[0] < before);  // momentum keeps moving the parameter

  CHECK_THROWS_AS(adam_step<double>(q, std::vector<double>{1.0}, zs, cfg, 3), ShapeError);
  CHECK_THROWS_AS(adam_step<double>(q, zero, zs, cfg, 0), ConfigError);
}

TEST_CASE("adam matches the bias-corrected formulas and is elementwise") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<double> joint(6), a(3), b(3), ref(6), m(6, 0.0), v(6, 0.0);
  for (std::size_t i = 0; i < 6; ++i) joint[i] = ref[i] = n(rng);
  std::copy(joint.begin(), joint.begin() + 3, a.begin());
  std::copy(joint.begin() + 3, joint.end(), b.begin());
  AdamMoments sj, sa, sb;
  for (long t = 1; t <= 5; ++t) {
    std::vector<double> g(6);
    for (double& x : g) x = n(rng);
    adam_step<double>(joint, g, sj, cfg, t);
    adam_step<double>(a, std::span<const double>(g).first(3), sa, cfg, t);
    adam_step<double>(b, std::span<const double>(g).last(3), sb, cfg, t);
    for (std::size_t i = 0; i < 6; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(joint[i] == a[i]);
    CHECK(joint[i + 3] == b[i]);
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(joint[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("config validation and selectors") {
  TrainConfig cfg;
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.epochs == 100);
  CHECK(cfg.adam.learning_rate == 1e-3);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.adam.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.nodule_weight = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  for (auto k : {LossKind::l1, LossKind::weighted_l1, LossKind::perceptual}) CHECK(loss_kind_from_string(to_string(k)) == k);
  for (auto p : {Preprocess::standardize, Preprocess::he_clahe}) CHECK(preprocess_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(loss_kind_from_string("l2"), ConfigError);
  CHECK_THROWS_AS(preprocess_from_string("none"), ConfigError);
}

TEST_CASE("source preprocessing") {
  std::mt19937_64 rng(3);
  const auto img = oracle::random_unit(64, 64, rng);
  const auto s = preprocess_source(img, Preprocess::standardize);
  CHECK(s.tag() == RangeTag::standardized);
  double mean = 0, ss = 0;
  for (double p : s.pixels()) mean += p;
  mean /= s.size();
  for (double p : s.pixels()) ss += (p - mean) * (p - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::sqrt(ss / s.size()) == doctest::Approx(0.5));
  const auto h = preprocess_source(img, Preprocess::he_clahe);
  CHECK(h.tag() == RangeTag::unit);
  CHECK_NOTHROW(h.validate());
}

TEST_CASE("lr = 0 leaves every weight bit-identical") {
  const auto pairs = phantom_pairs(3, 10);
  UNet<float> m(UNetConfig::toy());
  const ModelWeights before = m.to_weights();
  TrainConfig cfg = quick_config();
  cfg.adam.learning_rate = 0.0;
  const auto h = train(m, pairs, {pairs[0]}, cfg);
  CHECK(m.to_weights() == before);
  CHECK(h.epochs.size() == 2);
  CHECK(h.step_losses.size() == 4);  // partial batches are kept
  CHECK(h.epochs[1].steps == 4);
  CHECK(h.epochs[0].val_loss.has_value());
}

TEST_CASE("training is deterministic and validation is read-only") {
  const auto pairs = phantom_pairs(4, 20);
  TrainConfig cfg = quick_config();
  cfg.loss = LossKind::weighted_l1;
  UNet<float> a(UNetConfig::toy());
  UNet<float> b(UNetConfig::toy());
  const auto ha = train(a, pairs, {}, cfg);
  const auto hb = train(b, pairs, {}, cfg);
  CHECK(ha.step_losses == hb.step_losses);
  CHECK(a.to_weights() == b.to_weights());
  CHECK(ha.to_jsonl(false) == hb.to_jsonl(false));
  CHECK_FALSE(a.to_weights() == UNet<float>(UNetConfig::toy()).to_weights());

  const ModelWeights w = a.to_weights();
  const double v1 = validation_loss(a, pairs, cfg);
  const double v2 = validation_loss(a, pairs, cfg);
  CHECK(v1 == v2);
  CHECK(a.to_weights() == w);

  TrainConfig other = cfg;
  other.seed = 4;
  UNet<float> c(UNetConfig::toy());
  CHECK_FALSE(train(c, pairs, {}, other).step_losses == ha.step_losses);
}

TEST_CASE("history serializes one record per epoch") {
  TrainHistory h;
  h.epochs.push_back({1, 3, 0.5, 0.25, 1.5});
  h.epochs.push_back({2, 6, 0.4, std::nullopt, 1.0});
  const std::string with = h.to_jsonl();
  const std::string without = h.to_jsonl(false);
  CHECK(std::count(with.begin(), with.end(), '\n') == 2);
  CHECK(with.find("wall_seconds") != std::string::npos);
  CHECK(without.find("wall_seconds") == std::string::npos);
  CHECK(without.find("\"val_loss\":null") != std::string::npos);
}

TEST_CASE("perceptual training leaves the loss network untouched") {
  const auto pairs = phantom_pairs(2, 30);
  const auto net = LossNetwork<float>::random(7);
  const ModelWeights before = net.to_weights();
  UNet<float> m(UNetConfig::toy());
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  cfg.loss = LossKind::perceptual;
  train(m, pairs, pairs, cfg, &net);
  CHECK(net.to_weights() == before);
  CHECK_THROWS_AS(train(m, pairs, {}, cfg), ConfigError);
}

TEST_CASE("training rejects bad inputs and non-finite losses") {
  const auto pairs = phantom_pairs(2, 40);
  UNet<float> m(UNetConfig::toy());
  TrainConfig cfg = quick_config();
  CHECK_THROWS_AS(train(m, {}, {}, cfg), ConfigError);
  CHECK_THROWS_AS(train(m, phantom_pairs(1, 1, 32), {}, cfg), ShapeError);

  // ReLU drops NaN, so poison the output layer.
  m.parameters().back().tensor.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(m, pairs, {}, cfg);
    FAIL("expected a loss error");
  } catch (const Error& e) {
    CHECK(e.field() == "loss");
    CHECK(std::string(e.what()).find("epoch 1, step 1") != std::string::npos);
  }
}

TEST_CASE("max_steps bounds the optimizer steps") {
  const auto pairs = phantom_pairs(4, 50);
  UNet<float> m(UNetConfig::toy());
  TrainConfig cfg = quick_config();
  cfg.epochs = 10;
  cfg.max_steps = 3;
  const auto h = train(m, pairs, {}, cfg);
  CHECK(h.step_losses.size() == 3);
  cfg.epochs = 0;
  cfg.max_steps.reset();
  const ModelWeights w = m.to_weights();
  CHECK(train(m, pairs, {}, cfg).epochs.empty());
  CHECK(m.to_weights() == w);
}

TEST_CASE("evaluation") {
  const auto pairs = phantom_pairs(3, 60);
  const MetricConfig mc = MetricConfig::for_image_size(64);
  const auto oracle_report = evaluate([](const TrainingPair& p) { return p.target; }, pairs, mc);
  CHECK(oracle_report.rmse.mean == 0.0);
  CHECK(oracle_report.ssim.mean == 1.0);

  const UNet<float> m(UNetConfig::toy());
  const auto r1 = evaluate(m, pairs, mc);
  const auto r2 = evaluate(m, pairs, mc);
  CHECK(std::isfinite(r1.rmse.mean));
  CHECK(std::isfinite(r1.psnr.mean));
  CHECK(std::isfinite(r1.ssim.mean));
  CHECK(std::isfinite(r1.msssim.mean));
  CHECK(r1.to_json() == r2.to_json());

  const auto pred = predict_unit(m, pairs[0].source);
  CHECK(pred.tag() == RangeTag::unit);
  CHECK_NOTHROW(pred.validate());
  CHECK_THROWS_AS(predict_unit(m, RadiographImage(32, 32, RangeTag::unit)), ShapeError);
}
