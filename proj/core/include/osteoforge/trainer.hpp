#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "osteoforge/error.hpp"
#include "osteoforge/imageops.hpp"
#include "osteoforge/losses.hpp"
#include "osteoforge/quality.hpp"
#include "osteoforge/unet.hpp"

namespace osteoforge {

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// val = round(val * n), test = round(test * n) (capped so the total fits),
/// train takes the remainder.
SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

/// Seeded permutation of [0, n).
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed);

template <class Item>
struct Split {
  std::vector<Item> train;
  std::vector<Item> val;
  std::vector<Item> test;
};

/// Deterministic shuffled partition. Throws ConfigError on an empty list.
template <class Item>
Split<Item> split_dataset(const std::vector<Item>& items, const SplitSpec& spec) {
  if (items.empty()) throw ConfigError("pairs", "cannot split an empty list");
  const SplitCounts c = split_counts(items.size(), spec);
  const auto perm = split_permutation(items.size(), spec.seed);
  Split<Item> out;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto& dst = i < c.train ? out.train : (i < c.train + c.val ? out.val : out.test);
    dst.push_back(items[perm[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// First and second moment estimates of one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected ADAM update at step t >= 1. Moments are sized on first
/// use. A zero update leaves the parameter bits unchanged.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state,
               const AdamConfig& cfg, long t);

// ---------------------------------------------------------------------------
// Training

enum class LossKind { l1, weighted_l1, perceptual };
enum class Preprocess { standardize, he_clahe };

std::string_view to_string(LossKind k);
std::string_view to_string(Preprocess p);
LossKind loss_kind_from_string(std::string_view s);
Preprocess preprocess_from_string(std::string_view s);

/// Network input for a source radiograph: per-image standardization to mean
/// 0 / std 0.5, or histogram equalization followed by CLAHE on the min-max
/// normalized image.
RadiographImage preprocess_source(const RadiographImage& src, Preprocess p);

struct TrainConfig {
  int batch_size = 8;
  int epochs = 100;
  AdamConfig adam{};
  LossKind loss = LossKind::l1;
  double nodule_weight = 30.0;
  AugmentConfig augment{};
  bool augment_enabled = true;
  Preprocess preprocess = Preprocess::standardize;
  std::uint64_t seed = 0;
  /// Stops after this many optimizer steps when set.
  std::optional<long> max_steps;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;  ///< cumulative optimizer steps
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;

  /// One JSON object per epoch; `include_time` false omits wall time.
  std::string to_jsonl(bool include_time = true) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch ADAM training. `loss_net` is required for the perceptual loss.
/// All randomness derives from cfg.seed. Throws Error("loss") on a
/// non-finite loss.
TrainHistory train(UNet<float>& model, const std::vector<TrainingPair>& train_set,
                   const std::vector<TrainingPair>& val_set, const TrainConfig& cfg,
                   const LossNetwork<float>* loss_net = nullptr, const EpochCallback& on_epoch = {});

/// Mean loss over `pairs` without augmentation or noise; records no graph.
double validation_loss(const UNet<float>& model, const std::vector<TrainingPair>& pairs,
                       const TrainConfig& cfg, const LossNetwork<float>* loss_net = nullptr);

/// Model bone prediction in [0, 1]: preprocess, inference forward, map the
/// output back to unit range and clamp.
/// The source must already be at the model input size.
RadiographImage predict_unit(const UNet<float>& model, const RadiographImage& source,
                             Preprocess p = Preprocess::standardize);

using Predictor = std::function<RadiographImage(const TrainingPair&)>;

MetricReport evaluate(const Predictor& predict, const std::vector<TrainingPair>& pairs,
                      const MetricConfig& cfg);
MetricReport evaluate(const UNet<float>& model, const std::vector<TrainingPair>& pairs,
                      const MetricConfig& cfg, Preprocess p = Preprocess::standardize);

}  // namespace osteoforge
