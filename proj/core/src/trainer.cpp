#include "osteoforge/trainer.hpp"

#include <chrono>
#include <numeric>
#include <sstream>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "json.hpp"
#include "random.hpp"

namespace osteoforge {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kNoiseStream = 0x4E4F;
constexpr std::uint64_t kAugmentStream = 0x4147;

/// A pair in network space: preprocessed source, target mapped into the
/// model's output interval.
TrainingPair to_network_space(const TrainingPair& p, Preprocess pre, double output_scale) {
  TrainingPair out;
  out.source = preprocess_source(p.source, pre);
  out.source.set_tag(RangeTag::standardized);
  out.target = p.target;
  for (double& v : out.target.pixels()) v = output_scale * (2.0 * v - 1.0);
  out.target.set_tag(RangeTag::raw);
  out.nodule_mask = p.nodule_mask;
  return out;
}

/// Flushes single-precision subnormals to zero while alive. Collapsed
/// activations otherwise produce long runs of subnormal arithmetic.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

struct Batch {
  ad::Tensor<float> source;
  ad::Tensor<float> target;
  ad::Tensor<float> mask;
};

Batch make_batch(const std::vector<const TrainingPair*>& items) {
  const int s = items.front()->source.width();
  const ad::Shape shape{static_cast<int>(items.size()), 1, s, s};
  std::vector<float> src, tgt, msk;
  src.reserve(shape.numel());
  tgt.reserve(shape.numel());
  msk.reserve(shape.numel());
  for (const TrainingPair* p : items) {
    for (double v : p->source.pixels()) src.push_back(static_cast<float>(v));
    for (double v : p->target.pixels()) tgt.push_back(static_cast<float>(v));
    for (double v : p->nodule_mask.pixels()) msk.push_back(static_cast<float>(v));
  }
  return {ad::Tensor<float>::from_values(shape, std::move(src)),
          ad::Tensor<float>::from_values(shape, std::move(tgt)),
          ad::Tensor<float>::from_values(shape, std::move(msk))};
}

ad::Tensor<float> batch_loss(const ad::Tensor<float>& pred, const Batch& b, const TrainConfig& cfg,
                             const LossNetwork<float>* net) {
  switch (cfg.loss) {
    case LossKind::l1:
      return l1_loss(pred, b.target);
    case LossKind::weighted_l1:
      return weighted_l1_loss(pred, b.target, b.mask, WeightedL1Config{cfg.nodule_weight});
    case LossKind::perceptual:
      if (net == nullptr) throw ConfigError("loss", "perceptual loss needs a loss network");
      return perceptual_loss(pred, b.target, *net);
  }
  throw ConfigError("loss", "unknown loss kind");
}

void check_sizes(const UNet<float>& model, const std::vector<TrainingPair>& pairs, const char* what) {
  const int s = model.config().input_size;
  for (const auto& p : pairs) {
    if (p.source.width() != s || p.source.height() != s) {
      throw ShapeError(what, "pair is " + std::to_string(p.source.width()) + "x" +
                                 std::to_string(p.source.height()) + ", model expects " + std::to_string(s));
    }
    require_same_dims(p.source, p.target, "target");
    require_same_dims(p.source, p.nodule_mask, "nodule_mask");
  }
}

}  // namespace

void SplitSpec::validate() const {
  for (auto [v, name] : {std::pair{train, "train"}, std::pair{val, "val"}, std::pair{test, "test"}}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name, "fraction must be in [0,1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("fractions", "must sum to 1");
}

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  SplitCounts c;
  c.val = std::min(n, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n))));
  c.test = std::min(n - c.val, static_cast<std::size_t>(std::llround(spec.test * static_cast<double>(n))));
  c.train = n - c.val - c.test;
  return c;
}

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  detail::Engine eng(detail::derive_seed(seed, {0x53504C}));
  std::shuffle(perm.begin(), perm.end(), eng);
  return perm;
}

void AdamConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate", "must be finite and non-negative");
  }
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1", "must be in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2", "must be in [0,1)");
  if (!(epsilon > 0)) throw ConfigError("epsilon", "must be positive");
}

template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, const AdamConfig& cfg,
               long t) {
  if (t < 1) throw ConfigError("step", "must be >= 1");
  if (grads.size() != params.size()) throw ShapeError("grads", "size differs from params");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("state", "moment size differs from params");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double delta = cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.epsilon);
    if (delta != 0.0) params[i] = static_cast<T>(static_cast<double>(params[i]) - delta);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamMoments&, const AdamConfig&, long);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&, const AdamConfig&,
                                long);

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::l1: return "l1";
    case LossKind::weighted_l1: return "weighted_l1";
    case LossKind::perceptual: return "perceptual";
  }
  return "?";
}

std::string_view to_string(Preprocess p) {
  return p == Preprocess::standardize ? "standardize" : "he_clahe";
}

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "l1") return LossKind::l1;
  if (s == "weighted_l1") return LossKind::weighted_l1;
  if (s == "perceptual") return LossKind::perceptual;
  throw ConfigError("loss", "unknown loss '" + std::string(s) + "'");
}

Preprocess preprocess_from_string(std::string_view s) {
  if (s == "standardize") return Preprocess::standardize;
  if (s == "he_clahe") return Preprocess::he_clahe;
  throw ConfigError("preprocess", "unknown preprocessing '" + std::string(s) + "'");
}

RadiographImage preprocess_source(const RadiographImage& src, Preprocess p) {
  if (p == Preprocess::standardize) return standardize(src, 0.0, 0.5);
  return clahe(hist_eq(minmax_normalize(src)));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  adam.validate();
  WeightedL1Config{nodule_weight}.validate();
  augment.validate();
  if (max_steps && *max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
}

std::string TrainHistory::to_jsonl(bool include_time) const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["steps"] = e.steps;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
    if (include_time) j["wall_seconds"] = e.wall_seconds;
    out << j.dump() << "\n";
  }
  return out.str();
}

double validation_loss(const UNet<float>& model, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                       const LossNetwork<float>* loss_net) {
  if (pairs.empty()) throw ConfigError("val", "empty validation set");
  check_sizes(model, pairs, "val");
  ad::NoGradGuard guard;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<TrainingPair> prepared;
    for (std::size_t i = start; i < end; ++i) prepared.push_back(to_network_space(pairs[i], cfg.preprocess, model.config().output_scale));
    std::vector<const TrainingPair*> ptrs;
    for (const auto& p : prepared) ptrs.push_back(&p);
    const Batch b = make_batch(ptrs);
    const double loss = batch_loss(model.forward(b.source, false), b, cfg, loss_net).item();
    total += loss * static_cast<double>(end - start);
    count += end - start;
  }
  return total / static_cast<double>(count);
}

TrainHistory train(UNet<float>& model, const std::vector<TrainingPair>& train_set,
                   const std::vector<TrainingPair>& val_set, const TrainConfig& cfg,
                   const LossNetwork<float>* loss_net, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train", "empty training set");
  check_sizes(model, train_set, "train");
  check_sizes(model, val_set, "val");
  if (cfg.loss == LossKind::perceptual && loss_net == nullptr) {
    throw ConfigError("loss", "perceptual loss needs a loss network");
  }

  std::vector<TrainingPair> prepared;
  prepared.reserve(train_set.size());
  for (const auto& p : train_set) prepared.push_back(to_network_space(p, cfg.preprocess, model.config().output_scale));

  AugmentConfig aug = cfg.augment;
  aug.seed = detail::derive_seed(cfg.seed, {kAugmentStream, cfg.augment.seed});

  const FlushDenormals ftz;
  auto& params = model.parameters();
  std::vector<AdamMoments> moments(params.size());
  TrainHistory history;
  long step = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps && step >= *cfg.max_steps) break;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::Engine eng(detail::derive_seed(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), eng);

    double epoch_loss = 0.0;
    long epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      if (cfg.max_steps && step >= *cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<TrainingPair> augmented;
      std::vector<const TrainingPair*> items;
      if (cfg.augment_enabled) {
        for (std::size_t i = start; i < end; ++i) {
          const auto draw = static_cast<std::uint64_t>(step) * bs + (i - start);
          augmented.push_back(augment(prepared[order[i]], aug, draw));
        }
        for (const auto& p : augmented) items.push_back(&p);
      } else {
        for (std::size_t i = start; i < end; ++i) items.push_back(&prepared[order[i]]);
      }
      const Batch b = make_batch(items);

      for (auto& p : params) p.tensor.zero_grad();
      const auto noise_seed = detail::derive_seed(cfg.seed, {kNoiseStream, static_cast<std::uint64_t>(step)});
      const ad::Tensor<float> loss = batch_loss(model.forward(b.source, true, noise_seed), b, cfg, loss_net);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw Error("loss", "non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch + 1) +
                                ", step " + std::to_string(step + 1));
      }
      ad::backward(loss);
      ++step;
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& t = params[k].tensor;
        if (t.grad().empty()) t.mutable_grad();
        adam_step<float>(t.mutable_values(), t.grad(), moments[k], cfg.adam, step);
      }
      history.step_losses.push_back(value);
      epoch_loss += value;
      ++epoch_steps;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.steps = step;
    rec.train_loss = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
    if (!val_set.empty()) rec.val_loss = validation_loss(model, val_set, cfg, loss_net);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

RadiographImage predict_unit(const UNet<float>& model, const RadiographImage& source, Preprocess p) {
  const int s = model.config().input_size;
  if (source.width() != s || source.height() != s) {
    throw ShapeError("source", "image is " + std::to_string(source.width()) + "x" +
                                   std::to_string(source.height()) + ", model expects " + std::to_string(s));
  }
  const RadiographImage input = preprocess_source(source, p);
  std::vector<float> values(input.pixels().begin(), input.pixels().end());
  ad::NoGradGuard guard;
  const auto out = model.forward(ad::Tensor<float>::from_values(ad::Shape{1, 1, s, s}, std::move(values)), false);
  const double scale = model.config().output_scale;
  RadiographImage pred(s, s, RangeTag::unit);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred.pixels()[i] = std::clamp((static_cast<double>(out.values()[i]) / scale + 1.0) / 2.0, 0.0, 1.0);
  }
  return pred;
}

MetricReport evaluate(const Predictor& predict, const std::vector<TrainingPair>& pairs, const MetricConfig& cfg) {
  std::vector<std::pair<RadiographImage, RadiographImage>> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.emplace_back(predict(p), p.target);
  return evaluate_set(rows, cfg);
}

MetricReport evaluate(const UNet<float>& model, const std::vector<TrainingPair>& pairs, const MetricConfig& cfg,
                      Preprocess p) {
  return evaluate([&](const TrainingPair& pair) { return predict_unit(model, pair.source, p); }, pairs, cfg);
}

}  // namespace osteoforge
