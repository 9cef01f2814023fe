#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "osteoforge/autodiff.hpp"
#include "osteoforge/weights.hpp"

namespace osteoforge {

/// mean |pred - target|.
template <class T>
ad::Tensor<T> l1_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target);

struct WeightedL1Config {
  double nodule_weight = 30.0;
  void validate() const;
};

/// mean |pred - target| * (1 + w * mask). Throws ConfigError("nodule_mask")
/// unless every mask value is exactly 0 or 1.
template <class T>
ad::Tensor<T> weighted_l1_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                               const ad::Tensor<T>& nodule_mask, const WeightedL1Config& cfg = {});

/// (N, 1, H, W) -> (N, 3, H, W), channel c = scale[c] * x + offset[c].
/// Empty offset/scale mean 0 and 1.
template <class T>
ad::Tensor<T> triplicate(const ad::Tensor<T>& x, const std::vector<double>& offset = {},
                         const std::vector<double>& scale = {});

/// Fixed feature extractor: two 3x3 convs to 64 channels, 2x2 max pool, two
/// 3x3 convs to 128 channels, ReLU after every conv. Features are the final
/// ReLU output, (N, 128, H/2, W/2) for (N, 3, H, W) input. Never trainable.
template <class T>
class LossNetwork {
 public:
  /// He-normal kernels and zero biases drawn from `seed`.
  static LossNetwork random(std::uint64_t seed);
  /// Tensors block1_conv1 .. block2_conv2 (.weight/.bias); input_offset and
  /// input_scale are taken from the manifest when present.
  static LossNetwork from_weights(const ModelWeights& w);
  ModelWeights to_weights() const;

  ad::Tensor<T> features(const ad::Tensor<T>& rgb) const;
  /// Features of the triplicated single-channel batch.
  ad::Tensor<T> embed(const ad::Tensor<T>& gray) const;

  const std::vector<double>& input_offset() const { return offset_; }
  const std::vector<double>& input_scale() const { return scale_; }
  /// Kernel/bias pairs in layer order.
  const std::vector<ad::Tensor<T>>& tensors() const { return tensors_; }

  static const std::vector<std::string>& layer_names();

 private:
  LossNetwork() = default;
  std::vector<ad::Tensor<T>> tensors_;
  std::vector<double> offset_;
  std::vector<double> scale_;
};

/// Mean squared difference of loss-network features of pred and target.
/// Target features are computed without recording, so only pred receives a
/// gradient.
template <class T>
ad::Tensor<T> perceptual_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                              const LossNetwork<T>& net);

/// Coefficients of a weighted sum of the three losses.
struct LossMix {
  double l1 = 0.0;
  double weighted_l1 = 0.0;
  double perceptual = 0.0;
  WeightedL1Config weighted{};
};

/// Sum of the enabled terms. `mask` is needed when weighted_l1 != 0 and
/// `net` when perceptual != 0.
template <class T>
ad::Tensor<T> mixed_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                         const ad::Tensor<T>& mask, const LossNetwork<T>* net, const LossMix& mix);

extern template class LossNetwork<float>;
extern template class LossNetwork<double>;

}  // namespace osteoforge
