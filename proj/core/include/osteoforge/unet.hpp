#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osteoforge/autodiff.hpp"
#include "osteoforge/weights.hpp"

namespace osteoforge {

struct UNetConfig {
  int input_size = 512;
  int base_filters = 32;
  int depth = 4;
  int bottleneck_dilation = 2;
  double noise_std = 0.2;
  /// A unit-range target t is trained as output_scale * (2t - 1), keeping
  /// targets away from the Tanh asymptotes; outputs map back by
  /// (p / output_scale + 1) / 2.
  double output_scale = 0.8;
  std::uint64_t init_seed = 0;

  /// 64x64 input, 8 base filters, 3 levels.
  static UNetConfig toy();
  void validate() const;
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// Number of trainable scalars the recipe produces for `cfg`.
std::size_t unet_parameter_count(const UNetConfig& cfg);

/// Recovers the generating config from the attributes stored with a model.
UNetConfig unet_config_from_weights(const ModelWeights& w);

/// Encoder-decoder generator. Input and output are (N, 1, S, S) with
/// S = input_size; outputs lie strictly inside (-1, 1).
template <class T>
class UNet {
 public:
  struct Param {
    std::string name;
    ad::Tensor<T> tensor;
  };

  explicit UNet(const UNetConfig& cfg);
  /// Throws ConfigError naming the first missing or mis-shaped tensor.
  static UNet from_weights(const ModelWeights& w);
  static UNet from_weights(const ModelWeights& w, const UNetConfig& cfg);

  const UNetConfig& config() const { return cfg_; }
  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Gaussian input noise is drawn from `noise_seed` when `training`.
  ad::Tensor<T> forward(const ad::Tensor<T>& batch, bool training, std::uint64_t noise_seed = 0) const;

  ModelWeights to_weights() const;
  void load(const ModelWeights& w);

 private:
  struct Conv {
    std::size_t weight;
    std::size_t bias;
    int dilation;
  };

  ad::Tensor<T> conv(const ad::Tensor<T>& x, const Conv& c) const;
  Conv add_conv(const std::string& name, int cin, int cout, int k, int dilation);

  UNetConfig cfg_;
  std::vector<Param> params_;
  std::vector<Conv> enc_;  // 2 per level
  std::vector<Conv> bottleneck_;
  std::vector<Conv> dec_;  // 3 per level: up, conv1, conv2
  Conv head_{};
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace osteoforge
