#include "osteoforge/unet.hpp"

#include <cmath>
#include <random>

#include "osteoforge/error.hpp"
#include "random.hpp"

namespace osteoforge {

UNetConfig UNetConfig::toy() {
  UNetConfig c;
  c.input_size = 64;
  c.base_filters = 8;
  c.depth = 3;
  return c;
}

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("depth", "must be >= 1");
  if (depth > 16) throw ConfigError("depth", "must be <= 16");
  if (base_filters < 1) throw ConfigError("base_filters", "must be >= 1");
  if (bottleneck_dilation < 1) throw ConfigError("bottleneck_dilation", "must be >= 1");
  if (!(noise_std >= 0)) throw ConfigError("noise_std", "must be non-negative");
  if (!(output_scale > 0 && output_scale <= 1)) throw ConfigError("output_scale", "must be in (0,1]");
  if (input_size < 1 || input_size % (1 << depth) != 0) {
    throw ConfigError("input_size", "must be a positive multiple of 2^depth = " + std::to_string(1 << depth));
  }
}

std::size_t unet_parameter_count(const UNetConfig& cfg) {
  cfg.validate();
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
  std::size_t total = 0;
  std::size_t cin = 1;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::size_t c = static_cast<std::size_t>(cfg.base_filters) << i;
    total += conv(cin, c, 3) + conv(c, c, 3);
    cin = c;
  }
  const std::size_t b = static_cast<std::size_t>(cfg.base_filters) << cfg.depth;
  total += conv(cin, b, 3) + conv(b, b, 3);
  cin = b;
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::size_t c = static_cast<std::size_t>(cfg.base_filters) << i;
    total += conv(cin, c, 3) + conv(2 * c, c, 3) + conv(c, c, 3);
    cin = c;
  }
  return total + conv(cin, 1, 1);
}

UNetConfig unet_config_from_weights(const ModelWeights& w) {
  auto get = [&](const char* key) {
    const auto it = w.attributes.find(key);
    if (it == w.attributes.end()) throw ConfigError(key, "missing model attribute");
    return it->second;
  };
  UNetConfig c;
  c.input_size = static_cast<int>(get("input_size"));
  c.base_filters = static_cast<int>(get("base_filters"));
  c.depth = static_cast<int>(get("depth"));
  c.bottleneck_dilation = static_cast<int>(get("bottleneck_dilation"));
  c.noise_std = get("noise_std");
  if (w.attributes.contains("output_scale")) c.output_scale = get("output_scale");
  c.validate();
  return c;
}

template <class T>
UNet<T>::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  int cin = 1;
  for (int i = 0; i < cfg_.depth; ++i) {
    const int c = cfg_.base_filters << i;
    const std::string p = "enc" + std::to_string(i);
    enc_.push_back(add_conv(p + ".conv1", cin, c, 3, 1));
    enc_.push_back(add_conv(p + ".conv2", c, c, 3, 1));
    cin = c;
  }
  const int b = cfg_.base_filters << cfg_.depth;
  bottleneck_.push_back(add_conv("bottleneck.conv1", cin, b, 3, cfg_.bottleneck_dilation));
  bottleneck_.push_back(add_conv("bottleneck.conv2", b, b, 3, cfg_.bottleneck_dilation));
  cin = b;
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    const int c = cfg_.base_filters << i;
    const std::string p = "dec" + std::to_string(i);
    dec_.push_back(add_conv(p + ".up", cin, c, 3, 1));
    dec_.push_back(add_conv(p + ".conv1", 2 * c, c, 3, 1));
    dec_.push_back(add_conv(p + ".conv2", c, c, 3, 1));
    cin = c;
  }
  head_ = add_conv("head", cin, 1, 1, 1);
}

template <class T>
typename UNet<T>::Conv UNet<T>::add_conv(const std::string& name, int cin, int cout, int k, int dilation) {
  const std::size_t layer = params_.size() / 2;
  const double fan_in = static_cast<double>(cin) * k * k;
  detail::Engine eng(detail::derive_seed(cfg_.init_seed, {layer}));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  const ad::Shape ws{cout, cin, k, k};
  std::vector<T> w(ws.numel());
  for (T& v : w) v = static_cast<T>(dist(eng));
  Conv c{params_.size(), params_.size() + 1, dilation};
  params_.push_back({name + ".weight", ad::Tensor<T>::from_values(ws, std::move(w), true)});
  params_.push_back({name + ".bias", ad::Tensor<T>::zeros(ad::Shape{1, cout, 1, 1}, true)});
  return c;
}

template <class T>
ad::Tensor<T> UNet<T>::conv(const ad::Tensor<T>& x, const Conv& c) const {
  return ad::conv2d(x, params_[c.weight].tensor, params_[c.bias].tensor, ad::ConvOptions{c.dilation});
}

template <class T>
ad::Tensor<T> UNet<T>::forward(const ad::Tensor<T>& batch, bool training, std::uint64_t noise_seed) const {
  const ad::Shape s = batch.shape();
  if (s.c != 1 || s.h != cfg_.input_size || s.w != cfg_.input_size) {
    throw ShapeError("input", "expected (N,1," + std::to_string(cfg_.input_size) + "," +
                                  std::to_string(cfg_.input_size) + "), got " + s.str());
  }
  ad::Tensor<T> x = ad::gaussian_noise(batch, cfg_.noise_std, training, noise_seed);
  std::vector<ad::Tensor<T>> skips;
  for (int i = 0; i < cfg_.depth; ++i) {
    x = ad::relu(conv(x, enc_[2 * i]));
    x = ad::relu(conv(x, enc_[2 * i + 1]));
    skips.push_back(x);
    x = ad::maxpool2(x);
  }
  x = ad::relu(conv(x, bottleneck_[0]));
  x = ad::relu(conv(x, bottleneck_[1]));
  for (int level = 0; level < cfg_.depth; ++level) {
    const Conv* d = &dec_[3 * level];
    x = conv(ad::upsample_nearest2(x), d[0]);
    x = ad::concat_channels(skips[cfg_.depth - 1 - level], x);
    x = ad::relu(conv(x, d[1]));
    x = ad::relu(conv(x, d[2]));
  }
  return ad::tanh_act(conv(x, head_));
}

template <class T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
ModelWeights UNet<T>::to_weights() const {
  ModelWeights w;
  for (const auto& p : params_) {
    const ad::Shape s = p.tensor.shape();
    NamedTensor t;
    t.name = p.name;
    t.shape = p.name.ends_with(".bias") ? std::vector<int>{s.c} : std::vector<int>{s.n, s.c, s.h, s.w};
    t.values.reserve(p.tensor.numel());
    for (T v : p.tensor.values()) t.values.push_back(static_cast<float>(v));
    w.tensors.push_back(std::move(t));
  }
  w.attributes = {{"input_size", cfg_.input_size},
                  {"base_filters", cfg_.base_filters},
                  {"depth", cfg_.depth},
                  {"bottleneck_dilation", cfg_.bottleneck_dilation},
                  {"noise_std", cfg_.noise_std},
                  {"output_scale", cfg_.output_scale}};
  return w;
}

template <class T>
void UNet<T>::load(const ModelWeights& w) {
  for (auto& p : params_) {
    const NamedTensor* t = w.find(p.name);
    if (t == nullptr) throw ConfigError(p.name, "tensor missing from weights");
    const ad::Shape s = p.tensor.shape();
    const std::vector<int> expected =
        p.name.ends_with(".bias") ? std::vector<int>{s.c} : std::vector<int>{s.n, s.c, s.h, s.w};
    if (t->shape != expected || t->values.size() != p.tensor.numel()) {
      std::string got;
      for (int d : t->shape) got += (got.empty() ? "" : "x") + std::to_string(d);
      throw ConfigError(p.name, "shape mismatch, stored " + got);
    }
  }
  if (w.tensors.size() != params_.size()) {
    for (const auto& t : w.tensors) {
      bool known = false;
      for (const auto& p : params_) known = known || p.name == t.name;
      if (!known) throw ConfigError(t.name, "tensor not part of this model");
    }
  }
  for (auto& p : params_) {
    const NamedTensor* t = w.find(p.name);
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->values[i]);
  }
}

template <class T>
UNet<T> UNet<T>::from_weights(const ModelWeights& w) {
  return from_weights(w, unet_config_from_weights(w));
}

template <class T>
UNet<T> UNet<T>::from_weights(const ModelWeights& w, const UNetConfig& cfg) {
  UNet<T> model(cfg);
  model.load(w);
  return model;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace osteoforge
