#include "osteoforge/losses.hpp"

#include <cmath>
#include <random>

#include "osteoforge/error.hpp"
#include "random.hpp"

namespace osteoforge {

namespace {

struct LayerSpec {
  const char* name;
  int cin;
  int cout;
};

constexpr LayerSpec kLayers[] = {
    {"block1_conv1", 3, 64},
    {"block1_conv2", 64, 64},
    {"block2_conv1", 64, 128},
    {"block2_conv2", 128, 128},
};

}  // namespace

void WeightedL1Config::validate() const {
  if (!(nodule_weight >= 0) || !std::isfinite(nodule_weight)) {
    throw ConfigError("nodule_weight", "must be finite and non-negative");
  }
}

template <class T>
ad::Tensor<T> l1_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target) {
  return ad::reduce_l1(pred, target);
}

template <class T>
ad::Tensor<T> weighted_l1_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                               const ad::Tensor<T>& nodule_mask, const WeightedL1Config& cfg) {
  cfg.validate();
  if (!nodule_mask.defined() || !pred.defined() || nodule_mask.shape() != pred.shape()) {
    throw ShapeError("nodule_mask", "must match the prediction shape");
  }
  if (target.shape() != pred.shape()) throw ShapeError("target", "must match the prediction shape");
  const auto m = nodule_mask.values();
  for (T v : m) {
    if (v != T(0) && v != T(1)) throw ConfigError("nodule_mask", "mask must be binary");
  }
  if (cfg.nodule_weight == 0.0) return l1_loss(pred, target);

  // Split into unmasked and masked means so that a constant mask reproduces
  // l1_loss (times 1 + w) bit-exactly.
  const auto pv = pred.values();
  const auto tv = target.values();
  double outside = 0.0;
  double inside = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = static_cast<double>(std::abs(pv[i] - tv[i]));
    (m[i] == T(1) ? inside : outside) += d;
  }
  const double n = static_cast<double>(pv.size());
  const T factor = static_cast<T>(1.0 + cfg.nodule_weight);
  const T value = static_cast<T>(outside / n) + factor * static_cast<T>(inside / n);
  ad::Tensor<T> mask = nodule_mask;
  return ad::record_op<T>(ad::Shape{1, 1, 1, 1}, {value}, {pred, target},
                          [n, factor, mask](std::span<const T> g, std::span<ad::Tensor<T>> p) {
                            const auto x = p[0].values();
                            const auto y = p[1].values();
                            const auto mk = mask.values();
                            const double q = static_cast<double>(g[0]) / n;
                            T* dx = p[0].requires_grad() ? p[0].mutable_grad().data() : nullptr;
                            T* dy = p[1].requires_grad() ? p[1].mutable_grad().data() : nullptr;
                            for (std::size_t i = 0; i < x.size(); ++i) {
                              const T diff = x[i] - y[i];
                              const double sgn = diff > T(0) ? 1.0 : (diff < T(0) ? -1.0 : 0.0);
                              const double wi = mk[i] == T(1) ? static_cast<double>(factor) : 1.0;
                              const T gi = static_cast<T>(sgn * q * wi);
                              if (dx != nullptr) dx[i] += gi;
                              if (dy != nullptr) dy[i] -= gi;
                            }
                          });
}

template <class T>
ad::Tensor<T> triplicate(const ad::Tensor<T>& x, const std::vector<double>& offset,
                         const std::vector<double>& scale) {
  if (!x.defined()) throw ShapeError("triplicate", "undefined tensor");
  const ad::Shape s = x.shape();
  if (s.c != 1) throw ShapeError("triplicate", "expected one channel, got " + s.str());
  if (!offset.empty() && offset.size() != 3) throw ConfigError("input_offset", "need 3 values");
  if (!scale.empty() && scale.size() != 3) throw ConfigError("input_scale", "need 3 values");
  T off[3];
  T sc[3];
  for (int c = 0; c < 3; ++c) {
    off[c] = offset.empty() ? T(0) : static_cast<T>(offset[c]);
    sc[c] = scale.empty() ? T(1) : static_cast<T>(scale[c]);
  }
  const ad::Shape os{s.n, 3, s.h, s.w};
  const std::size_t hw = s.plane();
  std::vector<T> out(os.numel());
  const auto xv = x.values();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < 3; ++c) {
      T* dst = out.data() + (static_cast<std::size_t>(n) * 3 + c) * hw;
      const T* src = xv.data() + static_cast<std::size_t>(n) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = sc[c] * src[i] + off[c];
    }
  const T s0 = sc[0], s1 = sc[1], s2 = sc[2];
  return ad::record_op<T>(os, std::move(out), {x}, [=](std::span<const T> g, std::span<ad::Tensor<T>> p) {
    auto dx = p[0].mutable_grad();
    for (int n = 0; n < s.n; ++n) {
      const T* g0 = g.data() + static_cast<std::size_t>(n) * 3 * hw;
      const T* g1 = g0 + hw;
      const T* g2 = g1 + hw;
      T* d = dx.data() + static_cast<std::size_t>(n) * hw;
      for (std::size_t i = 0; i < hw; ++i) d[i] += s0 * g0[i] + s1 * g1[i] + s2 * g2[i];
    }
  });
}

template <class T>
const std::vector<std::string>& LossNetwork<T>::layer_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& l : kLayers) v.emplace_back(l.name);
    return v;
  }();
  return names;
}

template <class T>
LossNetwork<T> LossNetwork<T>::random(std::uint64_t seed) {
  LossNetwork net;
  std::size_t layer = 0;
  for (const auto& l : kLayers) {
    detail::Engine eng(detail::derive_seed(seed, {layer++}));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * l.cin)));
    const ad::Shape ws{l.cout, l.cin, 3, 3};
    std::vector<T> w(ws.numel());
    for (T& v : w) v = static_cast<T>(dist(eng));
    net.tensors_.push_back(ad::Tensor<T>::from_values(ws, std::move(w)));
    net.tensors_.push_back(ad::Tensor<T>::zeros(ad::Shape{1, l.cout, 1, 1}));
  }
  return net;
}

template <class T>
LossNetwork<T> LossNetwork<T>::from_weights(const ModelWeights& w) {
  LossNetwork net;
  for (const auto& l : kLayers) {
    const std::string base = l.name;
    const NamedTensor* k = w.find(base + ".weight");
    const NamedTensor* b = w.find(base + ".bias");
    if (k == nullptr) throw ConfigError(base + ".weight", "tensor missing from weights");
    if (b == nullptr) throw ConfigError(base + ".bias", "tensor missing from weights");
    if (k->shape != std::vector<int>{l.cout, l.cin, 3, 3}) throw ConfigError(base + ".weight", "shape mismatch");
    if (b->shape != std::vector<int>{l.cout}) throw ConfigError(base + ".bias", "shape mismatch");
    net.tensors_.push_back(ad::Tensor<T>::from_values(ad::Shape{l.cout, l.cin, 3, 3},
                                                      std::vector<T>(k->values.begin(), k->values.end())));
    net.tensors_.push_back(ad::Tensor<T>::from_values(ad::Shape{1, l.cout, 1, 1},
                                                      std::vector<T>(b->values.begin(), b->values.end())));
  }
  if (w.input_offset) {
    if (w.input_offset->size() != 3) throw ConfigError("input_offset", "need 3 values");
    net.offset_ = *w.input_offset;
  }
  if (w.input_scale) {
    if (w.input_scale->size() != 3) throw ConfigError("input_scale", "need 3 values");
    net.scale_ = *w.input_scale;
  }
  return net;
}

template <class T>
ModelWeights LossNetwork<T>::to_weights() const {
  ModelWeights w;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const ad::Shape s = tensors_[i].shape();
    NamedTensor t;
    t.name = std::string(kLayers[i / 2].name) + (i % 2 == 0 ? ".weight" : ".bias");
    t.shape = i % 2 == 0 ? std::vector<int>{s.n, s.c, s.h, s.w} : std::vector<int>{s.c};
    for (T v : tensors_[i].values()) t.values.push_back(static_cast<float>(v));
    w.tensors.push_back(std::move(t));
  }
  if (!offset_.empty()) w.input_offset = offset_;
  if (!scale_.empty()) w.input_scale = scale_;
  return w;
}

template <class T>
ad::Tensor<T> LossNetwork<T>::features(const ad::Tensor<T>& rgb) const {
  ad::Tensor<T> x = rgb;
  for (std::size_t layer = 0; layer < 4; ++layer) {
    if (layer == 2) x = ad::maxpool2(x);
    x = ad::relu(ad::conv2d(x, tensors_[2 * layer], tensors_[2 * layer + 1]));
  }
  return x;
}

template <class T>
ad::Tensor<T> LossNetwork<T>::embed(const ad::Tensor<T>& gray) const {
  return features(triplicate(gray, offset_, scale_));
}

template <class T>
ad::Tensor<T> perceptual_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target,
                              const LossNetwork<T>& net) {
  if (!pred.defined() || !target.defined() || pred.shape() != target.shape()) {
    throw ShapeError("target", "must match the prediction shape");
  }
  ad::Tensor<T> target_features;
  {
    ad::NoGradGuard guard;
    target_features = net.embed(target);
  }
  return ad::reduce_mse(net.embed(pred), target_features);
}

template <class T>
ad::Tensor<T> mixed_loss(const ad::Tensor<T>& pred, const ad::Tensor<T>& target, const ad::Tensor<T>& mask,
                         const LossNetwork<T>* net, const LossMix& mix) {
  ad::Tensor<T> total;
  auto accumulate = [&](double coeff, auto&& term) {
    if (coeff == 0.0) return;
    ad::Tensor<T> t = coeff == 1.0 ? term() : ad::scale(term(), coeff);
    total = total.defined() ? ad::add(total, t) : t;
  };
  accumulate(mix.l1, [&] { return l1_loss(pred, target); });
  accumulate(mix.weighted_l1, [&] { return weighted_l1_loss(pred, target, mask, mix.weighted); });
  accumulate(mix.perceptual, [&] {
    if (net == nullptr) throw ConfigError("perceptual", "loss network required");
    return perceptual_loss(pred, target, *net);
  });
  if (!total.defined()) throw ConfigError("loss", "all loss coefficients are zero");
  return total;
}

#define OSTEOFORGE_INSTANTIATE(T)                                                                      \
  template ad::Tensor<T> l1_loss<T>(const ad::Tensor<T>&, const ad::Tensor<T>&);                       \
  template ad::Tensor<T> weighted_l1_loss<T>(const ad::Tensor<T>&, const ad::Tensor<T>&,               \
                                             const ad::Tensor<T>&, const WeightedL1Config&);           \
  template ad::Tensor<T> triplicate<T>(const ad::Tensor<T>&, const std::vector<double>&,               \
                                       const std::vector<double>&);                                    \
  template ad::Tensor<T> perceptual_loss<T>(const ad::Tensor<T>&, const ad::Tensor<T>&,                \
                                            const LossNetwork<T>&);                                    \
  template ad::Tensor<T> mixed_loss<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                       const LossNetwork<T>*, const LossMix&);                         \
  template class LossNetwork<T>;

OSTEOFORGE_INSTANTIATE(float)
OSTEOFORGE_INSTANTIATE(double)

#undef OSTEOFORGE_INSTANTIATE

}  // namespace osteoforge
