#include "osteoforge/enhancer.hpp"

#include <algorithm>
#include <cmath>

#include "osteoforge/error.hpp"
#include "osteoforge/imageops.hpp"

namespace osteoforge {

RadiographImage predict_bone(const UNet<float>& model, const RadiographImage& cxr, Preprocess p) {
  if (cxr.size() == 0) throw ShapeError("image", "empty image");
  const int s = model.config().input_size;
  const bool resize = cxr.width() != s || cxr.height() != s;
  const RadiographImage input = resize ? resample_bilinear(cxr, s, s) : cxr;
  RadiographImage bone = minmax_normalize(predict_unit(model, input, p));
  if (resize) {
    bone = resample_bilinear(bone, cxr.width(), cxr.height());
    for (double& v : bone.pixels()) v = std::clamp(v, 0.0, 1.0);
  }
  bone.set_tag(RangeTag::unit);
  return bone;
}

void FusionConfig::validate() const {
  if (!(weight >= 0) || !std::isfinite(weight)) throw ConfigError("weight", "must be finite and non-negative");
}

RadiographImage fuse(const RadiographImage& cxr, const RadiographImage& bone, const FusionConfig& cfg) {
  cfg.validate();
  require_same_dims(cxr, bone, "bone");
  if (cxr.tag() != RangeTag::unit) throw ConfigError("cxr", "expected a unit-range image");
  if (bone.tag() != RangeTag::unit) throw ConfigError("bone", "expected a unit-range image");
  RadiographImage out = cxr;
  if (cfg.weight == 0.0) return out;
  const auto b = bone.pixels();
  auto o = out.pixels();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = o[i] + cfg.weight * b[i];
    o[i] = cfg.clamp ? std::clamp(v, 0.0, 1.0) : v;
  }
  if (!cfg.clamp) out.set_tag(RangeTag::raw);
  return out;
}

}  // namespace osteoforge
