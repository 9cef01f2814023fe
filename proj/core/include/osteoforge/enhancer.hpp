#pragma once

#include "osteoforge/image.hpp"
#include "osteoforge/trainer.hpp"
#include "osteoforge/unet.hpp"

namespace osteoforge {

/// Bone image of a radiograph, unit range, at the radiograph's size. Inputs
/// at the model size are not resampled.
RadiographImage predict_bone(const UNet<float>& model, const RadiographImage& cxr,
                             Preprocess p = Preprocess::standardize);

struct FusionConfig {
  double weight = 0.5;
  bool clamp = true;

  void validate() const;
};

/// cxr + w * bone per pixel, clamped to [0, 1] when cfg.clamp. Both inputs
/// must be unit-tagged and of equal size. w = 0 returns cxr bit-exactly.
RadiographImage fuse(const RadiographImage& cxr, const RadiographImage& bone, const FusionConfig& cfg = {});

}  // namespace osteoforge
