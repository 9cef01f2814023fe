#pragma once

#include <span>

#include "osteoforge/image.hpp"
#include "osteoforge/volume.hpp"

namespace osteoforge {

struct ProjectorConfig {
  /// Linear attenuation of water, cm^-1.
  double mu_water = 0.2;
  /// Exposure factor in the exponent of the DRR.
  double beta = 0.02;
  /// Clamp (HU + 1000) at zero so air below -1000 HU contributes nothing.
  bool clamp_air = true;

  void validate() const;
};

/// Mean attenuation along y under a parallel beam:
///   mu_av(x, z) = sum_y mu_water * (G(x,y,z) + 1000) / (N * 1000),  N = Y.
/// Output is width X, height Z, tagged raw. Accumulates in double in
/// ascending y, so the result is bit-exact for any thread count.
RadiographImage attenuation_map(const Volume& vol, const ProjectorConfig& cfg = {});

/// Raw DRR intensity exp(beta * mu_av(x, z)), tagged raw.
RadiographImage drr_raw(const Volume& vol, const ProjectorConfig& cfg = {});

/// drr_raw() min-max normalized to [0, 1]; a constant raw image gives zeros.
RadiographImage drr(const Volume& vol, const ProjectorConfig& cfg = {});

/// DRR of the bone-windowed volume: drr(bone_window(vol, lo, hi)).
RadiographImage bone_drr(const Volume& vol, const ProjectorConfig& cfg = {},
                         Hu lo = kBoneWindowLo, Hu hi = kBoneWindowHi);

/// Binary X-by-Z mask: pixel (x, z) is 1 iff some integer y in [0, Y) puts
/// (x, y, z) inside one of the annotated ellipsoids.
RadiographImage project_nodule_mask(const Dims3& dims,
                                    std::span<const NoduleAnnotation> nodules);

/// Source DRR, bone target and nodule mask for one CT case.
struct TrainingPair {
  RadiographImage source;
  RadiographImage target;
  RadiographImage nodule_mask;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

TrainingPair make_training_pair(const Volume& vol, std::span<const NoduleAnnotation> nodules,
                       const ProjectorConfig& cfg = {}, Hu lo = kBoneWindowLo,
                       Hu hi = kBoneWindowHi);

}  // namespace osteoforge
