#include "osteoforge/projector.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "osteoforge/error.hpp"
#include "osteoforge/imageops.hpp"
#include "osteoforge/parallel.hpp"

namespace osteoforge {

void ProjectorConfig::validate() const {
  if (!(mu_water > 0)) throw ConfigError("mu_water", "must be positive");
  if (!(beta > 0)) throw ConfigError("beta", "must be positive");
}

RadiographImage attenuation_map(const Volume& vol, const ProjectorConfig& cfg) {
  cfg.validate();
  const Dims3& d = vol.dims();
  if (d.count() == 0) throw ConfigError("volume", "empty volume");
  const double scale = cfg.mu_water / (static_cast<double>(d.y) * 1000.0);
  RadiographImage out(d.x, d.z, RangeTag::raw);
  const auto data = vol.data();

  // One output row per z; within a row the accumulators run over x so the
  // y loop reads each slice contiguously.
  parallel_for(static_cast<std::size_t>(d.z), [&](std::size_t z0, std::size_t z1) {
    std::vector<double> acc(static_cast<std::size_t>(d.x));
    for (std::size_t z = z0; z < z1; ++z) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int y = 0; y < d.y; ++y) {
        const Hu* row = data.data() + vol.index(0, y, static_cast<int>(z));
        if (cfg.clamp_air) {
          for (int x = 0; x < d.x; ++x) acc[x] += std::max(0, row[x] + 1000);
        } else {
          for (int x = 0; x < d.x; ++x) acc[x] += row[x] + 1000;
        }
      }
      for (int x = 0; x < d.x; ++x) out.at(x, static_cast<int>(z)) = acc[x] * scale;
    }
  });
  return out;
}

RadiographImage drr_raw(const Volume& vol, const ProjectorConfig& cfg) {
  RadiographImage img = attenuation_map(vol, cfg);
  for (double& p : img.pixels()) p = std::exp(cfg.beta * p);
  return img;
}

RadiographImage drr(const Volume& vol, const ProjectorConfig& cfg) {
  return minmax_normalize(drr_raw(vol, cfg));
}

RadiographImage bone_drr(const Volume& vol, const ProjectorConfig& cfg, Hu lo, Hu hi) {
  return drr(bone_window(vol, lo, hi), cfg);
}

RadiographImage project_nodule_mask(const Dims3& dims,
                                    std::span<const NoduleAnnotation> nodules) {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw ConfigError("dims", "must be positive");
  RadiographImage mask(dims.x, dims.z, RangeTag::binary);
  for (const auto& n : nodules) {
    n.validate(dims);
    const auto& c = n.center_vox;
    const auto& r = n.radii_vox;
    // The ellipsoid term in y is minimized over the integers at the integer
    // nearest the center, so testing that single y decides existence.
    const int y_best = std::clamp(static_cast<int>(std::lround(c[1])), 0, dims.y - 1);
    const double ty = (y_best - c[1]) / r[1];
    const double y_term = ty * ty;
    const int x0 = std::max(0, static_cast<int>(std::floor(c[0] - r[0])));
    const int x1 = std::min(dims.x - 1, static_cast<int>(std::ceil(c[0] + r[0])));
    const int z0 = std::max(0, static_cast<int>(std::floor(c[2] - r[2])));
    const int z1 = std::min(dims.z - 1, static_cast<int>(std::ceil(c[2] + r[2])));
    for (int z = z0; z <= z1; ++z) {
      const double tz = (z - c[2]) / r[2];
      for (int x = x0; x <= x1; ++x) {
        const double tx = (x - c[0]) / r[0];
        if (tx * tx + y_term + tz * tz <= 1.0) mask.at(x, z) = 1.0;
      }
    }
  }
  return mask;
}

TrainingPair make_training_pair(const Volume& vol, std::span<const NoduleAnnotation> nodules,
                       const ProjectorConfig& cfg, Hu lo, Hu hi) {
  return TrainingPair{drr(vol, cfg), bone_drr(vol, cfg, lo, hi),
                      project_nodule_mask(vol.dims(), nodules)};
}

}  // namespace osteoforge
