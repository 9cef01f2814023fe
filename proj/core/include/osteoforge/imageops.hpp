#pragma once

#include <cstdint>

#include "osteoforge/image.hpp"
#include "osteoforge/projector.hpp"

namespace osteoforge {

/// (p - min) / (max - min), tagged unit. A constant image maps to zeros.
RadiographImage minmax_normalize(const RadiographImage& img);

/// Affine rescale to the given mean and population standard deviation,
/// tagged standardized. A constant image maps to all `mean_target`.
RadiographImage standardize(const RadiographImage& img, double mean_target = 0.0,
                            double std_target = 0.5);

/// Global histogram equalization over `bins` uniform bins on [0, 1]:
/// p -> (cdf(bin(p)) - cdf_min) / (1 - cdf_min). Constant images are returned
/// unchanged.
RadiographImage hist_eq(const RadiographImage& img, int bins = 256);

struct ClaheConfig {
  int tile_width = 40;
  int tile_height = 40;
  double clip_limit = 0.01;
};

/// Histogram equalization with one clipped 256-bin histogram over the whole
/// image; identical to clahe() with a single tile.
RadiographImage clipped_hist_eq(const RadiographImage& img, double clip_limit = 0.01);

/// Contrast-limited adaptive histogram equalization. Tiles are laid on a
/// grid of the configured size (edge tiles may be smaller). Each tile's
/// histogram is clipped at max(1, round(clip * tile_pixels)); the clipped
/// excess is spread evenly over all bins once and any remainder dropped.
/// Pixel outputs interpolate bilinearly between the mappings of the four
/// nearest tile centers. Constant images are returned unchanged.
RadiographImage clahe(const RadiographImage& img, const ClaheConfig& cfg = {});

/// Normalized 5x5 Gaussian (sigma = 1) blur with symmetric edge reflection.
RadiographImage gaussian_blur5(const RadiographImage& img);

/// Unsharp masking img + alpha * (img - blur(img)). Unit-tagged images are
/// clamped back to [0, 1].
RadiographImage sharpen(const RadiographImage& img, double alpha = 0.5);

/// Bilinear resample to the requested size (pixel-center aligned). Same-size
/// requests return a bit-exact copy.
RadiographImage resample_bilinear(const RadiographImage& img, int width, int height);

RadiographImage flip_horizontal(const RadiographImage& img);

struct AugmentConfig {
  double horizontal_flip = 0.5;  ///< probability
  double noise_std = 0.02;       ///< additive Gaussian sigma
  double bias_range = 0.2;       ///< +- offset as a fraction of the image range
  double zoom_range = 0.3;       ///< +- spatial scale fraction
  double sharpen_alpha = 0.5;
  double sharpen_probability = 0.5;
  double rotation_deg = 0.0;     ///< max |rotation|
  double shift_range = 0.0;      ///< max |shift| as a fraction of the size
  std::uint64_t seed = 0;

  /// Every transform disabled; augment() becomes the identity.
  static AugmentConfig none();
  void validate() const;
};

/// Paired random augmentation. Geometric transforms (flip, zoom, rotation,
/// shift) are applied identically to source, target and mask (mask by
/// nearest neighbour, then re-binarized); intensity transforms (bias,
/// sharpening, noise) touch source and target only. Pure in
/// (pair, cfg, draw_index).
TrainingPair augment(const TrainingPair& pair, const AugmentConfig& cfg,
                     std::uint64_t draw_index);

}  // namespace osteoforge
