#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "osteoforge/error.hpp"
#include "osteoforge/imageops.hpp"
#include "random.hpp"

namespace osteoforge {
namespace {

struct AffineDraw {
  double scale = 1.0;
  double angle_rad = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;

  bool identity() const {
    return scale == 1.0 && angle_rad == 0.0 && shift_x == 0.0 && shift_y == 0.0;
  }
};

double zero_fill(const RadiographImage& img, int x, int y) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return 0.0;
  return img.at(x, y);
}

/// Output pixel (u, v) samples the source at center + R(-a) (d - shift) / s.
template <class Sample>
RadiographImage warp(const RadiographImage& img, const AffineDraw& g, Sample sample) {
  const double cx = (img.width() - 1) / 2.0;
  const double cy = (img.height() - 1) / 2.0;
  const double c = std::cos(g.angle_rad);
  const double s = std::sin(g.angle_rad);
  RadiographImage out(img.width(), img.height(), img.tag());
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const double dx = u - cx - g.shift_x;
      const double dy = v - cy - g.shift_y;
      const double sx = cx + (c * dx + s * dy) / g.scale;
      const double sy = cy + (-s * dx + c * dy) / g.scale;
      out.at(u, v) = sample(img, sx, sy);
    }
  }
  return out;
}

double sample_bilinear(const RadiographImage& img, double sx, double sy) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double tx = sx - x0;
  const double ty = sy - y0;
  const double top = (1 - tx) * zero_fill(img, x0, y0) + tx * zero_fill(img, x0 + 1, y0);
  const double bottom = (1 - tx) * zero_fill(img, x0, y0 + 1) + tx * zero_fill(img, x0 + 1, y0 + 1);
  return (1 - ty) * top + ty * bottom;
}

double sample_nearest(const RadiographImage& img, double sx, double sy) {
  return zero_fill(img, static_cast<int>(std::lround(sx)), static_cast<int>(std::lround(sy)));
}

void clamp_if_unit(RadiographImage& img) {
  if (img.tag() != RangeTag::unit) return;
  for (double& p : img.pixels()) p = std::clamp(p, 0.0, 1.0);
}

void add_bias(RadiographImage& img, double fraction) {
  if (fraction == 0.0) return;
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double offset = fraction * (*hi - *lo);
  for (double& p : img.pixels()) p += offset;
  clamp_if_unit(img);
}

void add_noise(RadiographImage& img, double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return;
  detail::Engine eng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& p : img.pixels()) p += noise(eng);
  clamp_if_unit(img);
}

}  // namespace

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.horizontal_flip = 0.0;
  c.noise_std = 0.0;
  c.bias_range = 0.0;
  c.zoom_range = 0.0;
  c.sharpen_alpha = 0.0;
  c.sharpen_probability = 0.0;
  c.rotation_deg = 0.0;
  c.shift_range = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(field, "probability must be in [0,1]");
  };
  auto nonneg = [](double v, const char* field) {
    if (!(v >= 0.0)) throw ConfigError(field, "must be non-negative");
  };
  prob(horizontal_flip, "horizontal_flip");
  prob(sharpen_probability, "sharpen_probability");
  nonneg(noise_std, "noise_std");
  nonneg(bias_range, "bias_range");
  nonneg(zoom_range, "zoom_range");
  nonneg(sharpen_alpha, "sharpen_alpha");
  nonneg(rotation_deg, "rotation_deg");
  nonneg(shift_range, "shift_range");
  if (zoom_range >= 1.0) throw ConfigError("zoom_range", "must be below 1");
}

TrainingPair augment(const TrainingPair& pair, const AugmentConfig& cfg,
                     std::uint64_t draw_index) {
  cfg.validate();
  require_same_dims(pair.source, pair.target, "target");
  require_same_dims(pair.source, pair.nodule_mask, "nodule_mask");

  // Draws happen in a fixed order whether or not a transform is enabled, so
  // toggling one transform does not reshuffle the others.
  detail::Engine eng(detail::derive_seed(cfg.seed, {draw_index, 0}));
  const double u_flip = detail::uniform(eng, 0.0, 1.0);
  const double u_zoom = detail::symmetric(eng);
  const double u_rot = detail::symmetric(eng);
  const double u_sx = detail::symmetric(eng);
  const double u_sy = detail::symmetric(eng);
  const double u_bias = detail::symmetric(eng);
  const double u_sharp = detail::uniform(eng, 0.0, 1.0);

  TrainingPair out = pair;
  if (u_flip < cfg.horizontal_flip) {
    out.source = flip_horizontal(out.source);
    out.target = flip_horizontal(out.target);
    out.nodule_mask = flip_horizontal(out.nodule_mask);
  }

  AffineDraw g;
  if (cfg.zoom_range > 0) g.scale = 1.0 + cfg.zoom_range * u_zoom;
  if (cfg.rotation_deg > 0) g.angle_rad = cfg.rotation_deg * u_rot * std::numbers::pi / 180.0;
  if (cfg.shift_range > 0) {
    g.shift_x = cfg.shift_range * u_sx * pair.source.width();
    g.shift_y = cfg.shift_range * u_sy * pair.source.height();
  }
  if (!g.identity()) {
    out.source = warp(out.source, g, sample_bilinear);
    out.target = warp(out.target, g, sample_bilinear);
    out.nodule_mask = warp(out.nodule_mask, g, sample_nearest);
    for (double& p : out.nodule_mask.pixels()) p = p >= 0.5 ? 1.0 : 0.0;
    clamp_if_unit(out.source);
    clamp_if_unit(out.target);
  }

  if (cfg.bias_range > 0) {
    add_bias(out.source, cfg.bias_range * u_bias);
    add_bias(out.target, cfg.bias_range * u_bias);
  }
  if (cfg.sharpen_alpha > 0 && u_sharp < cfg.sharpen_probability) {
    out.source = sharpen(out.source, cfg.sharpen_alpha);
    out.target = sharpen(out.target, cfg.sharpen_alpha);
  }
  add_noise(out.source, cfg.noise_std, detail::derive_seed(cfg.seed, {draw_index, 1}));
  add_noise(out.target, cfg.noise_std, detail::derive_seed(cfg.seed, {draw_index, 2}));
  return out;
}

}  // namespace osteoforge
