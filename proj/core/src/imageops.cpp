#include "osteoforge/imageops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "osteoforge/error.hpp"

namespace osteoforge {
namespace {

constexpr int kClaheBins = 256;

int bin_of(double p, int bins) {
  const int b = static_cast<int>(std::floor(p * bins));
  return std::clamp(b, 0, bins - 1);
}

bool is_constant(const RadiographImage& img) {
  const auto px = img.pixels();
  return std::all_of(px.begin(), px.end(), [&](double p) { return p == px.front(); });
}

int reflect(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// Equalization mapping of one clipped histogram. Bins below the first
/// occupied one map to 0; a histogram with a single occupied bin yields an
/// identity mapping.
struct TileMapping {
  std::array<double, kClaheBins> lut{};
  bool identity = false;

  double apply(double p) const { return identity ? p : lut[bin_of(p, kClaheBins)]; }
};

TileMapping clipped_mapping(const RadiographImage& img, int x0, int x1, int y0, int y1,
                            double clip_limit) {
  std::array<long, kClaheBins> hist{};
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) ++hist[bin_of(img.at(x, y), kClaheBins)];

  TileMapping m;
  const long occupied = std::count_if(hist.begin(), hist.end(), [](long h) { return h > 0; });
  if (occupied <= 1) {
    m.identity = true;
    return m;
  }

  const long pixels = static_cast<long>(x1 - x0) * static_cast<long>(y1 - y0);
  const long limit = std::max(1L, std::lround(clip_limit * static_cast<double>(pixels)));
  long excess = 0;
  for (long& h : hist) {
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  }
  const long share = excess / kClaheBins;
  for (long& h : hist) h += share;

  std::array<long, kClaheBins> cdf{};
  std::partial_sum(hist.begin(), hist.end(), cdf.begin());
  const long total = cdf.back();
  long cdf_min = 0;
  for (long c : cdf) {
    if (c > 0) {
      cdf_min = c;
      break;
    }
  }
  if (total == cdf_min) {
    m.identity = true;
    return m;
  }
  const double denom = static_cast<double>(total - cdf_min);
  for (int k = 0; k < kClaheBins; ++k) {
    m.lut[k] = std::max(0.0, static_cast<double>(cdf[k] - cdf_min) / denom);
  }
  return m;
}

}  // namespace

RadiographImage minmax_normalize(const RadiographImage& img) {
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  RadiographImage out(img.width(), img.height(), RangeTag::unit);
  if (span > 0) {
    auto dst = out.pixels();
    const auto src = img.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = std::clamp((src[i] - lo) / span, 0.0, 1.0);
    }
  }
  return out;
}

RadiographImage standardize(const RadiographImage& img, double mean_target,
                            double std_target) {
  const auto src = img.pixels();
  const double n = static_cast<double>(src.size());
  const double mean = std::accumulate(src.begin(), src.end(), 0.0) / n;
  double ss = 0.0;
  for (double p : src) ss += (p - mean) * (p - mean);
  const double sd = std::sqrt(ss / n);
  RadiographImage out(img.width(), img.height(), RangeTag::standardized, mean_target);
  if (sd > 0 && !is_constant(img)) {
    auto dst = out.pixels();
    const double gain = std_target / sd;
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mean) * gain + mean_target;
  }
  return out;
}

RadiographImage hist_eq(const RadiographImage& img, int bins) {
  if (bins < 2) throw ConfigError("bins", "need at least 2 bins");
  if (is_constant(img)) return img;
  std::vector<long> hist(static_cast<std::size_t>(bins), 0);
  for (double p : img.pixels()) ++hist[bin_of(p, bins)];
  const double n = static_cast<double>(img.size());
  std::vector<double> cdf(hist.size());
  long running = 0;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    running += hist[k];
    cdf[k] = static_cast<double>(running) / n;
  }
  const double cdf_min = *std::find_if(cdf.begin(), cdf.end(), [](double c) { return c > 0; });
  RadiographImage out(img.width(), img.height(), RangeTag::unit);
  auto dst = out.pixels();
  const auto src = img.pixels();
  if (cdf_min >= 1.0) {
    std::copy(src.begin(), src.end(), dst.begin());
    return out;
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = std::clamp((cdf[bin_of(src[i], bins)] - cdf_min) / (1.0 - cdf_min), 0.0, 1.0);
  }
  return out;
}

RadiographImage clipped_hist_eq(const RadiographImage& img, double clip_limit) {
  if (is_constant(img)) return img;
  const TileMapping m = clipped_mapping(img, 0, img.width(), 0, img.height(), clip_limit);
  RadiographImage out(img.width(), img.height(), RangeTag::unit);
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(m.apply(src[i]), 0.0, 1.0);
  return out;
}

RadiographImage clahe(const RadiographImage& img, const ClaheConfig& cfg) {
  if (cfg.tile_width <= 0 || cfg.tile_height <= 0) {
    throw ConfigError("window", "tile size must be positive");
  }
  if (!(cfg.clip_limit >= 0)) throw ConfigError("clip_limit", "must be non-negative");
  if (is_constant(img)) return img;

  const int w = img.width();
  const int h = img.height();
  const int tw = std::min(cfg.tile_width, w);
  const int th = std::min(cfg.tile_height, h);
  const int nx = (w + tw - 1) / tw;
  const int ny = (h + th - 1) / th;

  std::vector<TileMapping> maps;
  maps.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  std::vector<double> center_x(static_cast<std::size_t>(nx));
  std::vector<double> center_y(static_cast<std::size_t>(ny));
  for (int i = 0; i < nx; ++i) center_x[i] = (i * tw + std::min(w, (i + 1) * tw) - 1) / 2.0;
  for (int j = 0; j < ny; ++j) center_y[j] = (j * th + std::min(h, (j + 1) * th) - 1) / 2.0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      maps.push_back(clipped_mapping(img, i * tw, std::min(w, (i + 1) * tw), j * th,
                                     std::min(h, (j + 1) * th), cfg.clip_limit));

  // Neighbouring tile indices and the weight of the second one along an axis.
  auto locate = [](const std::vector<double>& centers, double p, int& a, int& b, double& t) {
    const int n = static_cast<int>(centers.size());
    if (p <= centers.front()) {
      a = b = 0;
      t = 0.0;
      return;
    }
    if (p >= centers.back()) {
      a = b = n - 1;
      t = 0.0;
      return;
    }
    a = static_cast<int>(std::upper_bound(centers.begin(), centers.end(), p) - centers.begin()) - 1;
    b = a + 1;
    t = (p - centers[a]) / (centers[b] - centers[a]);
  };

  RadiographImage out(w, h, RangeTag::unit);
  for (int y = 0; y < h; ++y) {
    int ja = 0, jb = 0;
    double ty = 0.0;
    locate(center_y, y, ja, jb, ty);
    for (int x = 0; x < w; ++x) {
      int ia = 0, ib = 0;
      double tx = 0.0;
      locate(center_x, x, ia, ib, tx);
      const double p = img.at(x, y);
      const auto& m00 = maps[static_cast<std::size_t>(ja * nx + ia)];
      const auto& m10 = maps[static_cast<std::size_t>(ja * nx + ib)];
      const auto& m01 = maps[static_cast<std::size_t>(jb * nx + ia)];
      const auto& m11 = maps[static_cast<std::size_t>(jb * nx + ib)];
      const double top = (1.0 - tx) * m00.apply(p) + tx * m10.apply(p);
      const double bottom = (1.0 - tx) * m01.apply(p) + tx * m11.apply(p);
      out.at(x, y) = std::clamp((1.0 - ty) * top + ty * bottom, 0.0, 1.0);
    }
  }
  return out;
}

RadiographImage gaussian_blur5(const RadiographImage& img) {
  std::array<double, 5> k{};
  for (int i = 0; i < 5; ++i) k[i] = std::exp(-0.5 * (i - 2) * (i - 2));
  const double norm = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= norm;

  const int w = img.width();
  const int h = img.height();
  RadiographImage tmp(w, h, img.tag());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += k[i] * img.at(reflect(x + i - 2, w), y);
      tmp.at(x, y) = s;
    }
  RadiographImage out(w, h, img.tag());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += k[i] * tmp.at(x, reflect(y + i - 2, h));
      out.at(x, y) = s;
    }
  return out;
}

RadiographImage sharpen(const RadiographImage& img, double alpha) {
  if (alpha == 0.0) return img;
  const RadiographImage blurred = gaussian_blur5(img);
  RadiographImage out = img;
  auto dst = out.pixels();
  const auto src = img.pixels();
  const auto blur = blurred.pixels();
  const bool clamp_unit = img.tag() == RangeTag::unit;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i] + alpha * (src[i] - blur[i]);
    dst[i] = clamp_unit ? std::clamp(v, 0.0, 1.0) : v;
  }
  return out;
}

RadiographImage resample_bilinear(const RadiographImage& img, int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("size", "target size must be positive");
  if (width == img.width() && height == img.height()) return img;
  RadiographImage out(width, height, img.tag());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      const double top = (1 - tx) * img.at(x0, y0) + tx * img.at(x1, y0);
      const double bottom = (1 - tx) * img.at(x0, y1) + tx * img.at(x1, y1);
      out.at(x, y) = (1 - ty) * top + ty * bottom;
    }
  }
  if (out.tag() == RangeTag::binary) {
    for (double& p : out.pixels()) p = p >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

RadiographImage flip_horizontal(const RadiographImage& img) {
  RadiographImage out = img;
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(w - 1 - x, y);
  return out;
}

}  // namespace osteoforge
