#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "osteoforge/image.hpp"

namespace osteoforge {

/// Metric constants. Inputs are unit images; every metric first scales them
/// by `dynamic_range` (8-bit scale by default).
struct MetricConfig {
  double dynamic_range = 255.0;
  double k1 = 0.01;
  double k2 = 0.03;
  int window = 11;
  double sigma = 1.5;
  std::vector<double> msssim_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

  int scales() const { return static_cast<int>(msssim_weights.size()); }
  /// Smallest image side MS-SSIM accepts: window * 2^(scales - 1).
  int min_msssim_side() const;
  void validate() const;

  /// Default constants with as many MS-SSIM scales (at most 5) as an image
  /// whose shorter side is `min_side` supports; the retained standard
  /// weights are renormalized to sum to 1.
  static MetricConfig for_image_size(int min_side);
};

double rmse(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg = {});

/// 20 log10(L / RMSE); identical images give +infinity.
double psnr(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg = {});

/// Mean of the Gaussian-windowed SSIM map over all valid window positions.
double ssim(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg = {});

/// Multiscale SSIM with 2x2 mean-pool downsampling: contrast-structure
/// means at every scale but the last, full SSIM mean at the coarsest one,
/// each raised to its weight. Negative per-scale means are clipped to zero
/// before exponentiation.
double msssim(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg = {});

struct MetricValues {
  double rmse = 0;
  double psnr = 0;
  double ssim = 0;
  double msssim = 0;
};

struct MeanStd {
  double mean = 0;
  double std = 0;  ///< population convention
};

struct MetricReport {
  std::vector<MetricValues> per_image;
  MeanStd rmse;
  MeanStd psnr;
  MeanStd ssim;
  MeanStd msssim;

  std::string to_json() const;
  /// Aligned table with one row per labelled report, "mean(std)" cells.
  static std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows);
};

MetricValues evaluate_pair(const RadiographImage& prediction, const RadiographImage& target,
                           const MetricConfig& cfg = {});

/// Per-pair metrics plus population mean/std. Throws ConfigError on an
/// empty set.
MetricReport evaluate_set(
    const std::vector<std::pair<RadiographImage, RadiographImage>>& prediction_target,
    const MetricConfig& cfg = {});

MeanStd mean_std(const std::vector<double>& values);

}  // namespace osteoforge
