#include "osteoforge/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "osteoforge/error.hpp"

namespace osteoforge {
namespace {

using Plane = std::vector<double>;

struct Field {
  int w = 0;
  int h = 0;
  Plane v;
};

Field scaled(const RadiographImage& img, double range) {
  Field f{img.width(), img.height(), Plane(img.pixels().begin(), img.pixels().end())};
  for (double& p : f.v) p *= range;
  return f;
}

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g[i] = std::exp(-((i - c) * (i - c)) / (2 * sigma * sigma));
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= s;
  return g;
}

/// Separable "valid" filtering: output is (w - k + 1) x (h - k + 1).
Field filter_valid(const Field& in, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int ow = in.w - k + 1;
  const int oh = in.h - k + 1;
  Field tmp{ow, in.h, Plane(static_cast<std::size_t>(ow) * in.h)};
  for (int y = 0; y < in.h; ++y) {
    const double* row = in.v.data() + static_cast<std::size_t>(y) * in.w;
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * row[x + i];
      tmp.v[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  Field out{ow, oh, Plane(static_cast<std::size_t>(ow) * oh)};
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * tmp.v[static_cast<std::size_t>(y + i) * ow + x];
      out.v[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

Field product(const Field& a, const Field& b) {
  Field out{a.w, a.h, Plane(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

struct SsimMeans {
  double ssim = 0;  ///< mean of luminance * contrast-structure
  double cs = 0;    ///< mean of contrast-structure
};

SsimMeans ssim_means(const Field& a, const Field& b, const MetricConfig& cfg) {
  const auto g = gaussian_taps(cfg.window, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
  const Field mu_a = filter_valid(a, g);
  const Field mu_b = filter_valid(b, g);
  const Field aa = filter_valid(product(a, a), g);
  const Field bb = filter_valid(product(b, b), g);
  const Field ab = filter_valid(product(a, b), g);
  double sum_ssim = 0.0;
  double sum_cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i];
    const double mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma;
    const double vb = bb.v[i] - mb * mb;
    const double cov = ab.v[i] - ma * mb;
    const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    const double cs = (2 * cov + c2) / (va + vb + c2);
    sum_ssim += lum * cs;
    sum_cs += cs;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {sum_ssim / n, sum_cs / n};
}

Field downsample2(const Field& in) {
  Field out{in.w / 2, in.h / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.w) * out.h);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      const auto at = [&](int xx, int yy) { return in.v[static_cast<std::size_t>(yy) * in.w + xx]; };
      out.v[static_cast<std::size_t>(y) * out.w + x] =
          (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) +
           at(2 * x + 1, 2 * y + 1)) / 4.0;
    }
  return out;
}

std::string fmt_num(double v, int prec) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

nlohmann::json json_num(double v) {
  if (std::isfinite(v)) return v;
  return fmt_num(v, 0);
}

}  // namespace

int MetricConfig::min_msssim_side() const { return window << (scales() - 1); }

void MetricConfig::validate() const {
  if (!(dynamic_range > 0)) throw ConfigError("dynamic_range", "must be positive");
  if (window < 1 || window % 2 == 0) throw ConfigError("window", "must be a positive odd size");
  if (!(sigma > 0)) throw ConfigError("sigma", "must be positive");
  if (msssim_weights.empty()) throw ConfigError("msssim_weights", "need at least one scale");
  const double total = std::accumulate(msssim_weights.begin(), msssim_weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-3) throw ConfigError("msssim_weights", "must sum to 1 within 1e-3");
}

MetricConfig MetricConfig::for_image_size(int min_side) {
  MetricConfig cfg;
  int scales = 5;
  while (scales > 1 && (cfg.window << (scales - 1)) > min_side) --scales;
  cfg.msssim_weights.resize(static_cast<std::size_t>(scales));
  const double total = std::accumulate(cfg.msssim_weights.begin(), cfg.msssim_weights.end(), 0.0);
  for (double& w : cfg.msssim_weights) w /= total;
  return cfg;
}

double rmse(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg) {
  require_same_dims(a, b, "rmse");
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  double ss = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = (pa[i] - pb[i]) * cfg.dynamic_range;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(pa.size()));
}

double psnr(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg) {
  const double e = rmse(a, b, cfg);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(cfg.dynamic_range / e);
}

double ssim(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg) {
  cfg.validate();
  require_same_dims(a, b, "ssim");
  if (std::min(a.width(), a.height()) < cfg.window) {
    throw ShapeError("ssim", "image smaller than the " + std::to_string(cfg.window) + "px window");
  }
  return ssim_means(scaled(a, cfg.dynamic_range), scaled(b, cfg.dynamic_range), cfg).ssim;
}

double msssim(const RadiographImage& a, const RadiographImage& b, const MetricConfig& cfg) {
  cfg.validate();
  require_same_dims(a, b, "msssim");
  if (std::min(a.width(), a.height()) < cfg.min_msssim_side()) {
    throw ShapeError("msssim", "image side must be at least " +
                                   std::to_string(cfg.min_msssim_side()) + " for " +
                                   std::to_string(cfg.scales()) + " scales");
  }
  Field fa = scaled(a, cfg.dynamic_range);
  Field fb = scaled(b, cfg.dynamic_range);
  double result = 1.0;
  for (int s = 0; s < cfg.scales(); ++s) {
    const SsimMeans m = ssim_means(fa, fb, cfg);
    const bool last = s == cfg.scales() - 1;
    const double term = std::max(0.0, last ? m.ssim : m.cs);
    result *= std::pow(term, cfg.msssim_weights[static_cast<std::size_t>(s)]);
    if (!last) {
      fa = downsample2(fa);
      fb = downsample2(fb);
    }
  }
  return result;
}

MetricValues evaluate_pair(const RadiographImage& prediction, const RadiographImage& target,
                           const MetricConfig& cfg) {
  return MetricValues{rmse(prediction, target, cfg), psnr(prediction, target, cfg),
                      ssim(prediction, target, cfg), msssim(prediction, target, cfg)};
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  const auto infinite = std::count_if(values.begin(), values.end(),
                                      [](double v) { return std::isinf(v); });
  if (infinite > 0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, infinite == static_cast<long>(values.size()) ? 0.0 : inf};
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

MetricReport evaluate_set(
    const std::vector<std::pair<RadiographImage, RadiographImage>>& prediction_target,
    const MetricConfig& cfg) {
  if (prediction_target.empty()) throw ConfigError("pairs", "evaluation set is empty");
  MetricReport report;
  std::vector<double> r, p, s, m;
  for (const auto& [pred, target] : prediction_target) {
    const MetricValues v = evaluate_pair(pred, target, cfg);
    report.per_image.push_back(v);
    r.push_back(v.rmse);
    p.push_back(v.psnr);
    s.push_back(v.ssim);
    m.push_back(v.msssim);
  }
  report.rmse = mean_std(r);
  report.psnr = mean_std(p);
  report.ssim = mean_std(s);
  report.msssim = mean_std(m);
  return report;
}

std::string MetricReport::to_json() const {
  using nlohmann::json;
  auto agg = [](const MeanStd& v) { return json{{"mean", json_num(v.mean)}, {"std", json_num(v.std)}}; };
  json j;
  j["count"] = per_image.size();
  j["aggregate"] = {{"rmse", agg(rmse)}, {"psnr_db", agg(psnr)}, {"ssim", agg(ssim)},
                    {"msssim", agg(msssim)}};
  j["per_image"] = json::array();
  for (const auto& v : per_image) {
    j["per_image"].push_back({{"rmse", json_num(v.rmse)}, {"psnr_db", json_num(v.psnr)},
                              {"ssim", json_num(v.ssim)}, {"msssim", json_num(v.msssim)}});
  }
  return j.dump(2) + "\n";
}

std::string MetricReport::format_table(
    const std::vector<std::pair<std::string, MetricReport>>& rows) {
  const std::vector<std::string> head{"Loss", "RMSE", "PSNR[dB]", "SSIM", "MSSIM"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& [label, r] : rows) {
    auto cell = [](const MeanStd& v, int prec) {
      return fmt_num(v.mean, prec) + "(" + fmt_num(v.std, prec) + ")";
    };
    cells.push_back({label, cell(r.rmse, 2), cell(r.psnr, 2), cell(r.ssim, 3), cell(r.msssim, 3)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto& s = cells[r][c];
      out += c == 0 ? s + std::string(width[c] - s.size(), ' ')
                    : " | " + std::string(width[c] - s.size(), ' ') + s;
    }
    out += "\n";
    if (r == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        out += (c == 0 ? "" : "-+-") + std::string(width[c], '-');
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace osteoforge
