#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"

namespace pffl {

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a.data[k]) - b.data[k];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline double psnr_from_mse(double m, double max_i = 1.0) {
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_i * max_i / m);
}

inline double psnr(const Image& a, const Image& b, double max_i = 1.0) {
  return psnr_from_mse(mse(a, b), max_i);
}

// sqrt(sum_{c,i,j} (v[c,i,j] * m[i,j])^2), the penalty map broadcast across
// channels.
inline double weighted_norm(const Image& v, const PenaltyMap& m) {
  require_penalty_shape(v, m, "weighted_norm");
  const std::size_t plane = static_cast<std::size_t>(v.height) * v.width;
  double acc = 0.0;
  for (int c = 0; c < v.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const double t = static_cast<double>(v.data[c * plane + k]) * m.values[k];
      acc += t * t;
    }
  return std::sqrt(acc);
}

// Squared penalty-weighted distance between two images.
inline double pffl(const Image& a, const Image& b, const PenaltyMap& m) {
  require_same_shape(a, b, "pffl");
  require_penalty_shape(a, m, "pffl");
  const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
  double acc = 0.0;
  for (int c = 0; c < a.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const double t =
          (static_cast<double>(a.data[c * plane + k]) - b.data[c * plane + k]) *
          m.values[k];
      acc += t * t;
    }
  return acc;
}

struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  int window_radius = 5;      // 11x11 window
  double window_sigma = 1.5;  // Gaussian weighting
};

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += w[k + radius];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable weighted mean of `src` over valid window centers. Output has
// dims (h - 2r) x (w - 2r).
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                        const std::vector<double>& win) {
  const int r = (static_cast<int>(win.size()) - 1) / 2;
  const int wh = h;
  const int ww = w - 2 * r;
  std::vector<double> tmp(static_cast<std::size_t>(wh) * ww, 0.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < ww; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 2 * r + 1; ++k) acc += win[k] * src[static_cast<std::size_t>(i) * w + j + k];
      tmp[static_cast<std::size_t>(i) * ww + j] = acc;
    }
  const int oh = h - 2 * r;
  std::vector<double> out(static_cast<std::size_t>(oh) * ww, 0.0);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ww; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 2 * r + 1; ++k) acc += win[k] * tmp[static_cast<std::size_t>(i + k) * ww + j];
      out[static_cast<std::size_t>(i) * ww + j] = acc;
    }
  return out;
}

}  // namespace detail

// Mean structural similarity over valid (fully covered) Gaussian windows of
// the luminance planes.
inline double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {}) {
  require_same_shape(a, b, "ssim");
  const int r = cfg.window_radius;
  if (a.height < 2 * r + 1 || a.width < 2 * r + 1)
    throw ImageTooSmallError("ssim needs at least " + std::to_string(2 * r + 1) +
                             "x" + std::to_string(2 * r + 1) + ", got " +
                             a.shape_str());

  const Plane la = to_luminance(a);
  const Plane lb = to_luminance(b);
  const int h = a.height, w = a.width;
  const std::size_t n = la.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double xv = la.data[k], yv = lb.data[k];
    x[k] = xv;
    y[k] = yv;
    xx[k] = xv * xv;
    yy[k] = yv * yv;
    xy[k] = xv * yv;
  }

  const auto win = detail::gaussian_window(r, cfg.window_sigma);
  const auto mx = detail::filter_valid(x, h, w, win);
  const auto my = detail::filter_valid(y, h, w, win);
  const auto mxx = detail::filter_valid(xx, h, w, win);
  const auto myy = detail::filter_valid(yy, h, w, win);
  const auto mxy = detail::filter_valid(xy, h, w, win);

  const double c1 = cfg.k1 * cfg.dynamic_range * cfg.k1 * cfg.dynamic_range;
  const double c2 = cfg.k2 * cfg.dynamic_range * cfg.k2 * cfg.dynamic_range;
  double acc = 0.0;
  for (std::size_t k = 0; k < mx.size(); ++k) {
    const double sx = mxx[k] - mx[k] * mx[k];
    const double sy = myy[k] - my[k] * my[k];
    const double sxy = mxy[k] - mx[k] * my[k];
    const double num = (2.0 * mx[k] * my[k] + c1) * (2.0 * sxy + c2);
    const double den = (mx[k] * mx[k] + my[k] * my[k] + c1) * (sx + sy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

struct MetricReport {
  double pffl = 0.0;
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

// Full distortion report; pass m = nullptr for identity penalty.
inline MetricReport evaluate_report(const Image& a, const Image& b,
                                    const PenaltyMap* m = nullptr,
                                    const SsimConfig& ssim_cfg = {},
                                    double max_i = 1.0) {
  MetricReport r;
  if (m)
    r.pffl = pffl(a, b, *m);
  else
    r.pffl = pffl(a, b, PenaltyMap(a.height, a.width, 1.0f));
  r.mse = mse(a, b);
  r.psnr_db = psnr_from_mse(r.mse, max_i);
  r.ssim = ssim(a, b, ssim_cfg);
  return r;
}

}  // namespace pffl
