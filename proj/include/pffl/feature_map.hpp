#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"

namespace pffl {

enum class FeatureLabel : std::uint8_t { Smooth = 0, Edge = 1, Texture = 2 };

struct FeatureLabelMap {
  int height = 0;
  int width = 0;
  std::vector<FeatureLabel> labels;

  FeatureLabelMap() = default;
  FeatureLabelMap(int h, int w)
      : height(h), width(w),
        labels(static_cast<std::size_t>(h) * w, FeatureLabel::Smooth) {}

  FeatureLabel& at(int i, int j) { return labels[static_cast<std::size_t>(i) * width + j]; }
  FeatureLabel at(int i, int j) const { return labels[static_cast<std::size_t>(i) * width + j]; }
};

// Orientation-maximized filter response magnitudes, >= 0.
struct ResponseMap {
  Plane plane;
};

// Local fraction of high-response pixels, in [0,1].
struct DensityMap {
  Plane plane;
};

struct ThresholdPolicy {
  enum class Kind { Quantile, Absolute };
  Kind kind = Kind::Quantile;
  double value = 0.6;

  static ThresholdPolicy quantile(double q) {
    if (!(q >= 0.0 && q <= 1.0))
      throw InvalidArgumentError("quantile must be in [0,1]");
    return {Kind::Quantile, q};
  }
  static ThresholdPolicy absolute(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw InvalidArgumentError("absolute threshold must be finite and >= 0");
    return {Kind::Absolute, sigma};
  }
};

struct FaConfig {
  int n_harmonics = 2;
  double gaussian_scale = 1.0;
  ThresholdPolicy threshold = {};

  void validate() const {
    if (n_harmonics < 1) throw InvalidArgumentError("n_harmonics must be >= 1");
    if (!(gaussian_scale > 0.0))
      throw InvalidArgumentError("gaussian_scale must be positive");
  }
};

struct MuWeights {
  float smooth = 1.0f;
  float edge = 0.3f;
  float texture = 0.5f;

  void validate() const {
    if (!(smooth > 0.0f) || !(edge > 0.0f) || !(texture > 0.0f))
      throw InvalidArgumentError("penalty weights must be positive");
  }
  float of(FeatureLabel l) const {
    switch (l) {
      case FeatureLabel::Edge: return edge;
      case FeatureLabel::Texture: return texture;
      default: return smooth;
    }
  }
};

struct SparsityConfig {
  int window_radius = 0;           // 0 resolves to floor(width/10), min 1
  double density_threshold = 0.4;  // window density at or below => Edge

  void validate() const {
    if (window_radius < 0) throw InvalidArgumentError("window_radius must be >= 0");
    if (!(density_threshold >= 0.0 && density_threshold <= 1.0))
      throw InvalidArgumentError("density_threshold must be in [0,1]");
  }
};

inline int resolve_window_radius(const SparsityConfig& cfg, int width) {
  if (cfg.window_radius > 0) return cfg.window_radius;
  return std::max(1, width / 10);
}

struct ThresholdResult {
  double sigma = 0.0;
  // All responses equal (e.g. constant input); callers label everything
  // Smooth instead of trusting a threshold on a degenerate distribution.
  bool degenerate = false;
};

namespace detail {

struct HarmonicBank {
  int radius = 0;
  // kernels[k-1][(dv+r)*(2r+1) + (du+r)], complex weights for harmonic k
  std::vector<std::vector<std::complex<double>>> kernels;
};

// Complex circular-harmonic kernels ((du + i dv)/sigma^2)^k * G(du,dv).
// k=1 is exactly the Gaussian-derivative pair (d/dcol, d/drow). Each kernel
// is mean-subtracted so constant inputs give zero response at every order,
// and orders >= 2 are rescaled to the k=1 energy so magnitudes stay
// comparable across harmonics.
inline HarmonicBank build_bank(const FaConfig& cfg) {
  const double s = cfg.gaussian_scale;
  const int r = std::max(2, static_cast<int>(std::ceil(4.0 * s)));
  const int side = 2 * r + 1;

  std::vector<double> g(static_cast<std::size_t>(side) * side);
  double gsum = 0.0;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du) {
      const double v = std::exp(-0.5 * (du * du + dv * dv) / (s * s));
      g[static_cast<std::size_t>(dv + r) * side + (du + r)] = v;
      gsum += v;
    }
  for (double& v : g) v /= gsum;

  HarmonicBank bank;
  bank.radius = r;
  bank.kernels.resize(cfg.n_harmonics);
  double ref_energy = 0.0;
  for (int k = 1; k <= cfg.n_harmonics; ++k) {
    auto& ker = bank.kernels[k - 1];
    ker.resize(g.size());
    std::complex<double> mean(0.0, 0.0);
    for (int dv = -r; dv <= r; ++dv)
      for (int du = -r; du <= r; ++du) {
        const std::complex<double> z(du / (s * s), dv / (s * s));
        std::complex<double> zk(1.0, 0.0);
        for (int p = 0; p < k; ++p) zk *= z;
        const std::size_t idx = static_cast<std::size_t>(dv + r) * side + (du + r);
        ker[idx] = zk * g[idx];
        mean += ker[idx];
      }
    mean /= static_cast<double>(ker.size());
    double energy = 0.0;
    for (auto& c : ker) {
      c -= mean;
      energy += std::norm(c);
    }
    if (k == 1) {
      ref_energy = energy;
    } else if (energy > 0.0) {
      const double scale = std::sqrt(ref_energy / energy);
      for (auto& c : ker) c *= scale;
    }
  }
  return bank;
}

// Symmetric (edge-repeating) reflection.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) i = (i < 0) ? (-i - 1) : (2 * n - i - 1);
  return i;
}

// Per-pixel complex responses for every harmonic.
inline std::vector<std::vector<std::complex<double>>> harmonic_responses(
    const Plane& plane, const HarmonicBank& bank) {
  const int h = plane.height, w = plane.width, r = bank.radius;
  const int side = 2 * r + 1;
  std::vector<std::vector<std::complex<double>>> resp(
      bank.kernels.size(),
      std::vector<std::complex<double>>(plane.size(), {0.0, 0.0}));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      for (std::size_t k = 0; k < bank.kernels.size(); ++k) {
        std::complex<double> acc(0.0, 0.0);
        const auto& ker = bank.kernels[k];
        for (int dv = -r; dv <= r; ++dv) {
          const int ii = reflect_index(i + dv, h);
          for (int du = -r; du <= r; ++du) {
            const int jj = reflect_index(j + du, w);
            acc += static_cast<double>(plane.at(ii, jj)) *
                   ker[static_cast<std::size_t>(dv + r) * side + (du + r)];
          }
        }
        resp[k][static_cast<std::size_t>(i) * w + j] = acc;
      }
    }
  return resp;
}

// max_alpha (Re sum_k u_k e^{-i k alpha})^2 for one pixel: coarse grid then
// ternary refinement around the best sample.
inline double max_sq_orientation(const std::vector<std::complex<double>>& uk) {
  const int n = static_cast<int>(uk.size());
  if (n == 1) return std::norm(uk[0]);

  auto eval = [&](double alpha) {
    double re = 0.0;
    for (int k = 1; k <= n; ++k) {
      const std::complex<double> e(std::cos(k * alpha), -std::sin(k * alpha));
      re += (uk[static_cast<std::size_t>(k - 1)] * e).real();
    }
    return re * re;
  };

  const int grid = std::max(64, 16 * n);
  const double step = 2.0 * 3.14159265358979323846 / grid;
  double best = -1.0, best_alpha = 0.0;
  for (int l = 0; l < grid; ++l) {
    const double a = l * step;
    const double v = eval(a);
    if (v > best) {
      best = v;
      best_alpha = a;
    }
  }
  double lo = best_alpha - step, hi = best_alpha + step;
  for (int it = 0; it < 64; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (eval(m1) < eval(m2))
      lo = m1;
    else
      hi = m2;
  }
  return std::max(best, eval(0.5 * (lo + hi)));
}

}  // namespace detail

// Orientation-maximized response magnitude at every pixel.
inline ResponseMap fa_response(const Plane& plane, const FaConfig& cfg = {}) {
  cfg.validate();
  const auto bank = detail::build_bank(cfg);
  const auto resp = detail::harmonic_responses(plane, bank);

  ResponseMap out;
  out.plane = Plane(plane.height, plane.width);
  std::vector<std::complex<double>> uk(bank.kernels.size());
  for (std::size_t p = 0; p < plane.size(); ++p) {
    for (std::size_t k = 0; k < bank.kernels.size(); ++k) uk[k] = resp[k][p];
    out.plane.data[p] = static_cast<float>(std::sqrt(detail::max_sq_orientation(uk)));
  }
  return out;
}

// Signed response steered to one fixed orientation; mainly for diagnostics
// and cross-checks of the maximization.
inline Plane fa_directional_response(const Plane& plane, const FaConfig& cfg,
                                     double alpha) {
  cfg.validate();
  const auto bank = detail::build_bank(cfg);
  const auto resp = detail::harmonic_responses(plane, bank);
  Plane out(plane.height, plane.width);
  for (std::size_t p = 0; p < plane.size(); ++p) {
    double re = 0.0;
    for (std::size_t k = 0; k < bank.kernels.size(); ++k) {
      const double ka = static_cast<double>(k + 1) * alpha;
      re += (resp[k][p] * std::complex<double>(std::cos(ka), -std::sin(ka))).real();
    }
    out.data[p] = static_cast<float>(re);
  }
  return out;
}

// Response threshold per the configured policy. Quantile uses linear
// interpolation between order statistics.
inline ThresholdResult resolve_threshold(const ResponseMap& resp,
                                         const ThresholdPolicy& policy) {
  const auto& d = resp.plane.data;
  if (d.empty()) throw InvalidArgumentError("empty response map");
  const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
  ThresholdResult out;
  out.degenerate = (*mn == *mx);
  if (policy.kind == ThresholdPolicy::Kind::Absolute) {
    out.sigma = policy.value;
    return out;
  }
  std::vector<float> sorted(d);
  std::sort(sorted.begin(), sorted.end());
  const double h = policy.value * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  out.sigma = (1.0 - frac) * sorted[lo] + frac * sorted[hi];
  return out;
}

// Fraction of high-response pixels (response >= sigma) in the centered
// (2 r0 - 1)^2 window, clipped at the borders. Exact counting via an
// integral image.
inline DensityMap sparsity_density(const ResponseMap& resp, double sigma, int r0) {
  if (r0 < 1) throw InvalidArgumentError("window radius must be >= 1");
  const int h = resp.plane.height, w = resp.plane.width;
  std::vector<std::int64_t> integral(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  for (int i = 0; i < h; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < w; ++j) {
      row += (static_cast<double>(resp.plane.at(i, j)) >= sigma) ? 1 : 0;
      integral[static_cast<std::size_t>(i + 1) * (w + 1) + (j + 1)] =
          integral[static_cast<std::size_t>(i) * (w + 1) + (j + 1)] + row;
    }
  }
  auto rect = [&](int i0, int i1, int j0, int j1) {  // inclusive bounds
    return integral[static_cast<std::size_t>(i1 + 1) * (w + 1) + (j1 + 1)] -
           integral[static_cast<std::size_t>(i0) * (w + 1) + (j1 + 1)] -
           integral[static_cast<std::size_t>(i1 + 1) * (w + 1) + j0] +
           integral[static_cast<std::size_t>(i0) * (w + 1) + j0];
  };
  DensityMap out;
  out.plane = Plane(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int i0 = std::max(0, i - r0 + 1), i1 = std::min(h - 1, i + r0 - 1);
      const int j0 = std::max(0, j - r0 + 1), j1 = std::min(w - 1, j + r0 - 1);
      const std::int64_t cnt = rect(i0, i1, j0, j1);
      const std::int64_t area = static_cast<std::int64_t>(i1 - i0 + 1) * (j1 - j0 + 1);
      out.plane.at(i, j) = static_cast<float>(static_cast<double>(cnt) / area);
    }
  return out;
}

// Pixel rules: response below sigma => Smooth; else density at or below the
// sparsity threshold => Edge (ties stay Edge); else Texture. Ties at the
// response threshold count as high response. The density comparison happens
// at the map's storage precision so representable ratios tie exactly.
inline std::pair<PenaltyMap, FeatureLabelMap> penalty_map(const ResponseMap& resp,
                                                          const DensityMap& dens,
                                                          double sigma,
                                                          const SparsityConfig& cfg,
                                                          const MuWeights& mu) {
  cfg.validate();
  mu.validate();
  const int h = resp.plane.height, w = resp.plane.width;
  if (dens.plane.height != h || dens.plane.width != w)
    throw ShapeMismatchError("density/response shape mismatch");
  PenaltyMap m(h, w);
  FeatureLabelMap labels(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      FeatureLabel l;
      if (static_cast<double>(resp.plane.at(i, j)) < sigma)
        l = FeatureLabel::Smooth;
      else if (dens.plane.at(i, j) <= static_cast<float>(cfg.density_threshold))
        l = FeatureLabel::Edge;
      else
        l = FeatureLabel::Texture;
      labels.at(i, j) = l;
      m.at(i, j) = mu.of(l);
    }
  return {std::move(m), std::move(labels)};
}

// Full pipeline: luminance -> response -> threshold -> density -> penalty.
inline std::pair<PenaltyMap, FeatureLabelMap> build_penalty(
    const Image& img, const FaConfig& fa = {}, const SparsityConfig& sp = {},
    const MuWeights& mu = {}) {
  img.validate();
  if (img.height < 8 || img.width < 8)
    throw ImageTooSmallError("feature classification needs at least 8x8, got " +
                             img.shape_str());
  fa.validate();
  sp.validate();
  mu.validate();

  const Plane lum = to_luminance(img);
  const ResponseMap resp = fa_response(lum, fa);
  const ThresholdResult thr = resolve_threshold(resp, fa.threshold);
  if (thr.degenerate) {
    PenaltyMap m(img.height, img.width, mu.smooth);
    FeatureLabelMap labels(img.height, img.width);
    return {std::move(m), std::move(labels)};
  }
  const int r0 = resolve_window_radius(sp, img.width);
  const DensityMap dens = sparsity_density(resp, thr.sigma, r0);
  return penalty_map(resp, dens, thr.sigma, sp, mu);
}

}  // namespace pffl
