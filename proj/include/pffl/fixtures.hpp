#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"
#include "pffl/rng.hpp"

namespace pffl {

// Constructed ground truth for synthetic fixtures. Ignore marks transition
// bands (filter-support wide) where either neighboring label is defensible;
// scored comparisons skip them, as segmentation ground truth does.
enum class GtLabel : std::uint8_t { Smooth = 0, Edge = 1, Texture = 2, Ignore = 3 };

struct TripartiteFixture {
  Image image;  // grayscale unless channels=3 requested (then replicated)
  std::vector<GtLabel> gt;
  int border_margin = 5;  // interior = at least this far from the image border
  int edge_boundary = 0;  // step sits between columns edge_boundary-1 and edge_boundary

  GtLabel gt_at(int i, int j) const {
    return gt[static_cast<std::size_t>(i) * image.width + j];
  }
  bool interior(int i, int j) const {
    return i >= border_margin && j >= border_margin &&
           i < image.height - border_margin && j < image.width - border_margin;
  }
};

// Three-band test image with known per-pixel ground truth:
//   left third    low-amplitude smooth bump field          -> Smooth
//   middle third  two flat levels split by a vertical step -> Edge on the
//                 4-column response band of the step, Smooth elsewhere
//   right third   2x2-block checkerboard, contrast tapered
//                 in over its first 5 columns              -> Texture
// Amplitude ranges are coupled: the resolved response threshold tracks the
// top of the smooth field's response distribution (~0.15x amp), and the step
// response decays by a factor ~6.5 per column away from the step. The draw
// ranges keep threshold/|step| above the second-column tail ratio (~0.040)
// for every seed, so the high-response band at the step stays 4 columns wide
// and its window density lands under the sparsity threshold, while the band
// itself responds ~3x above the threshold.
// Ground-truth quality is tuned for size >= 48; smaller fixtures are fine as
// attack subjects but their gt bands crowd together.
inline TripartiteFixture make_tripartite(int size, std::uint64_t seed,
                                         int channels = 1) {
  if (size < 16) throw InvalidArgumentError("tripartite fixture needs size >= 16");
  if (channels != 1 && channels != 3)
    throw InvalidArgumentError("tripartite fixture channels must be 1 or 3");
  const int s = size;
  const int t1 = s / 3;
  const int t2 = 2 * s / 3;

  Rng rng(seed);
  const double l1 = 0.40 + rng.uniform(-0.03, 0.03);
  const double step = (0.055 + rng.uniform(-0.006, 0.006)) *
                      (rng.uniform() < 0.5 ? -1.0 : 1.0);
  const double l2 = l1 + step;
  const double amp = 0.030 + rng.uniform(-0.003, 0.003);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const double contrast = 0.25 + rng.uniform(-0.04, 0.04);
  const int phase_i = static_cast<int>(rng.index(2));
  const int phase_j = static_cast<int>(rng.index(2));
  const int jitter = static_cast<int>(rng.index(5)) - 2;
  const int b = (t1 + t2) / 2 + jitter;  // step between columns b-1 and b
  const int taper = 5;

  const double pi = 3.14159265358979323846;
  Image img(1, s, s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      double v;
      if (j < t1) {
        const double u = pi * (j - t1) / static_cast<double>(t1);
        const double row = 0.6 + 0.4 * std::sin(2.0 * pi * i / s + phase);
        v = l1 + amp * std::sin(u) * row;
      } else if (j < t2) {
        v = (j < b) ? l1 : l2;
      } else {
        const double ramp = std::min(1.0, (j - t2) / static_cast<double>(taper));
        const int cell = (((i >> 1) + phase_i) ^ (((j - t2) >> 1) + phase_j)) & 1;
        v = l2 + (cell ? 0.5 : -0.5) * contrast * ramp;
      }
      img.at(0, i, j) = static_cast<float>(v);
    }

  TripartiteFixture fx;
  fx.edge_boundary = b;
  fx.gt.assign(static_cast<std::size_t>(s) * s, GtLabel::Smooth);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      GtLabel g = GtLabel::Smooth;
      if (j >= b - 2 && j <= b + 1)
        g = GtLabel::Edge;  // step response band
      else if (j >= b - 4 && j <= b + 3)
        g = GtLabel::Ignore;  // response tail of the step
      else if (j >= t2 - 3 && j < t2 + taper)
        g = GtLabel::Ignore;  // checkerboard onset and its tail into the flat
      else if (j >= t2 + taper)
        g = GtLabel::Texture;
      fx.gt[static_cast<std::size_t>(i) * s + j] = g;
    }

  if (channels == 3) {
    Image rgb(3, s, s);
    for (int c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < img.size(); ++k) rgb.data[c * img.size() + k] = img.data[k];
    fx.image = std::move(rgb);
  } else {
    fx.image = std::move(img);
  }
  return fx;
}

}  // namespace pffl
