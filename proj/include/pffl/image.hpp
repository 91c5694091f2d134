#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pffl/errors.hpp"

namespace pffl {

// Single-channel float raster, row-major.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0.0f) {}

  float& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
  float at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return data.size(); }
};

// Per-pixel positive weights, broadcast across channels wherever an
// image-shaped tensor is weighted.
struct PenaltyMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  PenaltyMap() = default;
  PenaltyMap(int h, int w, float fill = 1.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  static PenaltyMap uniform(int h, int w, float v) { return PenaltyMap(h, w, v); }

  float& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }
  float at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }

  float max_value() const {
    float m = 0.0f;
    for (float v : values) m = std::max(m, v);
    return m;
  }
};

// Planar CHW float tensor: data[c*H*W + i*W + j]. Channels is 1 (gray) or
// 3 (RGB). Values are typically [0,1] in raw space but the container does not
// enforce a range; normalized-space tensors live in the same type.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int i, int j) {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  float at(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }

  // Container invariants: positive dims, channels in {1,3}, storage matches,
  // all values finite. Minimum feature-pipeline size is checked separately
  // where the sparsity window makes it matter.
  void validate() const {
    if (channels != 1 && channels != 3)
      throw InvalidArgumentError("image channels must be 1 or 3, got " +
                                 std::to_string(channels));
    if (height < 1 || width < 1)
      throw InvalidArgumentError("image dims must be positive, got " + shape_str());
    if (data.size() != static_cast<std::size_t>(channels) * height * width)
      throw InvalidArgumentError("image storage does not match shape " + shape_str());
    for (float v : data)
      if (!std::isfinite(v))
        throw InvalidArgumentError("image contains a non-finite value");
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeMismatchError(std::string(what) + ": shapes " + a.shape_str() +
                             " vs " + b.shape_str());
}

inline void require_penalty_shape(const Image& a, const PenaltyMap& m, const char* what) {
  if (a.height != m.height || a.width != m.width)
    throw ShapeMismatchError(std::string(what) + ": image " + a.shape_str() +
                             " vs penalty " + std::to_string(m.height) + "x" +
                             std::to_string(m.width));
}

// Channel-wise affine mapping between raw [0,1] space and model space:
// normalized = (raw - mean) / std. Single-channel images use component 0.
struct NormalizationSpec {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};

  static NormalizationSpec identity() { return {{0.0f, 0.0f, 0.0f}, {1.0f, 1.0f, 1.0f}}; }

  void validate() const {
    for (float s : std)
      if (!(s > 0.0f))
        throw InvalidArgumentError("normalization std components must be positive");
  }
};

inline Image normalize(const Image& img, const NormalizationSpec& spec) {
  spec.validate();
  Image out(img.channels, img.height, img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    const float m = spec.mean[static_cast<std::size_t>(c)];
    const float s = spec.std[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < plane; ++k)
      out.data[c * plane + k] = (img.data[c * plane + k] - m) / s;
  }
  return out;
}

inline Image denormalize(const Image& img, const NormalizationSpec& spec) {
  spec.validate();
  Image out(img.channels, img.height, img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    const float m = spec.mean[static_cast<std::size_t>(c)];
    const float s = spec.std[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < plane; ++k)
      out.data[c * plane + k] = img.data[c * plane + k] * s + m;
  }
  return out;
}

// Quarter turn counter-clockwise: out(i,j) = in(j, W-1-i).
inline Image rotate90_ccw(const Image& img) {
  Image out(img.channels, img.width, img.height);
  for (int c = 0; c < img.channels; ++c)
    for (int i = 0; i < out.height; ++i)
      for (int j = 0; j < out.width; ++j)
        out.at(c, i, j) = img.at(c, j, img.width - 1 - i);
  return out;
}

// BT.601 luma. Gray images pass through unchanged.
inline Plane to_luminance(const Image& img) {
  Plane out(img.height, img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  if (img.channels == 1) {
    for (std::size_t k = 0; k < plane; ++k) out.data[k] = img.data[k];
    return out;
  }
  if (img.channels != 3)
    throw InvalidArgumentError("luminance needs 1 or 3 channels, got " +
                               std::to_string(img.channels));
  for (std::size_t k = 0; k < plane; ++k)
    out.data[k] = 0.299f * img.data[k] + 0.587f * img.data[plane + k] +
                  0.114f * img.data[2 * plane + k];
  return out;
}

}  // namespace pffl
