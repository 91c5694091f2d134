#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"
#include "pffl/rng.hpp"

namespace pffl {

using Label = int;

// Thread-safe query counter with an optional hard cap. charge() never lets
// the count pass the budget: the overflowing call throws instead of counting.
class QueryLedger {
public:
  explicit QueryLedger(std::optional<std::uint64_t> budget = std::nullopt)
      : budget_(budget) {}

  // Copying snapshots the count; the copies count independently afterwards.
  QueryLedger(const QueryLedger& o) : count_(o.count()), budget_(o.budget_) {}
  QueryLedger& operator=(const QueryLedger& o) {
    count_.store(o.count(), std::memory_order_relaxed);
    budget_ = o.budget_;
    return *this;
  }

  void charge() {
    if (!budget_) {
      count_.fetch_add(1, std::memory_order_relaxed);
      return;
    }
    std::uint64_t cur = count_.load(std::memory_order_relaxed);
    for (;;) {
      if (cur >= *budget_)
        throw BudgetExhaustedError("query budget of " + std::to_string(*budget_) +
                                   " exhausted");
      if (count_.compare_exchange_weak(cur, cur + 1, std::memory_order_relaxed))
        return;
    }
  }

  bool at_budget() const {
    return budget_ && count_.load(std::memory_order_relaxed) >= *budget_;
  }
  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }
  std::optional<std::uint64_t> budget() const { return budget_; }

private:
  std::atomic<std::uint64_t> count_{0};
  std::optional<std::uint64_t> budget_;
};

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  bool matches(const Image& img) const {
    return img.channels == channels && img.height == height && img.width == width;
  }
  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

// Hard-label classifier: callers see only the top-1 label, and every counted
// call goes through the ledger. predict_uncounted is for experiment setup and
// test verification, never for attack logic.
class Oracle {
public:
  explicit Oracle(std::optional<std::uint64_t> budget = std::nullopt)
      : ledger_(budget) {}
  virtual ~Oracle() = default;

  virtual Shape input_shape() const = 0;
  virtual int num_classes() const = 0;

  virtual Label classify(const Image& img) {
    check_shape(img);
    ledger_.charge();
    return predict(img);
  }

  Label predict_uncounted(const Image& img) const {
    check_shape(img);
    return predict(img);
  }

  std::uint64_t query_count() const { return ledger_.count(); }
  const QueryLedger& ledger() const { return ledger_; }

protected:
  virtual Label predict(const Image& img) const = 0;

  void check_shape(const Image& img) const {
    const Shape s = input_shape();
    if (!s.matches(img))
      throw ShapeMismatchError("oracle expects " + s.str() + ", got " +
                               img.shape_str());
  }

  QueryLedger ledger_;
};

// Two-class halfspace: label 1 iff w . x + b > 0. Accumulation order is
// fixed so results are reproducible bit-for-bit.
class LinearOracle : public Oracle {
public:
  LinearOracle(Shape shape, std::vector<float> weights, float bias,
               std::optional<std::uint64_t> budget = std::nullopt)
      : Oracle(budget), shape_(shape), w_(std::move(weights)), b_(bias) {
    const std::size_t n = static_cast<std::size_t>(shape_.channels) * shape_.height *
                          shape_.width;
    if (w_.size() != n)
      throw InvalidArgumentError("weight count " + std::to_string(w_.size()) +
                                 " does not match shape " + shape_.str());
  }

  static LinearOracle random(Shape shape, std::uint64_t seed, float bias = 0.0f,
                             std::optional<std::uint64_t> budget = std::nullopt) {
    const std::size_t n = static_cast<std::size_t>(shape.channels) * shape.height *
                          shape.width;
    Rng rng(seed);
    std::vector<float> w(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : w) v = static_cast<float>(rng.gaussian() * scale);
    return LinearOracle(shape, std::move(w), bias, budget);
  }

  Shape input_shape() const override { return shape_; }
  int num_classes() const override { return 2; }
  const std::vector<float>& weights() const { return w_; }
  float bias() const { return b_; }

  double margin(const Image& img) const {  // w . x + b, no query charged
    double acc = b_;
    for (std::size_t k = 0; k < w_.size(); ++k)
      acc += static_cast<double>(w_[k]) * img.data[k];
    return acc;
  }

protected:
  Label predict(const Image& img) const override { return margin(img) > 0.0 ? 1 : 0; }

private:
  Shape shape_;
  std::vector<float> w_;
  float b_;
};

// Small fixed-architecture conv net with weights drawn deterministically from
// the seed: two 3x3 conv layers (4 then 8 filters, ReLU, 2x2 mean pool after
// each) and a linear readout. Gaussian init scaled by 1/sqrt(fan_in); biases
// drawn the same way right after each layer's weights. Forward pass is
// single-precision with a pinned accumulation order.
class ConvOracle : public Oracle {
public:
  ConvOracle(Shape shape, int classes, std::uint64_t seed,
             std::optional<std::uint64_t> budget = std::nullopt)
      : Oracle(budget), shape_(shape), classes_(classes), seed_(seed) {
    if (classes_ < 2) throw InvalidArgumentError("need at least 2 classes");
    if (shape_.height < 4 || shape_.width < 4)
      throw ImageTooSmallError("conv oracle needs at least 4x4 input");
    h1_ = shape_.height / 2;
    w1_ = shape_.width / 2;
    h2_ = h1_ / 2;
    w2_ = w1_ / 2;
    feat_ = 8 * h2_ * w2_;

    Rng rng(seed_);
    auto draw = [&rng](std::vector<float>& dst, std::size_t n, std::size_t fan_in) {
      dst.resize(n);
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : dst) v = static_cast<float>(rng.gaussian() * scale);
    };
    const std::size_t c = static_cast<std::size_t>(shape_.channels);
    draw(w1k_, 4 * c * 9, c * 9);
    draw(b1_, 4, c * 9);
    draw(w2k_, 8 * 4 * 9, 4 * 9);
    draw(b2_, 8, 4 * 9);
    draw(wf_, static_cast<std::size_t>(classes_) * feat_, feat_);
    draw(bf_, classes_, feat_);
  }

  Shape input_shape() const override { return shape_; }
  int num_classes() const override { return classes_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<float> logits(const Image& img) const {
    std::vector<float> a = conv_relu_pool(img.data, shape_.channels, shape_.height,
                                          shape_.width, 4, w1k_, b1_);
    std::vector<float> b = conv_relu_pool(a, 4, h1_, w1_, 8, w2k_, b2_);
    std::vector<float> out(classes_);
    for (int k = 0; k < classes_; ++k) {
      float acc = bf_[k];
      for (int i = 0; i < feat_; ++i)
        acc += wf_[static_cast<std::size_t>(k) * feat_ + i] * b[i];
      out[k] = acc;
    }
    return out;
  }

protected:
  Label predict(const Image& img) const override {
    const std::vector<float> l = logits(img);
    int best = 0;
    for (int k = 1; k < classes_; ++k)
      if (l[k] > l[best]) best = k;
    return best;
  }

private:
  // 3x3 same-convolution (zero pad), ReLU, then 2x2 mean pool with stride 2
  // (odd trailing row/col dropped).
  static std::vector<float> conv_relu_pool(const std::vector<float>& in, int cin,
                                           int h, int w, int cout,
                                           const std::vector<float>& ker,
                                           const std::vector<float>& bias) {
    std::vector<float> conv(static_cast<std::size_t>(cout) * h * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int f = 0; f < cout; ++f)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          float acc = bias[f];
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky) {
              const int ii = i + ky - 1;
              if (ii < 0 || ii >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int jj = j + kx - 1;
                if (jj < 0 || jj >= w) continue;
                acc += ker[((static_cast<std::size_t>(f) * cin + c) * 3 + ky) * 3 + kx] *
                       in[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(ii) * w + jj];
              }
            }
          conv[static_cast<std::size_t>(f) * plane + static_cast<std::size_t>(i) * w + j] =
              acc > 0.0f ? acc : 0.0f;
        }
    const int ph = h / 2, pw = w / 2;
    std::vector<float> pooled(static_cast<std::size_t>(cout) * ph * pw);
    for (int f = 0; f < cout; ++f)
      for (int i = 0; i < ph; ++i)
        for (int j = 0; j < pw; ++j) {
          const std::size_t base = static_cast<std::size_t>(f) * plane;
          const float s = conv[base + static_cast<std::size_t>(2 * i) * w + 2 * j] +
                          conv[base + static_cast<std::size_t>(2 * i) * w + 2 * j + 1] +
                          conv[base + static_cast<std::size_t>(2 * i + 1) * w + 2 * j] +
                          conv[base + static_cast<std::size_t>(2 * i + 1) * w + 2 * j + 1];
          pooled[(static_cast<std::size_t>(f) * ph + i) * pw + j] = s * 0.25f;
        }
    return pooled;
  }

  Shape shape_;
  int classes_;
  std::uint64_t seed_;
  int h1_, w1_, h2_, w2_, feat_;
  std::vector<float> w1k_, b1_, w2k_, b2_, wf_, bf_;
};

}  // namespace pffl
