#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"
#include "pffl/metrics.hpp"
#include "pffl/oracle.hpp"
#include "pffl/rng.hpp"

namespace pffl {

enum class GoalKind { Untargeted, Targeted };

struct AttackGoal {
  GoalKind kind = GoalKind::Untargeted;
  Label label = 0;  // untargeted: the original label; targeted: the target class

  static AttackGoal untargeted(Label original) { return {GoalKind::Untargeted, original}; }
  static AttackGoal targeted(Label target) { return {GoalKind::Targeted, target}; }

  bool satisfied(Label l) const {
    return kind == GoalKind::Targeted ? l == label : l != label;
  }
};

// Per-channel clamp bounds for the space the attack operates in. An empty box
// resolves to [0,1] on every channel.
struct Box {
  std::vector<float> lo, hi;

  bool empty() const { return lo.empty(); }

  static Box unit(int channels) {
    Box b;
    b.lo.assign(static_cast<std::size_t>(channels), 0.0f);
    b.hi.assign(static_cast<std::size_t>(channels), 1.0f);
    return b;
  }

  // Image of [0,1] under (v - mean) / std.
  static Box normalized(const NormalizationSpec& spec, int channels) {
    spec.validate();
    Box b;
    for (int c = 0; c < channels; ++c) {
      b.lo.push_back((0.0f - spec.mean[static_cast<std::size_t>(c)]) /
                     spec.std[static_cast<std::size_t>(c)]);
      b.hi.push_back((1.0f - spec.mean[static_cast<std::size_t>(c)]) /
                     spec.std[static_cast<std::size_t>(c)]);
    }
    return b;
  }

  Box resolved(int channels) const {
    if (empty()) return unit(channels);
    if (lo.size() != static_cast<std::size_t>(channels) || hi.size() != lo.size())
      throw InvalidArgumentError("domain box channel count mismatch");
    return *this;
  }

  void clamp(Image& img) const {
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    for (int c = 0; c < img.channels; ++c) {
      const float l = lo[static_cast<std::size_t>(c)], h = hi[static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < plane; ++k) {
        float& v = img.data[c * plane + k];
        v = v < l ? l : (v > h ? h : v);
      }
    }
  }
};

enum class RayNorm { WeightedL2, MaxNorm };
enum class NoiseMode { SignPreserving, Literal };
enum class NoiseDist { Gaussian, Uniform };

// Image-shaped double-precision vector; attack state stays in doubles and is
// narrowed to f32 only at the oracle boundary.
struct Direction {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Direction() = default;
  Direction(int c, int h, int w)
      : channels(c), height(h), width(w),
        v(static_cast<std::size_t>(c) * h * w, 0.0) {}

  static Direction from(const Image& img) {
    Direction d(img.channels, img.height, img.width);
    for (std::size_t k = 0; k < img.size(); ++k) d.v[k] = img.data[k];
    return d;
  }

  static Direction difference(const Image& to, const Image& from) {
    require_same_shape(to, from, "direction");
    Direction d(to.channels, to.height, to.width);
    for (std::size_t k = 0; k < to.size(); ++k)
      d.v[k] = static_cast<double>(to.data[k]) - from.data[k];
    return d;
  }

  std::size_t size() const { return v.size(); }

  Image to_image() const {
    Image img(channels, height, width);
    for (std::size_t k = 0; k < v.size(); ++k) img.data[k] = static_cast<float>(v[k]);
    return img;
  }
};

namespace detail {

inline std::size_t plane_size(const Direction& d) {
  return static_cast<std::size_t>(d.height) * d.width;
}

inline void require_dir_penalty(const Direction& d, const PenaltyMap& m, const char* what) {
  if (d.height != m.height || d.width != m.width)
    throw ShapeMismatchError(std::string(what) + ": direction/penalty shape mismatch");
}

// sum_{c,i,j} a b M^2 : the inner product whose norm is ||v (x) M||_2.
inline double dot_weighted(const Direction& a, const Direction& b, const PenaltyMap& m) {
  const std::size_t plane = plane_size(a);
  double acc = 0.0;
  for (int c = 0; c < a.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const double w = m.values[k];
      acc += a.v[c * plane + k] * b.v[c * plane + k] * w * w;
    }
  return acc;
}

inline double weighted_l2(const Direction& d, const PenaltyMap& m) {
  return std::sqrt(dot_weighted(d, d, m));
}

inline double max_abs(const Direction& d) {
  double mx = 0.0;
  for (double x : d.v) mx = std::max(mx, std::fabs(x));
  return mx;
}

}  // namespace detail

inline double direction_norm(const Direction& d, const PenaltyMap& m, RayNorm norm) {
  detail::require_dir_penalty(d, m, "direction_norm");
  return norm == RayNorm::MaxNorm ? detail::max_abs(d) : detail::weighted_l2(d, m);
}

// Weighted distance between two images: || (a-b) (x) M ||, or L-inf when
// norm is MaxNorm.
inline double image_distance(const Image& a, const Image& b, const PenaltyMap& m,
                             RayNorm norm = RayNorm::WeightedL2) {
  return direction_norm(Direction::difference(a, b), m, norm);
}

// x_org + lambda * theta / ||theta (x) M||, clamped to the box.
inline Image ray_point(const Image& x_org, const Direction& theta, double lambda,
                       const PenaltyMap& m, const Box& box,
                       RayNorm norm = RayNorm::WeightedL2) {
  const double nrm = direction_norm(theta, m, norm);
  if (!(nrm > 0.0)) throw InvalidArgumentError("ray direction has zero norm");
  const double s = lambda / nrm;
  Image out(x_org.channels, x_org.height, x_org.width);
  for (std::size_t k = 0; k < out.size(); ++k)
    out.data[k] = static_cast<float>(static_cast<double>(x_org.data[k]) + s * theta.v[k]);
  box.clamp(out);
  return out;
}

inline Direction draw_noise(int channels, int height, int width, NoiseDist dist,
                            Rng& rng) {
  Direction d(channels, height, width);
  if (dist == NoiseDist::Gaussian)
    for (auto& x : d.v) x = rng.gaussian();
  else
    for (auto& x : d.v) x = rng.uniform(-1.0, 1.0);
  return d;
}

// Penalty-aware probe noise: w = eta / M elementwise, then w^2 with the
// original sign kept (SignPreserving) or taken literally (Literal). Low
// penalty (edges) means larger probes there.
inline Direction transform_noise(const Direction& eta, const PenaltyMap& m,
                                 NoiseMode mode) {
  detail::require_dir_penalty(eta, m, "transform_noise");
  Direction out(eta.channels, eta.height, eta.width);
  const std::size_t plane = detail::plane_size(eta);
  for (int c = 0; c < eta.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const double w = eta.v[c * plane + k] / m.values[k];
      const double sq = w * w;
      out.v[c * plane + k] =
          (mode == NoiseMode::Literal) ? sq : (eta.v[c * plane + k] < 0.0 ? -sq : sq);
    }
  return out;
}

struct DistanceResult {
  double lambda = 0.0;
  std::uint64_t queries = 0;
};

// Smallest lambda (within tol) at which the clamped ray enters the goal
// region, found by geometric bracketing plus bisection. Returns the
// adversarial end of the final bracket, so the reported point satisfies the
// goal. Throws NotAdversarialDirectionError if the ray never crosses before
// lambda_max (default 10 * ||theta (x) M||).
inline DistanceResult boundary_distance(Oracle& oracle, const Image& x_org,
                                        const Direction& theta, const PenaltyMap& m,
                                        const AttackGoal& goal, double tol,
                                        const Box& box,
                                        RayNorm norm = RayNorm::WeightedL2,
                                        std::optional<double> warm = std::nullopt,
                                        std::optional<double> lambda_max = std::nullopt,
                                        double growth = 1.5) {
  if (!(tol > 0.0)) throw InvalidArgumentError("tolerance must be positive");
  if (!(growth > 1.0)) throw InvalidArgumentError("bracket growth must exceed 1");
  const double nrm = direction_norm(theta, m, norm);
  if (!(nrm > 0.0)) throw NotAdversarialDirectionError("zero direction");
  const double lmax = lambda_max.value_or(10.0 * nrm);

  DistanceResult res;
  auto adversarial_at = [&](double lambda) {
    ++res.queries;
    return goal.satisfied(oracle.classify(ray_point(x_org, theta, lambda, m, box, norm)));
  };

  double guess = warm.value_or(1.0);
  if (!(guess > 0.0)) guess = 1.0;
  guess = std::min(guess, lmax);

  double lo, hi;
  if (adversarial_at(guess)) {
    hi = guess;
    lo = guess / growth;
    while (adversarial_at(lo)) {
      hi = lo;
      lo /= growth;
      if (lo < tol * 0.25) return {hi, res.queries};  // boundary within noise of zero
    }
  } else {
    lo = guess;
    hi = guess * growth;
    while (!adversarial_at(hi)) {
      lo = hi;
      hi *= growth;
      if (hi > lmax)
        throw NotAdversarialDirectionError(
            "ray does not cross the decision boundary before lambda_max");
    }
  }

  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (adversarial_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  res.lambda = hi;
  return res;
}

struct SignOptConfig {
  int probes = 20;                 // directions per gradient estimate
  double epsilon = 5e-3;           // probe step, relative to ||theta (x) M||
  int max_iterations = 1000;
  NoiseDist noise_dist = NoiseDist::Gaussian;
  NoiseMode noise_mode = NoiseMode::SignPreserving;
  bool exact_probe_sign = false;   // re-measure g per probe instead of 1-query sign
  double line_search_shrink = 0.7;
  int line_search_trials = 15;
  double bisect_tol = 1e-4;
  double bracket_growth = 1.5;
  std::uint64_t seed = 0;
  RayNorm ray_norm = RayNorm::WeightedL2;
  Box domain;                                    // empty = [0,1]
  std::optional<NormalizationSpec> report_space; // map to raw space for metrics
  std::optional<PenaltyMap> report_penalty;      // metric penalty; default = guidance
  SsimConfig ssim;
};

struct SignGradientResult {
  Direction grad;
  std::uint64_t queries = 0;
};

// Zeroth-order sign estimate of the boundary-distance gradient at theta.
// Each probe costs one query in the default mode: if the point at the current
// distance along the probe ray is already adversarial, the distance shrank.
inline SignGradientResult estimate_sign_gradient(Oracle& oracle, const Image& x_org,
                                                 const Direction& theta,
                                                 const PenaltyMap& m,
                                                 const AttackGoal& goal,
                                                 double g_current, double epsilon_rel,
                                                 const SignOptConfig& cfg, Rng& rng,
                                                 const Box& box) {
  const double nrm = direction_norm(theta, m, cfg.ray_norm);
  if (!(nrm > 0.0)) throw InvalidArgumentError("zero direction");
  const double eps = epsilon_rel * nrm;

  SignGradientResult res;
  res.grad = Direction(theta.channels, theta.height, theta.width);
  for (int q = 0; q < cfg.probes; ++q) {
    const Direction eta =
        draw_noise(theta.channels, theta.height, theta.width, cfg.noise_dist, rng);
    const Direction eta_t = transform_noise(eta, m, cfg.noise_mode);
    Direction probe(theta.channels, theta.height, theta.width);
    for (std::size_t k = 0; k < probe.size(); ++k)
      probe.v[k] = theta.v[k] + eps * eta_t.v[k];

    double sign;
    if (cfg.exact_probe_sign) {
      const DistanceResult d =
          boundary_distance(oracle, x_org, probe, m, goal, cfg.bisect_tol, box,
                            cfg.ray_norm, g_current, std::nullopt, cfg.bracket_growth);
      res.queries += d.queries;
      sign = d.lambda < g_current ? -1.0 : (d.lambda > g_current ? 1.0 : 0.0);
    } else {
      ++res.queries;
      const bool adv =
          goal.satisfied(oracle.classify(ray_point(x_org, probe, g_current, m, box, cfg.ray_norm)));
      sign = adv ? -1.0 : 1.0;
    }
    for (std::size_t k = 0; k < res.grad.size(); ++k)
      res.grad.v[k] += sign * eta_t.v[k];
  }
  const double inv = 1.0 / static_cast<double>(cfg.probes);
  for (auto& x : res.grad.v) x *= inv;
  return res;
}

struct LineSearchResult {
  Direction theta;
  double g = 0.0;
  double gamma = 0.0;
  bool accepted = false;
  std::uint64_t queries = 0;
};

// Backtracking search along -grad. A candidate costs one query to test
// whether the boundary moved inward; only then is the new distance measured
// (downward bracketing from the known-adversarial current distance). Accepts
// the first candidate whose measured distance strictly decreases.
inline LineSearchResult line_search_step(Oracle& oracle, const Image& x_org,
                                         const Direction& theta, const PenaltyMap& m,
                                         const AttackGoal& goal, const Direction& grad,
                                         double g_current,
                                         std::optional<double> warm_gamma,
                                         const SignOptConfig& cfg, const Box& box) {
  LineSearchResult res;
  res.theta = theta;
  res.g = g_current;

  const double gnorm = direction_norm(grad, m, cfg.ray_norm);
  if (!(gnorm > 0.0)) return res;

  double gamma = warm_gamma ? *warm_gamma / cfg.line_search_shrink
                            : 0.2 * g_current / gnorm;
  for (int trial = 0; trial < cfg.line_search_trials;
       ++trial, gamma *= cfg.line_search_shrink) {
    Direction cand(theta.channels, theta.height, theta.width);
    for (std::size_t k = 0; k < cand.size(); ++k)
      cand.v[k] = theta.v[k] - gamma * grad.v[k];
    const double cnorm = direction_norm(cand, m, cfg.ray_norm);
    if (!(cnorm > 1e-12)) continue;

    ++res.queries;
    if (!goal.satisfied(oracle.classify(ray_point(x_org, cand, g_current, m, box, cfg.ray_norm))))
      continue;

    const DistanceResult d =
        boundary_distance(oracle, x_org, cand, m, goal, cfg.bisect_tol, box,
                          cfg.ray_norm, g_current, std::nullopt, cfg.bracket_growth);
    res.queries += d.queries;
    if (d.lambda < g_current) {
      res.theta = std::move(cand);
      res.g = d.lambda;
      res.gamma = gamma;
      res.accepted = true;
      return res;
    }
  }
  return res;
}

struct TraceRecord {
  std::uint64_t queries = 0;         // nominal checkpoint
  std::uint64_t ledger_queries = 0;  // oracle ledger at snapshot time
  double lambda = 0.0;
  double pffl = 0.0;
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct AttackTrace {
  std::vector<TraceRecord> records;
  Image final_image;
  Direction final_direction;
  double final_lambda = 0.0;
  std::uint64_t total_queries = 0;
  bool budget_exhausted = false;
};

namespace detail {

inline TraceRecord make_trace_record(std::uint64_t nominal, std::uint64_t ledger,
                                     double lambda, const Image& x_org,
                                     const Image& x_adv,
                                     const std::optional<NormalizationSpec>& space,
                                     const PenaltyMap& report_m,
                                     const SsimConfig& scfg) {
  TraceRecord r;
  r.queries = nominal;
  r.ledger_queries = ledger;
  r.lambda = lambda;
  Image a = x_org, b = x_adv;
  if (space) {
    a = denormalize(a, *space);
    b = denormalize(b, *space);
  }
  r.pffl = pffl(a, b, report_m);
  r.mse = mse(a, b);
  r.psnr_db = psnr_from_mse(r.mse);
  const int side = 2 * scfg.window_radius + 1;
  r.ssim = (a.height >= side && a.width >= side)
               ? ssim(a, b, scfg)
               : std::numeric_limits<double>::quiet_NaN();
  return r;
}

class CheckpointRecorder {
public:
  explicit CheckpointRecorder(std::vector<std::uint64_t> cps) : cps_(std::move(cps)) {
    std::sort(cps_.begin(), cps_.end());
    cps_.erase(std::unique(cps_.begin(), cps_.end()), cps_.end());
  }

  template <class SnapFn>
  void advance(std::uint64_t used, SnapFn&& snap) {
    while (idx_ < cps_.size() && used >= cps_[idx_]) {
      records_.push_back(snap(cps_[idx_]));
      ++idx_;
    }
  }

  template <class SnapFn>
  void fill_rest(SnapFn&& snap) {
    while (idx_ < cps_.size()) {
      records_.push_back(snap(cps_[idx_]));
      ++idx_;
    }
  }

  std::vector<TraceRecord> take() { return std::move(records_); }

private:
  std::vector<std::uint64_t> cps_;
  std::size_t idx_ = 0;
  std::vector<TraceRecord> records_;
};

}  // namespace detail

// Random restart for untargeted goals: squared penalty-shaped noise,
// rescaled affinely into the domain box, until the oracle disagrees with
// the original label.
inline Image init_untargeted(Oracle& oracle, const Image& x_org, Label y_org,
                             const PenaltyMap& m, NoiseDist dist, Rng& rng,
                             int max_tries = 50, const Box& box_in = {}) {
  require_penalty_shape(x_org, m, "init_untargeted");
  const Box box = box_in.resolved(x_org.channels);
  const std::size_t plane = static_cast<std::size_t>(x_org.height) * x_org.width;
  for (int t = 0; t < max_tries; ++t) {
    const Direction eta =
        draw_noise(x_org.channels, x_org.height, x_org.width, dist, rng);
    Image cand(x_org.channels, x_org.height, x_org.width);
    for (int c = 0; c < x_org.channels; ++c) {
      double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
      std::vector<double> vals(plane);
      for (std::size_t k = 0; k < plane; ++k) {
        const double w = eta.v[c * plane + k] / m.values[k];
        vals[k] = w * w;
        vmin = std::min(vmin, vals[k]);
        vmax = std::max(vmax, vals[k]);
      }
      const double lo = box.lo[static_cast<std::size_t>(c)];
      const double hi = box.hi[static_cast<std::size_t>(c)];
      const double span = vmax > vmin ? (hi - lo) / (vmax - vmin) : 0.0;
      for (std::size_t k = 0; k < plane; ++k)
        cand.data[c * plane + k] =
            static_cast<float>(span > 0.0 ? lo + (vals[k] - vmin) * span
                                          : 0.5 * (lo + hi));
    }
    if (oracle.classify(cand) != y_org) return cand;
  }
  throw InitFailureError("no misclassified start found in " +
                         std::to_string(max_tries) + " tries");
}

// Hard-label ray-distance descent: estimate the sign gradient of the
// boundary distance, take a backtracking step, repeat until the budget or
// iteration cap runs out. Budget exhaustion ends the run gracefully with the
// best state so far.
inline AttackTrace run_signopt(Oracle& oracle, const Image& x_org, const Image& x_start,
                               const PenaltyMap& m, const AttackGoal& goal,
                               const SignOptConfig& cfg = {},
                               const std::vector<std::uint64_t>& checkpoints = {}) {
  x_org.validate();
  x_start.validate();
  require_same_shape(x_org, x_start, "run_signopt");
  require_penalty_shape(x_org, m, "run_signopt");
  const Box box = cfg.domain.resolved(x_org.channels);
  const PenaltyMap& report_m = cfg.report_penalty ? *cfg.report_penalty : m;

  // Queries are accounted as the oracle ledger delta since entry, so the
  // total stays exact even when budget exhaustion interrupts a sub-call.
  const std::uint64_t ledger_base = oracle.query_count();
  auto used = [&] { return oracle.query_count() - ledger_base; };
  detail::CheckpointRecorder recorder(checkpoints);

  Direction theta = Direction::difference(x_start, x_org);
  double g = direction_norm(theta, m, cfg.ray_norm);
  if (!(g > 0.0)) throw InvalidStartError("start equals the original image");

  auto snapshot = [&](std::uint64_t nominal) {
    const Image adv = ray_point(x_org, theta, g, m, box, cfg.ray_norm);
    return detail::make_trace_record(nominal, oracle.query_count(), g, x_org, adv,
                                     cfg.report_space, report_m, cfg.ssim);
  };

  AttackTrace trace;
  try {
    const Label y0 = oracle.classify(x_org);
    if (goal.kind == GoalKind::Untargeted && y0 != goal.label)
      throw InvalidStartError("oracle label of the original image is not the stated one");
    if (goal.kind == GoalKind::Targeted && y0 == goal.label)
      throw InvalidStartError("original image already classifies as the target");
    if (!goal.satisfied(oracle.classify(x_start)))
      throw InvalidStartError("start image does not satisfy the goal");
    recorder.advance(used(), snapshot);

    const DistanceResult d0 =
        boundary_distance(oracle, x_org, theta, m, goal, cfg.bisect_tol, box,
                          cfg.ray_norm, g, std::nullopt, cfg.bracket_growth);
    g = d0.lambda;
    recorder.advance(used(), snapshot);

    Rng rng(cfg.seed);
    double eps = cfg.epsilon;
    std::optional<double> warm_gamma;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      SignGradientResult sg = estimate_sign_gradient(oracle, x_org, theta, m, goal, g,
                                                     eps, cfg, rng, box);
      recorder.advance(used(), snapshot);

      LineSearchResult ls = line_search_step(oracle, x_org, theta, m, goal, sg.grad, g,
                                             warm_gamma, cfg, box);
      if (ls.accepted) {
        theta = std::move(ls.theta);
        g = ls.g;
        warm_gamma = ls.gamma;
      } else {
        eps = std::max(eps * 0.5, 1e-8);
      }
      recorder.advance(used(), snapshot);
    }
  } catch (const BudgetExhaustedError&) {
    trace.budget_exhausted = true;
  }

  recorder.fill_rest(snapshot);
  trace.records = recorder.take();
  trace.final_image = ray_point(x_org, theta, g, m, box, cfg.ray_norm);
  trace.final_direction = std::move(theta);
  trace.final_lambda = g;
  trace.total_queries = used();
  return trace;
}

struct BoundaryAttackConfig {
  double orthogonal_step = 1e-2;  // gamma
  double source_step = 1e-2;      // beta
  int adaptation_window = 30;
  double orth_success_target = 0.5;
  double source_success_target = 0.25;
  double step_grow = 1.1;
  double step_shrink = 0.9;
  bool weighted_orthogonalization = true;
  int max_iterations = 1000000;  // the budget is the practical stop
  NoiseDist noise_dist = NoiseDist::Gaussian;
  std::uint64_t seed = 0;
  RayNorm lambda_norm = RayNorm::WeightedL2;  // distance reported in traces
  Box domain;
  std::optional<NormalizationSpec> report_space;
  std::optional<PenaltyMap> report_penalty;
  SsimConfig ssim;
};

// Distance-preserving random-walk candidate: eta is projected orthogonally to
// the current offset (in the M^2 inner product when weighted, plain dot
// otherwise), matched in weighted length, and blended so the weighted
// distance to x_org is unchanged. Pure geometry, no clamping.
inline Image ba_orthogonal_step(const Image& x_org, const Image& x_cur,
                                const PenaltyMap& m, const Direction& eta,
                                double gamma, bool weighted = true) {
  require_same_shape(x_org, x_cur, "ba_orthogonal_step");
  require_penalty_shape(x_org, m, "ba_orthogonal_step");
  if (!(gamma > 0.0)) throw InvalidArgumentError("gamma must be positive");

  const Direction d = Direction::difference(x_org, x_cur);
  const double dd = weighted ? detail::dot_weighted(d, d, m) : [&] {
    double acc = 0.0;
    for (double x : d.v) acc += x * x;
    return acc;
  }();
  if (!(dd > 0.0)) throw InvalidArgumentError("current point equals the original");

  double ed = 0.0;
  if (weighted)
    ed = detail::dot_weighted(eta, d, m);
  else
    for (std::size_t k = 0; k < d.v.size(); ++k) ed += eta.v[k] * d.v[k];

  Direction perp(eta.channels, eta.height, eta.width);
  const double coef = ed / dd;
  for (std::size_t k = 0; k < perp.size(); ++k) perp.v[k] = eta.v[k] - coef * d.v[k];

  const double en = detail::weighted_l2(perp, m);
  if (!(en > 0.0)) throw InvalidArgumentError("noise is parallel to the offset");
  const double dn = detail::weighted_l2(d, m);
  const double blend = 1.0 / std::sqrt(1.0 + gamma * gamma);
  const double escale = gamma * dn / en;

  Image out(x_org.channels, x_org.height, x_org.width);
  for (std::size_t k = 0; k < out.size(); ++k)
    out.data[k] = static_cast<float>(
        static_cast<double>(x_org.data[k]) + blend * (escale * perp.v[k] - d.v[k]));
  return out;
}

// Contraction toward the original: x + beta * M (x) (x_org - x). Requires
// beta in (0, 1/max(M)] so no coordinate overshoots the original.
inline Image ba_source_step(const Image& x_org, const Image& x_cur, const PenaltyMap& m,
                            double beta) {
  require_same_shape(x_org, x_cur, "ba_source_step");
  require_penalty_shape(x_org, m, "ba_source_step");
  const float mmax = m.max_value();
  if (!(beta > 0.0) || !(beta <= 1.0 / mmax))
    throw InvalidArgumentError("beta must lie in (0, 1/max(M)]");

  Image out(x_org.channels, x_org.height, x_org.width);
  const std::size_t plane = static_cast<std::size_t>(x_org.height) * x_org.width;
  for (int c = 0; c < x_org.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t idx = c * plane + k;
      const double step = beta * m.values[k] *
                          (static_cast<double>(x_org.data[idx]) - x_cur.data[idx]);
      out.data[idx] = static_cast<float>(static_cast<double>(x_cur.data[idx]) + step);
    }
  return out;
}

// Decision-boundary random walk: alternate orthogonal and source candidates,
// accept a candidate iff it still satisfies the goal (one query each), adapt
// the step sizes from windowed success rates.
inline AttackTrace run_boundary_attack(Oracle& oracle, const Image& x_org,
                                       const Image& x_start, const PenaltyMap& m,
                                       const AttackGoal& goal,
                                       const BoundaryAttackConfig& cfg = {},
                                       const std::vector<std::uint64_t>& checkpoints = {}) {
  x_org.validate();
  x_start.validate();
  require_same_shape(x_org, x_start, "run_boundary_attack");
  require_penalty_shape(x_org, m, "run_boundary_attack");
  const Box box = cfg.domain.resolved(x_org.channels);
  const PenaltyMap& report_m = cfg.report_penalty ? *cfg.report_penalty : m;
  const double beta_cap = 1.0 / m.max_value();

  // Ledger-delta accounting, as in run_signopt: exact under budget exhaustion.
  const std::uint64_t ledger_base = oracle.query_count();
  auto used = [&] { return oracle.query_count() - ledger_base; };
  detail::CheckpointRecorder recorder(checkpoints);

  Image x = x_start;
  auto snapshot = [&](std::uint64_t nominal) {
    return detail::make_trace_record(nominal, oracle.query_count(),
                                     image_distance(x, x_org, m, cfg.lambda_norm),
                                     x_org, x, cfg.report_space, report_m, cfg.ssim);
  };

  AttackTrace trace;
  double gamma = cfg.orthogonal_step;
  double beta = std::min(cfg.source_step, beta_cap);
  int orth_n = 0, orth_ok = 0, src_n = 0, src_ok = 0;
  Rng rng(cfg.seed);

  try {
    const Label y0 = oracle.classify(x_org);
    if (goal.kind == GoalKind::Untargeted && y0 != goal.label)
      throw InvalidStartError("oracle label of the original image is not the stated one");
    if (goal.kind == GoalKind::Targeted && y0 == goal.label)
      throw InvalidStartError("original image already classifies as the target");
    if (!goal.satisfied(oracle.classify(x_start)))
      throw InvalidStartError("start image does not satisfy the goal");
    if (image_distance(x_start, x_org, m, RayNorm::WeightedL2) <= 0.0)
      throw InvalidStartError("start equals the original image");
    recorder.advance(used(), snapshot);

    for (int it = 0; it < cfg.max_iterations; ++it) {
      if (!(image_distance(x, x_org, m, RayNorm::WeightedL2) > 0.0)) break;
      const Direction eta =
          draw_noise(x.channels, x.height, x.width, cfg.noise_dist, rng);
      Image cand = ba_orthogonal_step(x_org, x, m, eta, gamma,
                                      cfg.weighted_orthogonalization);
      box.clamp(cand);
      ++orth_n;
      if (goal.satisfied(oracle.classify(cand))) {
        x = std::move(cand);
        ++orth_ok;
      }
      recorder.advance(used(), snapshot);

      Image src = ba_source_step(x_org, x, m, beta);
      box.clamp(src);
      ++src_n;
      if (goal.satisfied(oracle.classify(src))) {
        x = std::move(src);
        ++src_ok;
      }
      recorder.advance(used(), snapshot);

      if (orth_n >= cfg.adaptation_window) {
        const double rate = static_cast<double>(orth_ok) / orth_n;
        if (rate > cfg.orth_success_target)
          gamma *= cfg.step_grow;
        else if (rate < cfg.orth_success_target)
          gamma *= cfg.step_shrink;
        gamma = std::clamp(gamma, 1e-6, 1e3);
        orth_n = orth_ok = 0;
      }
      if (src_n >= cfg.adaptation_window) {
        const double rate = static_cast<double>(src_ok) / src_n;
        if (rate > cfg.source_success_target)
          beta *= cfg.step_grow;
        else if (rate < cfg.source_success_target)
          beta *= cfg.step_shrink;
        beta = std::clamp(beta, 1e-9, beta_cap);
        src_n = src_ok = 0;
      }
    }
  } catch (const BudgetExhaustedError&) {
    trace.budget_exhausted = true;
  }

  recorder.fill_rest(snapshot);
  trace.records = recorder.take();
  trace.final_lambda = image_distance(x, x_org, m, cfg.lambda_norm);
  trace.final_direction = Direction::difference(x, x_org);
  trace.final_image = std::move(x);
  trace.total_queries = used();
  return trace;
}

}  // namespace pffl
