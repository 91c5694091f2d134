#pragma once

// Batch evaluation harness: experiment configs, oracle/image spec strings,
// attack sweeps with per-checkpoint medians, the constrained-descent
// correlation study, and deterministic CSV/SVG report emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pffl/attack.hpp"
#include "pffl/errors.hpp"
#include "pffl/feature_map.hpp"
#include "pffl/fixtures.hpp"
#include "pffl/image.hpp"
#include "pffl/metrics.hpp"
#include "pffl/oracle.hpp"
#include "pffl/oracle_http.hpp"
#include "pffl/png_io.hpp"
#include "pffl/rng.hpp"
#include "pffl/tensor_format.hpp"

namespace pffl {

// ---------------------------------------------------------------------------
// Spec string parsing

namespace detail {

// Parses "a=1,b=2" into a key/value map. Repeated keys keep the last value.
inline std::map<std::string, std::string> parse_kv(const std::string& s) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(pos, end - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw InvalidArgumentError("bad key=value item '" + item + "' in '" + s + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
    pos = end + 1;
  }
  return out;
}

inline std::uint64_t kv_u64(const std::map<std::string, std::string>& kv,
                            const std::string& key,
                            std::optional<std::uint64_t> fallback = std::nullopt) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    if (fallback) return *fallback;
    throw InvalidArgumentError("missing required key '" + key + "'");
  }
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw InvalidArgumentError("key '" + key + "' is not an integer: " + it->second);
  }
}

inline double kv_double(const std::map<std::string, std::string>& kv,
                        const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw InvalidArgumentError("key '" + key + "' is not a number: " + it->second);
  }
}

inline bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

// Loads an image from a spec string. Accepted forms:
//   fixture:tripartite:size=64,seed=7[,channels=1]   synthetic fixture
//   path/to/file.png                                 8-bit PNG
//   path/to/file.pft                                 tensor file
inline Image load_image_spec(const std::string& spec) {
  if (detail::starts_with(spec, "fixture:tripartite:")) {
    const auto kv = detail::parse_kv(spec.substr(std::string("fixture:tripartite:").size()));
    const int size = static_cast<int>(detail::kv_u64(kv, "size"));
    const std::uint64_t seed = detail::kv_u64(kv, "seed");
    const int channels = static_cast<int>(detail::kv_u64(kv, "channels", 1));
    return make_tripartite(size, seed, channels).image;
  }
  if (detail::starts_with(spec, "fixture:"))
    throw InvalidArgumentError("unknown fixture spec: " + spec);
  if (detail::ends_with(spec, ".png")) return load_png(spec);
  return read_tensor(spec);
}

// Builds an oracle from a spec string. Accepted forms:
//   linear:seed=7[,bias=0.05]        random halfspace oracle
//   conv:seed=7[,classes=10]         small seeded conv net
//   http://host:port  or  host:port  remote oracle over the wire protocol
// `budget`, when present, caps counted queries for the returned oracle.
inline std::unique_ptr<Oracle> make_oracle(const std::string& spec, Shape shape,
                                           std::optional<std::uint64_t> budget = std::nullopt) {
  if (detail::starts_with(spec, "linear:")) {
    const auto kv = detail::parse_kv(spec.substr(7));
    const std::uint64_t seed = detail::kv_u64(kv, "seed");
    const float bias = static_cast<float>(detail::kv_double(kv, "bias", 0.0));
    return std::make_unique<LinearOracle>(LinearOracle::random(shape, seed, bias, budget));
  }
  if (detail::starts_with(spec, "conv:")) {
    const auto kv = detail::parse_kv(spec.substr(5));
    const std::uint64_t seed = detail::kv_u64(kv, "seed");
    const int classes = static_cast<int>(detail::kv_u64(kv, "classes", 10));
    return std::make_unique<ConvOracle>(shape, classes, seed, budget);
  }
  if (detail::starts_with(spec, "http://") || detail::starts_with(spec, "https://"))
    return remote_oracle(spec, shape, -1, budget);
  // Bare host:port, where the port is all digits. Anything else is a typo.
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon + 1 < spec.size()) {
    const std::string port = spec.substr(colon + 1);
    const bool numeric = std::all_of(port.begin(), port.end(), [](unsigned char c) {
      return c >= '0' && c <= '9';
    });
    if (numeric) return remote_oracle(spec, shape, -1, budget);
  }
  throw InvalidArgumentError("unrecognized oracle spec: " + spec);
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::vector<std::string> images;         // image spec strings, see load_image_spec
  std::vector<std::string> target_images;  // required per image when goal == "targeted"
  std::string oracle = "conv:seed=1,classes=10";
  std::string algorithm = "signopt";       // "signopt" | "boundary"
  std::vector<std::string> objectives = {"pffl", "l2"};
  std::string goal = "untargeted";         // "untargeted" | "targeted"
  std::uint64_t budget = 3200;
  std::vector<std::uint64_t> checkpoints = {800, 1600, 2400, 3200};
  std::uint64_t base_seed = 0;

  void validate() const {
    if (images.empty()) throw EmptyImageSetError("experiment has no images");
    if (algorithm != "signopt" && algorithm != "boundary")
      throw InvalidArgumentError("unknown algorithm: " + algorithm);
    if (goal != "untargeted" && goal != "targeted")
      throw InvalidArgumentError("unknown goal: " + goal);
    if (goal == "targeted" && target_images.size() != images.size())
      throw InvalidArgumentError("targeted goal needs one target image per image");
    if (objectives.empty()) throw InvalidArgumentError("experiment has no objectives");
    for (const auto& o : objectives)
      if (o != "pffl" && o != "l2" && o != "linf")
        throw InvalidArgumentError("unknown objective: " + o);
    if (budget == 0) throw InvalidArgumentError("budget must be positive");
    if (checkpoints.empty()) throw InvalidArgumentError("experiment has no checkpoints");
    for (std::size_t i = 1; i < checkpoints.size(); ++i)
      if (checkpoints[i] <= checkpoints[i - 1])
        throw InvalidArgumentError("checkpoints must be strictly increasing");
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.is_object()) throw InvalidArgumentError("experiment config must be a JSON object");
    cfg.images = j.at("images").get<std::vector<std::string>>();
    cfg.target_images =
        j.value("target_images", std::vector<std::string>{});
    cfg.oracle = j.value("oracle", cfg.oracle);
    cfg.algorithm = j.value("algorithm", cfg.algorithm);
    cfg.objectives = j.value("objectives", cfg.objectives);
    cfg.goal = j.value("goal", cfg.goal);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.checkpoints = j.value("checkpoints", cfg.checkpoints);
    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    cfg.validate();
    return cfg;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["images"] = images;
    if (!target_images.empty()) j["target_images"] = target_images;
    j["oracle"] = oracle;
    j["algorithm"] = algorithm;
    j["objectives"] = objectives;
    j["goal"] = goal;
    j["budget"] = budget;
    j["checkpoints"] = checkpoints;
    j["base_seed"] = base_seed;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Experiment runner

struct ReportRow {
  std::string objective;
  std::uint64_t checkpoint_queries = 0;
  double median_ssim = 0.0;
  double median_psnr_db = 0.0;
  double median_pffl = 0.0;
  int n_images = 0;
};

struct ArmResult {
  std::string objective;
  std::vector<AttackTrace> traces;  // one per image; empty records when the run failed
  std::vector<bool> ok;
};

struct ReportTable {
  std::vector<std::uint64_t> checkpoints;
  std::vector<ReportRow> rows;    // objective-major, checkpoints ascending within
  std::vector<ArmResult> arms;    // raw traces, same objective order as config
  std::vector<std::string> warnings;
};

namespace detail {

// Lower median: element at index (n-1)/2 of the sorted values.
inline double lower_median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace detail

// Runs every (objective, image) cell of the experiment and aggregates
// per-checkpoint lower medians. Each cell gets a fresh oracle so query
// budgets never leak across runs; the per-image seed is shared across
// objectives so arms differing only in guidance weights are comparable.
inline ReportTable run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ReportTable table;
  table.checkpoints = cfg.checkpoints;

  std::vector<Image> images;
  images.reserve(cfg.images.size());
  for (const auto& spec : cfg.images) images.push_back(load_image_spec(spec));
  std::vector<Image> targets;
  if (cfg.goal == "targeted")
    for (const auto& spec : cfg.target_images) targets.push_back(load_image_spec(spec));

  for (const auto& objective : cfg.objectives) {
    ArmResult arm;
    arm.objective = objective;
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
      const Image& img = images[idx];
      const std::uint64_t seed = cfg.base_seed ^ (0x9e3779b97f4a7c15ull * (idx + 1));
      AttackTrace trace;
      bool ok = true;
      try {
        const PenaltyMap feature_m = build_penalty(img).first;
        const PenaltyMap guidance_m = objective == "pffl"
                                          ? feature_m
                                          : PenaltyMap::uniform(img.height, img.width, 1.0f);
        auto oracle = make_oracle(cfg.oracle, Shape{img.channels, img.height, img.width},
                                  cfg.budget);
        const Label y_org = oracle->predict_uncounted(img);

        AttackGoal goal = AttackGoal::untargeted(y_org);
        Image x_start(1, 1, 1);
        Rng rng(seed);
        if (cfg.goal == "targeted") {
          const Label y_t = oracle->predict_uncounted(targets[idx]);
          if (y_t == y_org)
            throw InvalidStartError("target image shares the original's label");
          goal = AttackGoal::targeted(y_t);
          x_start = targets[idx];
        } else {
          x_start = init_untargeted(*oracle, img, y_org, guidance_m,
                                    NoiseDist::Gaussian, rng);
        }

        if (cfg.algorithm == "signopt") {
          SignOptConfig sc;
          sc.seed = seed;
          sc.report_penalty = feature_m;
          if (objective == "linf") sc.ray_norm = RayNorm::MaxNorm;
          trace = run_signopt(*oracle, img, x_start, guidance_m, goal, sc, cfg.checkpoints);
        } else {
          BoundaryAttackConfig bc;
          bc.seed = seed;
          bc.report_penalty = feature_m;
          trace = run_boundary_attack(*oracle, img, x_start, guidance_m, goal, bc,
                                      cfg.checkpoints);
        }
      } catch (const Error& e) {
        ok = false;
        table.warnings.push_back("image " + std::to_string(idx) + " objective " +
                                 objective + ": " + e.what());
      }
      arm.traces.push_back(std::move(trace));
      arm.ok.push_back(ok);
    }

    for (std::size_t ci = 0; ci < cfg.checkpoints.size(); ++ci) {
      std::vector<double> ssims, psnrs, pffls;
      for (std::size_t idx = 0; idx < arm.traces.size(); ++idx) {
        if (!arm.ok[idx]) continue;
        const auto& recs = arm.traces[idx].records;
        if (ci >= recs.size()) continue;
        ssims.push_back(recs[ci].ssim);
        psnrs.push_back(recs[ci].psnr_db);
        pffls.push_back(recs[ci].pffl);
      }
      ReportRow row;
      row.objective = objective;
      row.checkpoint_queries = cfg.checkpoints[ci];
      row.median_ssim = detail::lower_median(ssims);
      row.median_psnr_db = detail::lower_median(psnrs);
      row.median_pffl = detail::lower_median(pffls);
      row.n_images = static_cast<int>(ssims.size());
      table.rows.push_back(row);
    }
    table.arms.push_back(std::move(arm));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Constrained descent and the correlation study

enum class ConstraintKind { FixPsnr, FixSsim };

struct DescentConstraint {
  ConstraintKind kind = ConstraintKind::FixPsnr;
  double value = 20.0;

  static DescentConstraint fix_psnr(double db) { return {ConstraintKind::FixPsnr, db}; }
  static DescentConstraint fix_ssim(double s) { return {ConstraintKind::FixSsim, s}; }
};

struct DescentOptions {
  int steps = 200;
  double step_size = 0.05;   // relative gradient step
  double ssim_tol = 1e-3;    // projection tolerance for FixSsim
  std::uint64_t seed = 0;
};

namespace detail {

inline double delta_mse(const std::vector<double>& delta) {
  double acc = 0.0;
  for (double d : delta) acc += d * d;
  return acc / static_cast<double>(delta.size());
}

inline Image apply_delta(const Image& x, const std::vector<double>& delta) {
  Image out = x;
  for (std::size_t i = 0; i < delta.size(); ++i)
    out.data[i] = static_cast<float>(static_cast<double>(x.data[i]) + delta[i]);
  return out;
}

inline double delta_pffl(const Image& x, const std::vector<double>& delta,
                         const PenaltyMap& m) {
  double acc = 0.0;
  const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double w = m.values[i % plane];
    acc += delta[i] * w * delta[i] * w;
  }
  return acc;
}

// Rescales delta so ssim(x, x+s*delta) lands within tol of target.
// Returns the scale, or nullopt when no bracket exists.
inline std::optional<double> ssim_scale(const Image& x, const std::vector<double>& delta,
                                        double target, double tol) {
  auto eval = [&](double s) {
    std::vector<double> scaled(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) scaled[i] = s * delta[i];
    return ssim(x, apply_delta(x, scaled));
  };
  double lo = 0.0, hi = 1.0;
  double f_hi = eval(hi);
  int grow = 0;
  while (f_hi > target && grow < 60) {
    lo = hi;
    hi *= 2.0;
    f_hi = eval(hi);
    ++grow;
  }
  if (f_hi > target) return std::nullopt;  // never dissimilar enough
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = eval(mid);
    if (std::abs(f - target) <= tol) return mid;
    if (f > target)
      lo = mid;  // still too similar, need a larger scale
    else
      hi = mid;
  }
  const double mid = 0.5 * (lo + hi);
  if (std::abs(eval(mid) - target) <= 10.0 * tol) return mid;
  return std::nullopt;
}

}  // namespace detail

struct DescentPoint {
  double pffl = 0.0;
  double ssim = 0.0;
  double psnr_db = 0.0;
};

struct DescentResult {
  Image image;
  std::vector<DescentPoint> trajectory;  // includes the start point
};

// Gradient descent on the weighted distortion of x + delta, projected after
// every step back onto the constraint surface (exact rescale for a PSNR
// constraint, bisection for an SSIM constraint). Steps that fail to lower
// the objective shrink the rate and retry; the distortion value is
// non-increasing along the returned trajectory. The perturbed image is not
// clamped: projection exactness takes priority over box membership here.
inline DescentResult projected_pffl_descent(const Image& x, const PenaltyMap& m,
                                            DescentConstraint constraint,
                                            const DescentOptions& opts = {}) {
  x.validate();
  require_penalty_shape(x, m, "constrained descent");
  if (opts.steps < 0) throw InvalidArgumentError("steps must be non-negative");
  if (!(opts.step_size > 0.0)) throw InvalidArgumentError("step size must be positive");

  const std::size_t n = x.size();
  const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
  Rng rng(opts.seed);
  std::vector<double> delta(n);
  for (auto& d : delta) d = rng.gaussian();

  // Project the start noise onto the constraint.
  if (constraint.kind == ConstraintKind::FixPsnr) {
    if (std::isinf(constraint.value)) {
      std::fill(delta.begin(), delta.end(), 0.0);
    } else {
      const double target_mse = std::pow(10.0, -constraint.value / 10.0);
      const double cur = detail::delta_mse(delta);
      if (cur <= 0.0) throw ConstraintUnattainableError("start noise has zero energy");
      const double s = std::sqrt(target_mse / cur);
      for (auto& d : delta) d *= s;
    }
  } else {
    if (!(constraint.value > 0.0 && constraint.value < 1.0))
      throw ConstraintUnattainableError("ssim target must lie in (0, 1)");
    const auto s = detail::ssim_scale(x, delta, constraint.value, opts.ssim_tol);
    if (!s)
      throw ConstraintUnattainableError("no noise scale reaches the ssim target");
    for (auto& d : delta) d *= *s;
  }

  auto point = [&](const std::vector<double>& d) {
    DescentPoint p;
    p.pffl = detail::delta_pffl(x, d, m);
    const double ms = detail::delta_mse(d);
    p.psnr_db = psnr_from_mse(ms, 1.0);
    p.ssim = ssim(x, detail::apply_delta(x, d));
    return p;
  };

  DescentResult result{detail::apply_delta(x, delta), {}};
  result.trajectory.push_back(point(delta));

  double rate = opts.step_size;
  double best = result.trajectory.front().pffl;
  const bool frozen = constraint.kind == ConstraintKind::FixPsnr &&
                      std::isinf(constraint.value);
  for (int step = 0; step < opts.steps && !frozen; ++step) {
    bool accepted = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      std::vector<double> cand(n);
      double norm_sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = m.values[i % plane];
        const double g = 2.0 * w * w * delta[i];
        cand[i] = g;
        norm_sq += g * g;
      }
      if (norm_sq <= 0.0) break;
      // Relative step: move a `rate` fraction of the current noise magnitude.
      const double mag = std::sqrt(detail::delta_mse(delta) * static_cast<double>(n));
      const double scale = rate * mag / std::sqrt(norm_sq);
      for (std::size_t i = 0; i < n; ++i) cand[i] = delta[i] - scale * cand[i];

      if (constraint.kind == ConstraintKind::FixPsnr) {
        const double target_mse = std::pow(10.0, -constraint.value / 10.0);
        const double cur = detail::delta_mse(cand);
        if (cur <= 0.0) {
          rate *= 0.5;
          continue;
        }
        const double s = std::sqrt(target_mse / cur);
        for (auto& d : cand) d *= s;
      } else {
        const auto s = detail::ssim_scale(x, cand, constraint.value, opts.ssim_tol);
        if (!s) {
          rate *= 0.5;
          continue;
        }
        for (auto& d : cand) d *= *s;
      }

      const double cand_pffl = detail::delta_pffl(x, cand, m);
      if (cand_pffl <= best) {
        delta = std::move(cand);
        best = cand_pffl;
        accepted = true;
      } else {
        rate *= 0.5;
        if (rate < 1e-12) break;
      }
    }
    result.trajectory.push_back(point(delta));
    if (!accepted) break;
  }
  result.image = detail::apply_delta(x, delta);
  return result;
}

struct CorrelationTable {
  std::vector<double> psnr_grid;                // column targets, dB
  std::vector<double> ssim_grid;                // row targets
  std::vector<std::optional<double>> cells;     // [si * psnr_grid.size() + pi]

  std::optional<double> cell(std::size_t si, std::size_t pi) const {
    return cells[si * psnr_grid.size() + pi];
  }
};

struct CorrelationOptions {
  int steps = 300;
  double step_size = 0.05;
  double ssim_window = 0.01;  // acceptance half-width around each ssim target
  std::uint64_t seed = 0;
};

// For each PSNR column, runs one constrained descent trajectory and records
// the lowest distortion value observed while the trajectory's SSIM sits
// within `ssim_window` of each row target. Cells the trajectory never
// reaches stay empty. An infinite PSNR column admits only zero noise: its
// cells are 0 for row targets within the window of 1 and empty otherwise.
inline CorrelationTable correlation_study(const Image& x, const PenaltyMap& m,
                                          const std::vector<double>& psnr_grid,
                                          const std::vector<double>& ssim_grid,
                                          const CorrelationOptions& opts = {}) {
  if (psnr_grid.empty() || ssim_grid.empty())
    throw InvalidArgumentError("correlation grids must be non-empty");
  CorrelationTable table;
  table.psnr_grid = psnr_grid;
  table.ssim_grid = ssim_grid;
  table.cells.assign(psnr_grid.size() * ssim_grid.size(), std::nullopt);

  for (std::size_t pi = 0; pi < psnr_grid.size(); ++pi) {
    const double target_psnr = psnr_grid[pi];
    if (std::isinf(target_psnr)) {
      for (std::size_t si = 0; si < ssim_grid.size(); ++si)
        if (std::abs(ssim_grid[si] - 1.0) <= opts.ssim_window)
          table.cells[si * psnr_grid.size() + pi] = 0.0;
      continue;
    }
    DescentOptions dopts;
    dopts.steps = opts.steps;
    dopts.step_size = opts.step_size;
    dopts.seed = opts.seed + pi;
    const auto result =
        projected_pffl_descent(x, m, DescentConstraint::fix_psnr(target_psnr), dopts);
    for (const auto& p : result.trajectory) {
      for (std::size_t si = 0; si < ssim_grid.size(); ++si) {
        if (std::abs(p.ssim - ssim_grid[si]) > opts.ssim_window) continue;
        auto& cell = table.cells[si * psnr_grid.size() + pi];
        if (!cell || p.pffl < *cell) cell = p.pffl;
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Report emission

namespace detail {

inline std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// Minimal line-chart SVG: one panel per metric, one polyline per objective.
inline std::string render_report_svg(const ReportTable& table) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::vector<std::string> objectives;
  for (const auto& row : table.rows)
    if (std::find(objectives.begin(), objectives.end(), row.objective) == objectives.end())
      objectives.push_back(row.objective);

  struct Panel {
    const char* title;
    double ReportRow::*field;
  };
  const Panel panels[] = {{"median SSIM", &ReportRow::median_ssim},
                          {"median PSNR (dB)", &ReportRow::median_psnr_db}};

  const double pw = 420.0, ph = 300.0, margin = 50.0;
  const double width = 2 * pw + 3 * margin, height = ph + 2 * margin + 40.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " "
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  for (int p = 0; p < 2; ++p) {
    const double x0 = margin + p * (pw + margin);
    const double y0 = margin;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& row : table.rows) {
      const double v = row.*(panels[p].field);
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double cp_lo = static_cast<double>(table.checkpoints.front());
    const double cp_hi = static_cast<double>(table.checkpoints.back());
    auto sx = [&](double q) {
      return cp_hi > cp_lo ? x0 + (q - cp_lo) / (cp_hi - cp_lo) * pw : x0 + pw / 2;
    };
    auto sy = [&](double v) { return y0 + ph - (v - lo) / (hi - lo) * ph; };

    svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw
        << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 12
        << "\" text-anchor=\"middle\">" << panels[p].title << "</text>\n";
    svg << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 + ph + 32
        << "\" text-anchor=\"middle\">queries</text>\n";
    svg << "<text x=\"" << x0 - 8 << "\" y=\"" << sy(lo)
        << "\" text-anchor=\"end\">" << format_g6(lo) << "</text>\n";
    svg << "<text x=\"" << x0 - 8 << "\" y=\"" << sy(hi) + 10
        << "\" text-anchor=\"end\">" << format_g6(hi) << "</text>\n";
    for (std::uint64_t cp : table.checkpoints)
      svg << "<text x=\"" << sx(static_cast<double>(cp)) << "\" y=\"" << y0 + ph + 16
          << "\" text-anchor=\"middle\">" << cp << "</text>\n";

    for (std::size_t oi = 0; oi < objectives.size(); ++oi) {
      std::ostringstream pts;
      for (const auto& row : table.rows) {
        if (row.objective != objectives[oi]) continue;
        const double v = row.*(panels[p].field);
        if (!std::isfinite(v)) continue;
        pts << sx(static_cast<double>(row.checkpoint_queries)) << "," << sy(v) << " ";
      }
      svg << "<polyline fill=\"none\" stroke=\"" << kColors[oi % 6]
          << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
    }
  }
  for (std::size_t oi = 0; oi < objectives.size(); ++oi) {
    const double lx = margin + oi * 120.0, ly = height - 16.0;
    svg << "<rect x=\"" << lx << "\" y=\"" << ly - 10 << "\" width=\"18\" height=\"4\" fill=\""
        << kColors[oi % 6] << "\"/>\n";
    svg << "<text x=\"" << lx + 24 << "\" y=\"" << ly - 4 << "\">" << objectives[oi]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace detail

// Writes report.csv and report.svg into `dir` (created if missing).
inline void emit_report(const ReportTable& table, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "objective,checkpoint_queries,median_ssim,median_psnr_db,median_pffl,n_images\n";
  for (const auto& row : table.rows)
    csv << row.objective << ',' << row.checkpoint_queries << ','
        << detail::format_g6(row.median_ssim) << ','
        << detail::format_g6(row.median_psnr_db) << ','
        << detail::format_g6(row.median_pffl) << ',' << row.n_images << '\n';
  detail::write_text_file(dir + "/report.csv", csv.str());
  detail::write_text_file(dir + "/report.svg", detail::render_report_svg(table));
}

// Writes correlation.csv into `dir`: one row per (psnr, ssim) grid cell,
// empty value field for cells the study never reached.
inline void emit_report(const CorrelationTable& table, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "target_psnr_db,target_ssim,achieved_pffl\n";
  for (std::size_t pi = 0; pi < table.psnr_grid.size(); ++pi)
    for (std::size_t si = 0; si < table.ssim_grid.size(); ++si) {
      const auto& cell = table.cells[si * table.psnr_grid.size() + pi];
      csv << detail::format_g6(table.psnr_grid[pi]) << ','
          << detail::format_g6(table.ssim_grid[si]) << ','
          << (cell ? detail::format_g6(*cell) : "") << '\n';
    }
  detail::write_text_file(dir + "/correlation.csv", csv.str());
}

// Parses a JSON experiment config, runs it, writes reports into out_dir.
inline ReportTable run_bench(const std::string& config_path, const std::string& out_dir) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw FileNotFoundError("config not found: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError(std::string("config parse error: ") + e.what());
  }
  const auto cfg = ExperimentConfig::from_json(j);
  auto table = run_experiment(cfg);
  emit_report(table, out_dir);
  return table;
}

}  // namespace pffl
