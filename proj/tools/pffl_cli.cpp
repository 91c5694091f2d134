// Command line front end: feature classification, distortion reports,
// hard-label attacks, an oracle server, batch benchmarks, and the
// constrained-descent correlation study.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pffl/pffl.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_stop_signal(int) { g_stop.store(true); }

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw pffl::InvalidArgumentError("empty list: " + s);
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw pffl::InvalidArgumentError("empty list: " + s);
  return out;
}

pffl::Shape parse_shape(const std::string& s) {
  const auto dims = parse_u64_list(s);
  if (dims.size() != 3)
    throw pffl::InvalidArgumentError("shape must be c,h,w, got: " + s);
  return {static_cast<int>(dims[0]), static_cast<int>(dims[1]),
          static_cast<int>(dims[2])};
}

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void save_image_any(const pffl::Image& img, const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    pffl::save_png(img, path);
  else
    pffl::write_tensor(img, path);
}

void print_trace(const pffl::AttackTrace& trace, std::ostream& os) {
  os << "queries,ledger_queries,lambda,pffl,mse,psnr_db,ssim\n";
  for (const auto& r : trace.records)
    os << r.queries << ',' << r.ledger_queries << ',' << g6(r.lambda) << ','
       << g6(r.pffl) << ',' << g6(r.mse) << ',' << g6(r.psnr_db) << ','
       << g6(r.ssim) << '\n';
}

int run_classify(const std::string& input, const std::string& output,
                 const std::string& penalty_output, int harmonics, double quantile,
                 double absolute_sigma, int window_radius, double density_threshold) {
  const pffl::Image img = pffl::load_image_spec(input);
  pffl::FaConfig fa;
  fa.n_harmonics = harmonics;
  fa.threshold = absolute_sigma >= 0.0 ? pffl::ThresholdPolicy::absolute(absolute_sigma)
                                       : pffl::ThresholdPolicy::quantile(quantile);
  pffl::SparsityConfig sp;
  sp.window_radius = window_radius;
  sp.density_threshold = density_threshold;
  const auto [m, labels] = pffl::build_penalty(img, fa, sp);

  std::size_t counts[3] = {0, 0, 0};
  for (const auto l : labels.labels) ++counts[static_cast<int>(l)];
  const double total = static_cast<double>(labels.labels.size());
  std::cout << "smooth " << counts[0] << " (" << g6(100.0 * counts[0] / total)
            << "%)\nedge " << counts[1] << " (" << g6(100.0 * counts[1] / total)
            << "%)\ntexture " << counts[2] << " (" << g6(100.0 * counts[2] / total)
            << "%)\n";

  if (!output.empty()) {
    pffl::Image vis(3, img.height, img.width);
    for (int i = 0; i < img.height; ++i)
      for (int j = 0; j < img.width; ++j) {
        switch (labels.at(i, j)) {
          case pffl::FeatureLabel::Smooth:
            vis.at(0, i, j) = vis.at(1, i, j) = vis.at(2, i, j) = 0.15f;
            break;
          case pffl::FeatureLabel::Edge:
            vis.at(0, i, j) = 0.9f;
            break;
          case pffl::FeatureLabel::Texture:
            vis.at(1, i, j) = 0.75f;
            break;
        }
      }
    save_image_any(vis, output);
    std::cout << "label map written to " << output << "\n";
  }
  if (!penalty_output.empty()) {
    pffl::Image pm(1, m.height, m.width);
    std::copy(m.values.begin(), m.values.end(), pm.data.begin());
    pffl::write_tensor(pm, penalty_output);
    std::cout << "penalty map written to " << penalty_output << "\n";
  }
  return 0;
}

int run_evaluate(const std::string& original, const std::string& candidate,
                 const std::string& penalty_path) {
  const pffl::Image a = pffl::load_image_spec(original);
  const pffl::Image b = pffl::load_image_spec(candidate);
  pffl::PenaltyMap m(a.height, a.width, 1.0f);
  if (!penalty_path.empty()) {
    const pffl::Image pm = pffl::read_tensor(penalty_path);
    if (pm.channels != 1 || pm.height != a.height || pm.width != a.width)
      throw pffl::ShapeMismatchError("penalty tensor must be 1x" +
                                     std::to_string(a.height) + "x" +
                                     std::to_string(a.width));
    std::copy(pm.data.begin(), pm.data.end(), m.values.begin());
  } else {
    m = pffl::build_penalty(a).first;
  }
  const pffl::MetricReport r = pffl::evaluate_report(a, b, &m);
  std::cout << "pffl " << g6(r.pffl) << "\nmse " << g6(r.mse) << "\npsnr_db "
            << g6(r.psnr_db) << "\nssim " << g6(r.ssim) << "\n";
  return 0;
}

int run_attack(const std::string& image, const std::string& oracle_spec,
               const std::string& algorithm, const std::string& objective,
               const std::string& goal, const std::string& target,
               const std::string& start, std::uint64_t budget,
               const std::string& checkpoints_csv, std::uint64_t seed,
               const std::string& output, const std::string& trace_path) {
  const pffl::Image img = pffl::load_image_spec(image);
  const pffl::Shape shape{img.channels, img.height, img.width};
  auto oracle = pffl::make_oracle(oracle_spec, shape, budget);

  const pffl::PenaltyMap feature_m = pffl::build_penalty(img).first;
  const pffl::PenaltyMap guidance_m =
      objective == "pffl" ? feature_m
                          : pffl::PenaltyMap::uniform(img.height, img.width, 1.0f);

  std::vector<std::uint64_t> checkpoints = {budget};
  if (!checkpoints_csv.empty()) checkpoints = parse_u64_list(checkpoints_csv);

  const pffl::Label y_org = oracle->predict_uncounted(img);
  pffl::AttackGoal g = pffl::AttackGoal::untargeted(y_org);
  pffl::Image x_start(1, 1, 1);
  pffl::Rng rng(seed);
  if (goal == "targeted") {
    if (target.empty())
      throw pffl::InvalidArgumentError("targeted attacks need --target");
    const pffl::Image t = pffl::load_image_spec(target);
    g = pffl::AttackGoal::targeted(oracle->predict_uncounted(t));
    x_start = t;
  } else if (!start.empty()) {
    x_start = pffl::load_image_spec(start);
  } else {
    x_start = pffl::init_untargeted(*oracle, img, y_org, guidance_m,
                                    pffl::NoiseDist::Gaussian, rng);
  }

  pffl::AttackTrace trace;
  if (algorithm == "signopt") {
    pffl::SignOptConfig cfg;
    cfg.seed = seed;
    cfg.report_penalty = feature_m;
    if (objective == "linf") cfg.ray_norm = pffl::RayNorm::MaxNorm;
    trace = pffl::run_signopt(*oracle, img, x_start, guidance_m, g, cfg, checkpoints);
  } else if (algorithm == "boundary") {
    pffl::BoundaryAttackConfig cfg;
    cfg.seed = seed;
    cfg.report_penalty = feature_m;
    trace = pffl::run_boundary_attack(*oracle, img, x_start, guidance_m, g, cfg,
                                      checkpoints);
  } else {
    throw pffl::InvalidArgumentError("unknown algorithm: " + algorithm);
  }

  print_trace(trace, std::cout);
  if (!trace_path.empty()) {
    std::ofstream out(trace_path, std::ios::binary);
    if (!out) throw pffl::IoError("cannot open " + trace_path);
    print_trace(trace, out);
  }
  std::cout << "total_queries " << trace.total_queries << "\nbudget_exhausted "
            << (trace.budget_exhausted ? "yes" : "no") << "\nfinal_lambda "
            << g6(trace.final_lambda) << "\n";
  if (!output.empty()) {
    save_image_any(trace.final_image, output);
    std::cout << "adversarial image written to " << output << "\n";
  }
  return 0;
}

int run_serve(const std::string& oracle_spec, const std::string& bind,
              const std::string& shape_csv, std::int64_t budget) {
  const pffl::Shape shape = parse_shape(shape_csv);
  std::optional<std::uint64_t> b;
  if (budget >= 0) b = static_cast<std::uint64_t>(budget);
  auto oracle = pffl::make_oracle(oracle_spec, shape, b);
  auto svc = pffl::serve(*oracle, bind);
  std::cout << "listening on " << svc->url() << " (shape " << shape.str() << ")"
            << std::endl;

  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  while (!g_stop.load())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cout << "stopping after " << oracle->query_count() << " queries"
            << std::endl;
  svc->stop();
  return 0;
}

int run_bench_cmd(const std::string& config, const std::string& out_dir) {
  const pffl::ReportTable table = pffl::run_bench(config, out_dir);
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << out_dir << "/report.csv and report.svg ("
            << table.rows.size() << " rows)\n";
  return 0;
}

int run_correlate(const std::string& image, const std::string& psnr_csv,
                  const std::string& ssim_csv, int steps, std::uint64_t seed,
                  const std::string& out_dir) {
  const pffl::Image img = pffl::load_image_spec(image);
  const pffl::PenaltyMap m = pffl::build_penalty(img).first;
  pffl::CorrelationOptions opts;
  opts.steps = steps;
  opts.seed = seed;
  const auto table = pffl::correlation_study(img, m, parse_double_list(psnr_csv),
                                             parse_double_list(ssim_csv), opts);
  pffl::emit_report(table, out_dir);
  std::size_t filled = 0;
  for (const auto& c : table.cells) filled += c.has_value() ? 1 : 0;
  std::cout << "wrote " << out_dir << "/correlation.csv (" << filled << "/"
            << table.cells.size() << " cells)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perceptual feature fidelity toolkit"};
  app.require_subcommand(1);

  // classify-features
  std::string cf_input, cf_output, cf_penalty_output;
  int cf_harmonics = 2, cf_window_radius = 0;
  double cf_quantile = 0.6, cf_absolute = -1.0, cf_density = 0.4;
  auto* classify = app.add_subcommand("classify-features",
                                      "label pixels smooth/edge/texture");
  classify->add_option("--input", cf_input, "image spec")->required();
  classify->add_option("--output", cf_output, "label visualization (.png/.pft)");
  classify->add_option("--penalty-output", cf_penalty_output,
                       "penalty map tensor output");
  classify->add_option("--harmonics", cf_harmonics, "orientation filter order");
  classify->add_option("--quantile", cf_quantile, "response threshold quantile");
  classify->add_option("--absolute-sigma", cf_absolute,
                       "absolute response threshold (overrides quantile)");
  classify->add_option("--window-radius", cf_window_radius,
                       "sparsity window radius (0 = width/10)");
  classify->add_option("--density-threshold", cf_density,
                       "edge/texture density split");

  // evaluate
  std::string ev_original, ev_candidate, ev_penalty;
  auto* evaluate = app.add_subcommand("evaluate", "distortion report");
  evaluate->add_option("--original", ev_original, "reference image spec")->required();
  evaluate->add_option("--candidate", ev_candidate, "distorted image spec")->required();
  evaluate->add_option("--penalty", ev_penalty,
                       "penalty tensor (default: built from original)");

  // attack
  std::string at_image, at_oracle, at_algorithm = "signopt", at_objective = "pffl";
  std::string at_goal = "untargeted", at_target, at_start, at_checkpoints;
  std::string at_output, at_trace;
  std::uint64_t at_budget = 3200, at_seed = 0;
  auto* attack = app.add_subcommand("attack", "hard-label attack");
  attack->add_option("--image", at_image, "original image spec")->required();
  attack->add_option("--oracle", at_oracle, "oracle spec")->required();
  attack->add_option("--algorithm", at_algorithm, "signopt|boundary");
  attack->add_option("--objective", at_objective, "pffl|l2|linf");
  attack->add_option("--goal", at_goal, "untargeted|targeted");
  attack->add_option("--target", at_target, "target image spec (targeted goal)");
  attack->add_option("--start", at_start, "start image spec (optional)");
  attack->add_option("--budget", at_budget, "query budget");
  attack->add_option("--checkpoints", at_checkpoints, "comma list of checkpoints");
  attack->add_option("--seed", at_seed, "random seed");
  attack->add_option("--output", at_output, "adversarial image output");
  attack->add_option("--trace", at_trace, "trace csv output");

  // serve-oracle
  std::string so_oracle, so_bind = "127.0.0.1:8787", so_shape = "1,32,32";
  std::int64_t so_budget = -1;
  auto* serve_cmd = app.add_subcommand("serve-oracle", "serve an oracle over http");
  serve_cmd->add_option("--oracle", so_oracle, "oracle spec")->required();
  serve_cmd->add_option("--bind", so_bind, "host:port (port 0 = ephemeral)");
  serve_cmd->add_option("--shape", so_shape, "input shape c,h,w");
  serve_cmd->add_option("--budget", so_budget, "server-side budget (-1 = none)");

  // bench
  std::string be_config, be_out = "bench_out";
  auto* bench = app.add_subcommand("bench", "run a batch experiment config");
  bench->add_option("--config", be_config, "experiment json")->required();
  bench->add_option("--out-dir", be_out, "report directory");

  // correlate
  std::string co_image, co_psnr = "20,17,14,11,8", co_ssim = "0.8,0.65,0.5,0.35";
  std::string co_out = "correlation_out";
  int co_steps = 300;
  std::uint64_t co_seed = 0;
  auto* correlate = app.add_subcommand("correlate",
                                       "distortion vs psnr/ssim study");
  correlate->add_option("--image", co_image, "image spec")->required();
  correlate->add_option("--psnr", co_psnr, "psnr targets (dB, comma list)");
  correlate->add_option("--ssim", co_ssim, "ssim targets (comma list)");
  correlate->add_option("--steps", co_steps, "descent steps per column");
  correlate->add_option("--seed", co_seed, "random seed");
  correlate->add_option("--out-dir", co_out, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (classify->parsed())
      return run_classify(cf_input, cf_output, cf_penalty_output, cf_harmonics,
                          cf_quantile, cf_absolute, cf_window_radius, cf_density);
    if (evaluate->parsed()) return run_evaluate(ev_original, ev_candidate, ev_penalty);
    if (attack->parsed())
      return run_attack(at_image, at_oracle, at_algorithm, at_objective, at_goal,
                        at_target, at_start, at_budget, at_checkpoints, at_seed,
                        at_output, at_trace);
    if (serve_cmd->parsed()) return run_serve(so_oracle, so_bind, so_shape, so_budget);
    if (bench->parsed()) return run_bench_cmd(be_config, be_out);
    if (correlate->parsed())
      return run_correlate(co_image, co_psnr, co_ssim, co_steps, co_seed, co_out);
  } catch (const pffl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
