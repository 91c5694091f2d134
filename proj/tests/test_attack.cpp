#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "pffl/attack.hpp"
#include "pffl/feature_map.hpp"
#include "pffl/oracle.hpp"
#include "pffl/rng.hpp"

using namespace pffl;

namespace {

// Halfspace test bed: margin w.x + b crosses zero along any ray with
// w . theta of the opposite sign, at a lambda we can compute exactly.
struct HalfspaceBed {
  Shape shape;
  LinearOracle oracle;
  Image x_org;
  Label y0;
  double margin0;

  static HalfspaceBed make(int side, std::uint64_t seed, double margin_target) {
    const Shape s{1, side, side};
    auto w = LinearOracle::random(s, seed).weights();
    // Re-bias so the constant 0.5 image sits margin_target from the boundary.
    double dot = 0.0;
    for (float v : w) dot += 0.5 * v;
    const float bias = static_cast<float>(margin_target - dot);
    LinearOracle oracle(s, w, bias);
    Image x(1, side, side);
    for (auto& v : x.data) v = 0.5f;
    const Label y = oracle.predict_uncounted(x);
    const double m0 = oracle.margin(x);
    return HalfspaceBed{s, std::move(oracle), std::move(x), y, m0};
  }
};

// Effectively unconstrained domain, for tests that assert closed-form ray
// distances; clamping to the unit box would move the crossing.
Box wide_box(int channels) {
  Box b;
  b.lo.assign(static_cast<std::size_t>(channels), -1e6f);
  b.hi.assign(static_cast<std::size_t>(channels), 1e6f);
  return b;
}

PenaltyMap random_penalty(int h, int w, std::uint64_t seed) {
  PenaltyMap m(h, w);
  Rng rng(seed);
  const float vals[3] = {1.0f, 0.3f, 0.5f};
  for (auto& v : m.values) v = vals[rng.index(3)];
  return m;
}

// || theta (x) M ||, defined here independently of the library helper.
double weighted_norm_dir(const Direction& d, const PenaltyMap& m) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double v = d.v[k] * m.values[k % m.values.size()];
    acc += v * v;
  }
  return std::sqrt(acc);
}

double closed_form_lambda(const LinearOracle& oracle, const Image& x_org,
                          const Direction& theta, const PenaltyMap& m) {
  const double n = weighted_norm_dir(theta, m);
  double s = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    s += static_cast<double>(oracle.weights()[k]) * theta.v[k];
  return -oracle.margin(x_org) * n / s;
}

// Analytic gradient of the ray distance for the halfspace:
// g(theta) = A n / s with A = -(w.x+b), n = ||theta (x) M||, s = w.theta.
Direction analytic_gradient(const LinearOracle& oracle, const Image& x_org,
                            const Direction& theta, const PenaltyMap& m) {
  const double a = -oracle.margin(x_org);
  const double n = weighted_norm_dir(theta, m);
  double s = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    s += static_cast<double>(oracle.weights()[k]) * theta.v[k];
  Direction g(theta.channels, theta.height, theta.width);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double mm = m.values[k % m.values.size()];
    g.v[k] = a * ((mm * mm * theta.v[k] / n) * s -
                  n * static_cast<double>(oracle.weights()[k])) /
             (s * s);
  }
  return g;
}

double cosine(const Direction& a, const Direction& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a.v[k] * b.v[k];
    aa += a.v[k] * a.v[k];
    bb += b.v[k] * b.v[k];
  }
  return ab / std::sqrt(aa * bb);
}

Direction toward_boundary(const HalfspaceBed& bed, Rng& rng) {
  // Random direction, flipped so it points across the boundary.
  Direction theta(1, bed.shape.height, bed.shape.width);
  for (auto& v : theta.v) v = rng.gaussian();
  double s = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    s += static_cast<double>(bed.oracle.weights()[k]) * theta.v[k];
  if (s * bed.margin0 > 0.0)
    for (auto& v : theta.v) v = -v;
  return theta;
}

}  // namespace

TEST_CASE("ray distance matches the halfspace closed form", "[attack]") {
  auto bed = HalfspaceBed::make(8, 1, 0.02);
  const PenaltyMap m = random_penalty(8, 8, 2);
  const Box box = wide_box(1);
  const AttackGoal goal = AttackGoal::untargeted(bed.y0);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Direction theta = toward_boundary(bed, rng);
    const double expect = closed_form_lambda(bed.oracle, bed.x_org, theta, m);
    REQUIRE(expect > 0.0);
    const auto d = boundary_distance(bed.oracle, bed.x_org, theta, m, goal, 1e-6, box);
    REQUIRE(d.lambda == Catch::Approx(expect).margin(2e-6));
    REQUIRE(d.queries > 0);

    // Warm starts converge to the same answer.
    const auto warm = boundary_distance(bed.oracle, bed.x_org, theta, m, goal, 1e-6,
                                        box, RayNorm::WeightedL2, d.lambda * 1.7);
    REQUIRE(warm.lambda == Catch::Approx(expect).margin(2e-6));
  }
}

TEST_CASE("rays that never cross the boundary are reported", "[attack]") {
  auto bed = HalfspaceBed::make(8, 4, 0.02);
  const PenaltyMap m(8, 8, 1.0f);
  Rng rng(5);
  Direction away = toward_boundary(bed, rng);
  for (auto& v : away.v) v = -v;  // now points away from the boundary
  REQUIRE_THROWS_AS(boundary_distance(bed.oracle, bed.x_org, away, m,
                                      AttackGoal::untargeted(bed.y0), 1e-4,
                                      Box::unit(1)),
                    NotAdversarialDirectionError);
}

TEST_CASE("sign gradient aligns with the analytic gradient", "[attack]") {
  auto bed = HalfspaceBed::make(8, 6, 0.02);
  const PenaltyMap m = random_penalty(8, 8, 7);
  const Box box = wide_box(1);
  const AttackGoal goal = AttackGoal::untargeted(bed.y0);
  SignOptConfig cfg;
  cfg.probes = 50;
  Rng dir_rng(8);
  int positive = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const Direction theta = toward_boundary(bed, dir_rng);
    const auto d = boundary_distance(bed.oracle, bed.x_org, theta, m, goal, 1e-6, box);
    Rng rng(90 + t);
    const auto est = estimate_sign_gradient(bed.oracle, bed.x_org, theta, m, goal,
                                            d.lambda, cfg.epsilon, cfg, rng, box);
    REQUIRE(est.queries == 50);
    const Direction ref = analytic_gradient(bed.oracle, bed.x_org, theta, m);
    if (cosine(est.grad, ref) > 0.0) ++positive;
  }
  REQUIRE(positive >= 17);
}

TEST_CASE("line search accepts only strict improvements", "[attack]") {
  auto bed = HalfspaceBed::make(8, 10, 0.02);
  const PenaltyMap m = random_penalty(8, 8, 11);
  const Box box = Box::unit(1);
  const AttackGoal goal = AttackGoal::untargeted(bed.y0);
  SignOptConfig cfg;
  Rng rng(12);
  const Direction theta = toward_boundary(bed, rng);
  const auto d0 = boundary_distance(bed.oracle, bed.x_org, theta, m, goal, 1e-6, box);
  Rng prng(13);
  const auto est = estimate_sign_gradient(bed.oracle, bed.x_org, theta, m, goal,
                                          d0.lambda, cfg.epsilon, cfg, prng, box);
  const auto ls = line_search_step(bed.oracle, bed.x_org, theta, m, goal, est.grad,
                                   d0.lambda, std::nullopt, cfg, box);
  REQUIRE(ls.accepted);
  REQUIRE(ls.g < d0.lambda);
  // The measured distance at the accepted direction is reproducible.
  const auto check = boundary_distance(bed.oracle, bed.x_org, ls.theta, m, goal,
                                       1e-6, box);
  REQUIRE(check.lambda == Catch::Approx(ls.g).margin(5e-4));
}

TEST_CASE("orthogonal candidates keep the weighted distance", "[attack]") {
  Rng rng(14);
  for (int t = 0; t < 100; ++t) {
    const int side = 6 + static_cast<int>(rng.index(4));
    Image x_org(1, side, side), x_cur(1, side, side);
    for (auto& v : x_org.data) v = static_cast<float>(rng.uniform());
    for (auto& v : x_cur.data) v = static_cast<float>(rng.uniform());
    const PenaltyMap m = random_penalty(side, side, 1000 + t);
    Direction eta(1, side, side);
    for (auto& v : eta.v) v = rng.gaussian();
    const double gamma = std::exp(rng.uniform(-4.0, 1.0));
    const Image cand = ba_orthogonal_step(x_org, x_cur, m, eta, gamma, true);
    const double before = image_distance(x_cur, x_org, m);
    const double after = image_distance(cand, x_org, m);
    REQUIRE(after == Catch::Approx(before).epsilon(1e-6));
  }
}

TEST_CASE("plain orthogonalization matches weighted under identity penalty", "[attack]") {
  Rng rng(15);
  Image x_org(1, 8, 8), x_cur(1, 8, 8);
  for (auto& v : x_org.data) v = static_cast<float>(rng.uniform());
  for (auto& v : x_cur.data) v = static_cast<float>(rng.uniform());
  const PenaltyMap ones(8, 8, 1.0f);
  Direction eta(1, 8, 8);
  for (auto& v : eta.v) v = rng.gaussian();
  const Image a = ba_orthogonal_step(x_org, x_cur, ones, eta, 0.05, true);
  const Image b = ba_orthogonal_step(x_org, x_cur, ones, eta, 0.05, false);
  for (std::size_t k = 0; k < a.size(); ++k)
    REQUIRE(a.data[k] == Catch::Approx(b.data[k]).margin(1e-6));
}

TEST_CASE("source step contracts for every admissible rate", "[attack]") {
  Rng rng(16);
  Image x_org(1, 8, 8), x_cur(1, 8, 8);
  for (auto& v : x_org.data) v = static_cast<float>(rng.uniform());
  for (auto& v : x_cur.data) v = static_cast<float>(rng.uniform());
  const PenaltyMap m = random_penalty(8, 8, 17);
  const double cap = 1.0 / m.max_value();
  const double before = image_distance(x_cur, x_org, m);
  for (double beta : {1e-4, 0.1, 0.5, cap}) {
    const Image next = ba_source_step(x_org, x_cur, m, beta);
    REQUIRE(image_distance(next, x_org, m) < before);
  }
  REQUIRE_THROWS_AS(ba_source_step(x_org, x_cur, m, 0.0), InvalidArgumentError);
  REQUIRE_THROWS_AS(ba_source_step(x_org, x_cur, m, cap * 1.01), InvalidArgumentError);
  REQUIRE_THROWS_AS(ba_source_step(x_org, x_cur, m, -0.1), InvalidArgumentError);
}

TEST_CASE("untargeted initialization finds an adversarial start", "[attack]") {
  auto bed = HalfspaceBed::make(8, 18, 0.02);
  const PenaltyMap m = random_penalty(8, 8, 19);
  Rng rng(20);
  const Image start = init_untargeted(bed.oracle, bed.x_org, bed.y0, m,
                                      NoiseDist::Gaussian, rng);
  REQUIRE(bed.oracle.predict_uncounted(start) != bed.y0);
  REQUIRE(bed.oracle.query_count() >= 1);
  for (float v : start.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("initialization gives up against a constant oracle", "[attack]") {
  const Shape s{1, 8, 8};
  LinearOracle stubborn(s, std::vector<float>(64, 0.0f), 1.0f);  // always label 1
  Image x(1, 8, 8);
  const PenaltyMap m(8, 8, 1.0f);
  Rng rng(21);
  REQUIRE_THROWS_AS(init_untargeted(stubborn, x, 1, m, NoiseDist::Gaussian, rng, 10),
                    InitFailureError);
  REQUIRE(stubborn.query_count() == 10);
}

TEST_CASE("descent trace accounts for every query", "[attack]") {
  auto bed = HalfspaceBed::make(8, 22, 0.05);
  Rng rng(23);
  const PenaltyMap m = random_penalty(8, 8, 24);
  const Image start = init_untargeted(bed.oracle, bed.x_org, bed.y0, m,
                                      NoiseDist::Gaussian, rng);
  const std::uint64_t setup = bed.oracle.query_count();

  SignOptConfig cfg;
  cfg.seed = 25;
  const std::vector<std::uint64_t> cps = {50, 100, 150, 200};
  auto budgeted = LinearOracle(bed.shape, bed.oracle.weights(), bed.oracle.bias(),
                               200);
  const auto trace = run_signopt(budgeted, bed.x_org, start, m,
                                 AttackGoal::untargeted(bed.y0), cfg, cps);
  (void)setup;
  REQUIRE(trace.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(trace.records[i].queries == cps[i]);
    REQUIRE(trace.records[i].ledger_queries >= cps[i]);
  }
  REQUIRE(trace.budget_exhausted);
  REQUIRE(trace.total_queries == budgeted.query_count());
  REQUIRE(trace.records.back().lambda <= trace.records.front().lambda + 1e-12);
  REQUIRE(budgeted.predict_uncounted(trace.final_image) != bed.y0);
}

TEST_CASE("early termination fills the remaining checkpoints", "[attack]") {
  auto bed = HalfspaceBed::make(8, 26, 0.05);
  Rng rng(27);
  const PenaltyMap m(8, 8, 1.0f);
  const Image start = init_untargeted(bed.oracle, bed.x_org, bed.y0, m,
                                      NoiseDist::Gaussian, rng);
  auto budgeted = LinearOracle(bed.shape, bed.oracle.weights(), bed.oracle.bias(), 80);
  SignOptConfig cfg;
  const auto trace = run_signopt(budgeted, bed.x_org, start, m,
                                 AttackGoal::untargeted(bed.y0), cfg, {50, 5000});
  REQUIRE(trace.records.size() == 2);
  REQUIRE(trace.records[1].queries == 5000);
  REQUIRE(trace.records[1].ledger_queries <= 80);
  REQUIRE(trace.budget_exhausted);
}

TEST_CASE("invalid starts are rejected up front", "[attack]") {
  auto bed = HalfspaceBed::make(8, 28, 0.05);
  const PenaltyMap m(8, 8, 1.0f);
  SignOptConfig cfg;
  REQUIRE_THROWS_AS(run_signopt(bed.oracle, bed.x_org, bed.x_org, m,
                                AttackGoal::untargeted(bed.y0), cfg),
                    InvalidStartError);
  // A start that still classifies as the original label is not adversarial.
  Image nudged = bed.x_org;
  nudged.data[0] += 1e-4f;
  REQUIRE(bed.oracle.predict_uncounted(nudged) == bed.y0);
  REQUIRE_THROWS_AS(run_signopt(bed.oracle, bed.x_org, nudged, m,
                                AttackGoal::untargeted(bed.y0), cfg),
                    InvalidStartError);
  // Claiming the wrong original label fails the first validation query.
  Rng rng(29);
  const Image start = init_untargeted(bed.oracle, bed.x_org, bed.y0, m,
                                      NoiseDist::Gaussian, rng);
  REQUIRE_THROWS_AS(run_signopt(bed.oracle, bed.x_org, start, m,
                                AttackGoal::untargeted(1 - bed.y0), cfg),
                    InvalidStartError);
}

TEST_CASE("random walk trace accounts for every query", "[attack]") {
  auto bed = HalfspaceBed::make(8, 30, 0.05);
  const PenaltyMap m = random_penalty(8, 8, 32);
  // Deterministic adversarial start: reflect x_org across the boundary plane.
  Image start = bed.x_org;
  double wn2 = 0.0;
  for (float v : bed.oracle.weights()) wn2 += static_cast<double>(v) * v;
  for (std::size_t k = 0; k < start.data.size(); ++k)
    start.data[k] -= static_cast<float>(2.0 * bed.margin0 *
                                        bed.oracle.weights()[k] / wn2);
  REQUIRE(bed.oracle.predict_uncounted(start) != bed.y0);
  auto budgeted = LinearOracle(bed.shape, bed.oracle.weights(), bed.oracle.bias(),
                               400);
  BoundaryAttackConfig cfg;
  cfg.seed = 33;
  const std::vector<std::uint64_t> cps = {100, 200, 300, 400};
  const auto trace = run_boundary_attack(budgeted, bed.x_org, start, m,
                                         AttackGoal::untargeted(bed.y0), cfg, cps);
  REQUIRE(trace.records.size() == 4);
  REQUIRE(trace.total_queries == budgeted.query_count());
  for (std::size_t i = 1; i < trace.records.size(); ++i)
    REQUIRE(trace.records[i].lambda <= trace.records[i - 1].lambda + 1e-9);
  REQUIRE(budgeted.predict_uncounted(trace.final_image) != bed.y0);
  REQUIRE(trace.budget_exhausted);
}

TEST_CASE("identical seeds reproduce attack traces bit for bit", "[attack]") {
  auto bed = HalfspaceBed::make(8, 34, 0.05);
  const PenaltyMap m = random_penalty(8, 8, 35);
  Rng rng_a(36);
  const Image start = init_untargeted(bed.oracle, bed.x_org, bed.y0, m,
                                      NoiseDist::Gaussian, rng_a);
  SignOptConfig cfg;
  cfg.seed = 37;
  auto run_once = [&] {
    LinearOracle fresh(bed.shape, bed.oracle.weights(), bed.oracle.bias(), 300);
    return run_signopt(fresh, bed.x_org, start, m, AttackGoal::untargeted(bed.y0),
                       cfg, {100, 200, 300});
  };
  const auto a = run_once();
  const auto b = run_once();
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].lambda == b.records[i].lambda);
    REQUIRE(a.records[i].pffl == b.records[i].pffl);
    REQUIRE(a.records[i].ledger_queries == b.records[i].ledger_queries);
  }
  REQUIRE(a.final_lambda == b.final_lambda);
}
