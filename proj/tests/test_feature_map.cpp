#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "pffl/feature_map.hpp"
#include "pffl/fixtures.hpp"
#include "pffl/image.hpp"
#include "pffl/rng.hpp"

using namespace pffl;

namespace {

Plane random_plane(int h, int w, std::uint64_t seed) {
  Plane p(h, w);
  Rng rng(seed);
  for (auto& v : p.data) v = static_cast<float>(rng.uniform());
  return p;
}

// Independent dense-grid maximizer for (Re sum_k u_k e^{-i k a})^2.
double brute_force_max_sq(const std::vector<std::complex<double>>& uk, int samples) {
  double best = 0.0;
  for (int l = 0; l < samples; ++l) {
    const double a = 2.0 * M_PI * l / samples;
    double re = 0.0;
    for (std::size_t k = 0; k < uk.size(); ++k)
      re += (uk[k] * std::complex<double>(std::cos((k + 1) * a),
                                          -std::sin((k + 1) * a)))
                .real();
    best = std::max(best, re * re);
  }
  return best;
}

}  // namespace

TEST_CASE("constant images give zero response at every order", "[features]") {
  Plane p(12, 12);
  for (auto& v : p.data) v = 0.37f;
  for (int n : {1, 2, 3, 4}) {
    FaConfig cfg;
    cfg.n_harmonics = n;
    const ResponseMap r = fa_response(p, cfg);
    for (float v : r.plane.data) REQUIRE(std::abs(v) < 1e-9);
  }
}

TEST_CASE("response is invariant to a constant shift", "[features]") {
  const Plane p = random_plane(14, 14, 21);
  Plane shifted = p;
  for (auto& v : shifted.data) v += 0.35f;
  FaConfig cfg;
  cfg.n_harmonics = 4;
  const ResponseMap a = fa_response(p, cfg);
  const ResponseMap b = fa_response(shifted, cfg);
  for (std::size_t k = 0; k < a.plane.size(); ++k)
    REQUIRE(b.plane.data[k] == Catch::Approx(a.plane.data[k]).margin(1e-6));
}

TEST_CASE("response scales linearly with amplitude", "[features]") {
  const Plane p = random_plane(13, 13, 22);
  Plane scaled = p;
  for (auto& v : scaled.data) v *= 0.25f;
  const ResponseMap a = fa_response(p);
  const ResponseMap b = fa_response(scaled);
  for (std::size_t k = 0; k < a.plane.size(); ++k)
    REQUIRE(b.plane.data[k] == Catch::Approx(0.25 * a.plane.data[k]).margin(1e-7));
}

TEST_CASE("orientation maximization matches dense sampling", "[features]") {
  Rng rng(33);
  for (int t = 0; t < 25; ++t) {
    const int n = 1 + static_cast<int>(rng.index(4));
    std::vector<std::complex<double>> uk(n);
    for (auto& u : uk) u = {rng.gaussian(), rng.gaussian()};
    const double got = detail::max_sq_orientation(uk);
    const double ref = brute_force_max_sq(uk, 20000);
    REQUIRE(got >= ref - 1e-9);               // never below any sampled value
    REQUIRE(got == Catch::Approx(ref).epsilon(1e-5).margin(1e-9));
  }
}

TEST_CASE("single-harmonic maximum is the modulus", "[features]") {
  Rng rng(34);
  for (int t = 0; t < 10; ++t) {
    const std::complex<double> u(rng.gaussian(), rng.gaussian());
    REQUIRE(detail::max_sq_orientation({u}) ==
            Catch::Approx(std::norm(u)).epsilon(1e-12));
    // The multi-harmonic path must agree when the higher order vanishes.
    REQUIRE(detail::max_sq_orientation({u, {0.0, 0.0}}) ==
            Catch::Approx(std::norm(u)).epsilon(1e-9));
  }
}

TEST_CASE("ramp response equals the analytic gradient magnitude", "[features]") {
  // plane = a j + b i + c: interior responses must equal S hypot(a,b) where
  // S = sum du^2 G(du,dv) / sigma^2 over the discrete kernel grid.
  const double a = 0.013, b = -0.007, c = 0.4;
  Plane p(16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j)
      p.at(i, j) = static_cast<float>(a * j + b * i + c);

  const double sigma = 1.0;
  const int r = 4;
  double gsum = 0.0, s_factor = 0.0;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      gsum += std::exp(-0.5 * (du * du + dv * dv) / (sigma * sigma));
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      s_factor += du * du *
                  std::exp(-0.5 * (du * du + dv * dv) / (sigma * sigma)) / gsum;
  const double expect = s_factor * std::hypot(a, b);

  for (int n : {1, 2}) {
    FaConfig cfg;
    cfg.n_harmonics = n;
    const ResponseMap resp = fa_response(p, cfg);
    for (int i = r; i < 16 - r; ++i)
      for (int j = r; j < 16 - r; ++j)
        REQUIRE(resp.plane.at(i, j) == Catch::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("directional response never exceeds the maximized one", "[features]") {
  const Plane p = random_plane(12, 12, 44);
  FaConfig cfg;
  cfg.n_harmonics = 2;
  const ResponseMap resp = fa_response(p, cfg);
  for (int l = 0; l < 16; ++l) {
    const Plane dir = fa_directional_response(p, cfg, 2.0 * M_PI * l / 16);
    for (std::size_t k = 0; k < dir.size(); ++k)
      REQUIRE(std::abs(dir.data[k]) <= resp.plane.data[k] + 1e-9);
  }
}

TEST_CASE("response map commutes with quarter rotation", "[features]") {
  Image img(1, 12, 15);
  Rng rng(55);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  FaConfig cfg;
  cfg.n_harmonics = 2;
  const ResponseMap straight = fa_response(to_luminance(img), cfg);
  const ResponseMap rotated = fa_response(to_luminance(rotate90_ccw(img)), cfg);
  // rotated(i, j) must equal straight(j, w-1-i)
  for (int i = 0; i < rotated.plane.height; ++i)
    for (int j = 0; j < rotated.plane.width; ++j)
      REQUIRE(rotated.plane.at(i, j) ==
              Catch::Approx(straight.plane.at(j, img.width - 1 - i)).margin(1e-9));
}

TEST_CASE("quantile threshold interpolates order statistics", "[features]") {
  ResponseMap resp;
  resp.plane = Plane(1, 4);
  resp.plane.data = {3.0f, 0.0f, 2.0f, 1.0f};
  REQUIRE(resolve_threshold(resp, ThresholdPolicy::quantile(0.5)).sigma ==
          Catch::Approx(1.5).epsilon(1e-12));
  REQUIRE(resolve_threshold(resp, ThresholdPolicy::quantile(0.0)).sigma == 0.0);
  REQUIRE(resolve_threshold(resp, ThresholdPolicy::quantile(1.0)).sigma == 3.0);
  REQUIRE(resolve_threshold(resp, ThresholdPolicy::quantile(0.25)).sigma ==
          Catch::Approx(0.75).epsilon(1e-12));
  REQUIRE_FALSE(resolve_threshold(resp, ThresholdPolicy::quantile(0.5)).degenerate);

  REQUIRE(resolve_threshold(resp, ThresholdPolicy::absolute(0.123)).sigma == 0.123);

  ResponseMap flat;
  flat.plane = Plane(2, 2);
  for (auto& v : flat.plane.data) v = 0.7f;
  REQUIRE(resolve_threshold(flat, ThresholdPolicy::quantile(0.6)).degenerate);
}

TEST_CASE("threshold policy validates its arguments", "[features]") {
  REQUIRE_THROWS_AS(ThresholdPolicy::quantile(1.5), InvalidArgumentError);
  REQUIRE_THROWS_AS(ThresholdPolicy::quantile(-0.1), InvalidArgumentError);
  REQUIRE_THROWS_AS(ThresholdPolicy::absolute(-1.0), InvalidArgumentError);
}

TEST_CASE("window density matches naive counting exactly", "[features]") {
  ResponseMap resp;
  resp.plane = random_plane(9, 13, 66);
  const double sigma = 0.5;
  for (int r0 : {1, 2, 3}) {
    const DensityMap dens = sparsity_density(resp, sigma, r0);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 13; ++j) {
        int cnt = 0, area = 0;
        for (int u = i - r0 + 1; u <= i + r0 - 1; ++u)
          for (int v = j - r0 + 1; v <= j + r0 - 1; ++v) {
            if (u < 0 || u >= 9 || v < 0 || v >= 13) continue;
            ++area;
            if (resp.plane.at(u, v) >= sigma) ++cnt;
          }
        REQUIRE(dens.plane.at(i, j) ==
                static_cast<float>(static_cast<double>(cnt) / area));
      }
  }
}

TEST_CASE("window radius resolves from the width", "[features]") {
  SparsityConfig sp;
  REQUIRE(resolve_window_radius(sp, 64) == 6);
  REQUIRE(resolve_window_radius(sp, 100) == 10);
  REQUIRE(resolve_window_radius(sp, 5) == 1);
  sp.window_radius = 4;
  REQUIRE(resolve_window_radius(sp, 64) == 4);
}

TEST_CASE("classification rules and their tie behavior", "[features]") {
  // 1x4 map: below sigma, at sigma with sparse window, at sigma with exact
  // threshold density, above sigma with dense window.
  ResponseMap resp;
  resp.plane = Plane(1, 4);
  resp.plane.data = {0.4f, 0.5f, 0.5f, 0.9f};
  DensityMap dens;
  dens.plane = Plane(1, 4);
  dens.plane.data = {0.0f, 0.2f, 0.4f, 0.8f};
  SparsityConfig sp;  // threshold 0.4
  MuWeights mu;
  const auto [m, labels] = penalty_map(resp, dens, 0.5, sp, mu);
  REQUIRE(labels.at(0, 0) == FeatureLabel::Smooth);
  REQUIRE(labels.at(0, 1) == FeatureLabel::Edge);     // response tie counts as high
  REQUIRE(labels.at(0, 2) == FeatureLabel::Edge);     // density tie stays Edge
  REQUIRE(labels.at(0, 3) == FeatureLabel::Texture);
  REQUIRE(m.at(0, 0) == 1.0f);
  REQUIRE(m.at(0, 1) == 0.3f);
  REQUIRE(m.at(0, 3) == 0.5f);
}

TEST_CASE("penalty weights validate and map labels", "[features]") {
  MuWeights mu;
  REQUIRE(mu.of(FeatureLabel::Smooth) == 1.0f);
  REQUIRE(mu.of(FeatureLabel::Edge) == 0.3f);
  REQUIRE(mu.of(FeatureLabel::Texture) == 0.5f);
  MuWeights bad;
  bad.edge = 0.0f;
  REQUIRE_THROWS_AS(bad.validate(), InvalidArgumentError);
}

TEST_CASE("constant image classifies all smooth", "[features]") {
  Image img(1, 16, 16);
  for (auto& v : img.data) v = 0.5f;
  const auto [m, labels] = build_penalty(img);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      REQUIRE(labels.at(i, j) == FeatureLabel::Smooth);
      REQUIRE(m.at(i, j) == 1.0f);
    }
}

TEST_CASE("tiny images are rejected by the classifier", "[features]") {
  Image img(1, 7, 16);
  REQUIRE_THROWS_AS(build_penalty(img), ImageTooSmallError);
}

TEST_CASE("tripartite fixture regions classify as constructed", "[features]") {
  const TripartiteFixture fx = make_tripartite(64, 12345);
  const auto [m, labels] = build_penalty(fx.image);
  int total[3] = {0, 0, 0}, hit[3] = {0, 0, 0};
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      if (!fx.interior(i, j)) continue;
      const GtLabel g = fx.gt_at(i, j);
      if (g == GtLabel::Ignore) continue;
      const int gi = static_cast<int>(g);
      ++total[gi];
      if (static_cast<int>(labels.at(i, j)) == gi) ++hit[gi];
    }
  for (int g = 0; g < 3; ++g) {
    INFO("class " << g << ": " << hit[g] << "/" << total[g]);
    REQUIRE(total[g] > 0);
    REQUIRE(static_cast<double>(hit[g]) / total[g] >= 0.9);
  }
}

TEST_CASE("fixture labels rotate with the image", "[features]") {
  const TripartiteFixture fx = make_tripartite(48, 777);
  const auto base = build_penalty(fx.image).second;
  const auto rot = build_penalty(rotate90_ccw(fx.image)).second;
  int agree = 0, checked = 0;
  for (int i = 0; i < 48; ++i)
    for (int j = 0; j < 48; ++j) {
      if (!fx.interior(j, 48 - 1 - i)) continue;
      ++checked;
      if (rot.at(i, j) == base.at(j, 48 - 1 - i)) ++agree;
    }
  REQUIRE(checked > 0);
  REQUIRE(static_cast<double>(agree) / checked >= 0.95);
}
