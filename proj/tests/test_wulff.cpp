#include <algorithm>
#include <cmath>
#include <numeric>

#include "dilute/error.hpp"
#include "dilute/rng.hpp"
#include "dilute/wulff.hpp"
#include "doctest.h"

using namespace dilute;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::shared_ptr<const SurfaceTension> iso(double t, int d = 2) {
  return std::make_shared<IsotropicTension>(d, t);
}

double area(const Polygon& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    a += p[i][0] * p[(i + 1) % p.size()][1] - p[i][1] * p[(i + 1) % p.size()][0];
  return 0.5 * a;
}

// Andrew's monotone chain, counter-clockwise.
Polygon hull(Polygon pts) {
  std::sort(pts.begin(), pts.end());
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  Polygon h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

Polygon scaled_to_unit_area(Polygon p) {
  const double s = 1.0 / std::sqrt(area(p));
  for (auto& v : p) v = {v[0] * s, v[1] * s};
  return p;
}

bool in_cone(double theta, double x, double y) {
  if (theta >= kFullAngle - 1e-12) return true;
  return x >= std::hypot(x, y) * std::cos(theta / 2) - 1e-15;
}

}  // namespace

TEST_CASE("surface tension models and the cone") {
  const std::vector<double> n{0.6, 0.8}, m{-0.6, -0.8};
  L1Tension l1(2, 1.5);
  CHECK(l1(n) == doctest::Approx(1.5 * 1.4));
  CHECK(l1(n) == l1(m));
  CHECK(parse_tension("iso:0.5", 2, 3.0)->operator()(n) == doctest::Approx(1.5));
  CHECK(parse_tension("l1aniso:1", 2, 1.0)->operator()(std::vector<double>{1.0, 0.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(parse_tension("bogus:1", 2, 1.0), InvalidParameter);
  CHECK_THROWS_AS(parse_tension("iso", 2, 1.0), InvalidParameter);
  CHECK_THROWS_AS(IsotropicTension(2, 0.0), InvalidParameter);

  ConeBody half(2, kPi), quarter(2, kPi / 2);
  CHECK(half.contains(std::vector<double>{0.0, 5.0}));
  CHECK_FALSE(half.contains(std::vector<double>{-0.1, 5.0}));
  CHECK(quarter.contains(std::vector<double>{1.0, 0.99}));
  CHECK_FALSE(quarter.contains(std::vector<double>{1.0, 1.01}));
  CHECK_THROWS_AS(ConeBody(2, 4.0), InvalidParameter);

  // 2K + ln tanh K vanishes at the critical point K = ln(1 + √2)/2.
  const double beta_c = std::log(1.0 + std::sqrt(2.0));
  CHECK(onsager_tension(beta_c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(onsager_tension(2.0) > 0.0);
  CHECK(onsager_magnetization(beta_c * 0.99) == 0.0);
  CHECK(onsager_magnetization(10.0) > 0.999999);
}

TEST_CASE("direction nets") {
  const auto n2 = direction_net(2, 16);
  CHECK(n2.size() == 16);
  CHECK(n2[4][0] == 0.0);
  CHECK(n2[4][1] == 1.0);
  CHECK_THROWS_AS(direction_net(2, 10), InvalidParameter);
  const auto n3 = direction_net(3, 2);
  CHECK(n3.size() == 162);
  for (const auto& v : n3) CHECK(std::hypot(v[0], v[1], v[2]) == doctest::Approx(1.0));
}

TEST_CASE("surface functional closed forms") {
  SUBCASE("unit-area disk") {
    for (double t : {1.0, 2.5}) {
      const WulffShape w(iso(t), kFullAngle, 1.0);
      CHECK(area(w.polygon()) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(surface_functional(w) == doctest::Approx(2.0 * std::sqrt(kPi) * t).epsilon(1e-6));
    }
  }
  SUBCASE("unit-area half-disk on the cone face") {
    const WulffShape w(iso(1.0), kPi, 1.0);
    const double r = std::sqrt(2.0 / kPi);
    CHECK(surface_functional(w) == doctest::Approx(kPi * r).epsilon(1e-6));
    // Centroid of a half-disk sits at 4r/(3π) on the axis.
    double cx = 0.0, cy = 0.0;
    const auto p = w.polygon();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& a = p[i];
      const auto& b = p[(i + 1) % p.size()];
      const double c = a[0] * b[1] - a[1] * b[0];
      cx += (a[0] + b[0]) * c;
      cy += (a[1] + b[1]) * c;
    }
    CHECK(cx / 6.0 == doctest::Approx(4.0 * r / (3.0 * kPi)).epsilon(1e-6));
    CHECK(std::abs(cy / 6.0) < 1e-12);
  }
  SUBCASE("linear in the tension for a fixed shape") {
    const Polygon square{{0, -1}, {2, -1}, {2, 1}, {0, 1}};
    L1Tension a(2, 1.0), b(2, 3.0);
    CHECK(surface_functional(square, b, kFullAngle) ==
          doctest::Approx(3.0 * surface_functional(square, a, kFullAngle)));
    CHECK(surface_functional(square, a, kFullAngle) == doctest::Approx(8.0));
    // The face on x1 = 0 is free in the half-space.
    CHECK(surface_functional(square, a, kPi) == doctest::Approx(6.0));
  }
  SUBCASE("degenerate input") {
    CHECK_THROWS_AS(surface_functional(Polygon{{0, 0}, {1, 0}}, IsotropicTension(2, 1.0), kFullAngle),
                    InvalidParameter);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(surface_functional(Polygon{{0, 0}, {inf, 0}, {0, 1}}, IsotropicTension(2, 1.0), kFullAngle),
                    InvalidParameter);
  }
}

TEST_CASE("Wulff shapes") {
  SUBCASE("isotropic full space is round") {
    const WulffShape w(iso(1.7), kFullAngle, 1.3);
    const auto p = w.polygon();
    std::vector<double> support;
    for (const auto& n : w.net()) {
      double h = -1e300;
      for (const auto& v : p) h = std::max(h, v[0] * n[0] + v[1] * n[1]);
      support.push_back(h);
    }
    const auto [lo, hi] = std::minmax_element(support.begin(), support.end());
    CHECK(*hi - *lo < 1e-9);
    CHECK(*lo == doctest::Approx(1.3 / std::sqrt(kPi)).epsilon(1e-6));
  }
  SUBCASE("l1 tension gives a square") {
    const auto t = std::make_shared<L1Tension>(2, 2.0);
    const WulffShape w(t, kFullAngle, 3.0);
    CHECK(w.polygon().size() == 4);
    CHECK(w.diameter() == doctest::Approx(3.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(w.cross_width() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(w.w_theta() == doctest::Approx(0.25));
    CHECK(surface_functional(w) == doctest::Approx(4.0 * 3.0 * 2.0).epsilon(1e-12));
    // In the half-space the square is cut in half and keeps its side free.
    const WulffShape half(t, kPi, 1.0);
    CHECK(surface_functional(half) == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("volume is b^d") {
    for (double theta : {kPi / 3, kPi / 2, kPi, kFullAngle})
      for (double b : {0.5, 1.0, 2.0}) {
        const WulffShape w(std::make_shared<L1Tension>(2, 1.3), theta, b);
        CHECK(w.volume() == doctest::Approx(b * b));
        CHECK(w.measured_volume() == doctest::Approx(b * b).epsilon(1e-10));
      }
    const WulffShape ball(iso(1.0, 3), kFullAngle, 1.0, 3);
    CHECK(ball.measured_volume() == doctest::Approx(1.0).epsilon(2e-3));
    const WulffShape cube(std::make_shared<L1Tension>(3, 1.0), kFullAngle, 2.0, 2);
    CHECK(cube.measured_volume() == doctest::Approx(8.0).epsilon(2e-3));
  }
  SUBCASE("size zero is a point") {
    const WulffShape w(iso(1.0), kPi / 2, 0.0);
    CHECK(w.volume() == 0.0);
    CHECK(w.contains(std::vector<double>{0.0, 0.0}));
    CHECK_FALSE(w.contains(std::vector<double>{1e-9, 0.0}));
    CHECK(w.diameter() == 0.0);
  }
  SUBCASE("scaling of the surface functional") {
    for (double theta : {kPi / 4, kPi / 2, kPi, kFullAngle}) {
      const auto t = std::make_shared<FunctionTension>(
          2, [](std::span<const double> n) { return 1.0 + 0.3 * n[0] * n[0] + 0.1 * std::abs(n[1]); }, "bumpy");
      const WulffShape one(t, theta, 1.0);
      const double f1 = surface_functional(one);
      for (double b : {0.5, 1.0, 2.0})
        CHECK(surface_functional(one.resized(b)) == doctest::Approx(b * f1).epsilon(1e-6));
      // The support identity agrees with the edge sum.
      CHECK(surface_functional(one.polygon(), *t, theta) == doctest::Approx(2.0 * std::sqrt(one.base_volume())).epsilon(1e-9));
    }
    const WulffShape ball(iso(2.0, 3), kFullAngle, 1.0, 3);
    CHECK(surface_functional(ball.resized(2.0)) == doctest::Approx(4.0 * surface_functional(ball)).epsilon(1e-6));
    // Unit-volume sphere area is (36π)^(1/3).
    CHECK(surface_functional(ball) == doctest::Approx(2.0 * std::cbrt(36.0 * kPi)).epsilon(3e-3));
  }
  SUBCASE("convexity spot checks") {
    CounterRng rng(7);
    for (double theta : {kPi / 3, kPi, kFullAngle}) {
      const WulffShape w(std::make_shared<L1Tension>(2, 1.0), theta, 1.0);
      const double r = w.bounding_radius();
      std::size_t pairs = 0;
      while (pairs < 300) {
        std::vector<double> a{(2 * rng.uniform() - 1) * r, (2 * rng.uniform() - 1) * r};
        std::vector<double> b{(2 * rng.uniform() - 1) * r, (2 * rng.uniform() - 1) * r};
        if (!w.contains(a) || !w.contains(b)) continue;
        ++pairs;
        const double s = rng.uniform();
        CHECK(w.contains(std::vector<double>{s * a[0] + (1 - s) * b[0], s * a[1] + (1 - s) * b[1]}));
      }
    }
    const WulffShape ball(iso(1.0, 3), kPi / 2, 1.0, 2, 1 << 14);
    std::size_t pairs = 0;
    const double r = ball.bounding_radius();
    while (pairs < 100) {
      std::vector<double> a(3), b(3), c(3);
      for (auto* v : {&a, &b})
        for (auto& x : *v) x = (2 * rng.uniform() - 1) * r;
      if (!ball.contains(a) || !ball.contains(b)) continue;
      ++pairs;
      for (int i = 0; i < 3; ++i) c[static_cast<std::size_t>(i)] = 0.5 * (a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)]);
      CHECK(ball.contains(c));
    }
  }
  SUBCASE("every point lies in the cone") {
    CounterRng rng(3);
    const WulffShape w(iso(1.0), kPi / 3, 2.0);
    for (const auto& v : w.polygon()) CHECK(in_cone(kPi / 3, v[0] + 1e-12, v[1]));
  }
}

TEST_CASE("no random competitor beats the Wulff shape") {
  CounterRng rng(11);
  const std::shared_ptr<const SurfaceTension> l1 = std::make_shared<L1Tension>(2, 1.0);
  const auto bumpy = std::make_shared<FunctionTension>(
      2, [](std::span<const double> n) { return 1.0 + 0.4 * n[0] * n[0] * n[1] * n[1]; }, "bumpy");
  for (const auto& t : {iso(1.0), l1, std::shared_ptr<const SurfaceTension>(bumpy)})
    for (double theta : {kPi / 2, kPi, kFullAngle}) {
      const WulffShape w(t, theta, 1.0);
      const double best = surface_functional(w);
      double margin = 1e300;
      for (int trial = 0; trial < 100; ++trial) {
        Polygon pts;
        if (trial % 2 == 0) {
          // Random hull of points in the cone.
          while (pts.size() < 3 + static_cast<std::size_t>(trial % 17)) {
            const double x = 2 * rng.uniform() - 1, y = 2 * rng.uniform() - 1;
            if (in_cone(theta, x, y)) pts.push_back({x, y});
          }
          if (theta < kFullAngle) pts.push_back({0.0, 0.0});
        } else {
          // Small perturbation of the optimum: jitter its vertices inward.
          for (const auto& v : w.polygon()) {
            const double s = 1.0 - 0.05 * rng.uniform();
            pts.push_back({v[0] * s, v[1] * s});
          }
        }
        const auto h = hull(pts);
        if (h.size() < 3 || area(h) < 1e-6) continue;
        const double f = surface_functional(scaled_to_unit_area(h), *t, theta);
        margin = std::min(margin, f - best);
      }
      CHECK(margin >= -1e-9);
    }
}

TEST_CASE("droplet energetics") {
  SUBCASE("isotropic planar closed form") {
    const IsotropicTension t(2, 1.0);
    const auto e = critical_values(t, kFullAngle, 1.0, 1.0);
    CHECK(e.F1 == doctest::Approx(2.0 * std::sqrt(kPi)).epsilon(1e-6));
    CHECK(e.B_c == doctest::Approx(std::sqrt(kPi)).epsilon(1e-6));
    CHECK(e.B_root == doctest::Approx(2.0 * std::sqrt(kPi)).epsilon(1e-6));
    CHECK(e.E_c == doctest::Approx(kPi).epsilon(1e-6));
    CHECK(e.energy(0.0) == 0.0);
    CHECK(std::abs(e.energy(e.B_root)) < 1e-12);
    CHECK(e.energy(e.B_c) == doctest::Approx(e.E_c).epsilon(1e-12));
    CHECK(e.diameter_c == doctest::Approx(2.0).epsilon(1e-6));
  }
  SUBCASE("the curve peaks once at B_c") {
    const L1Tension t(2, 1.2);
    for (double theta : {kPi / 4, kPi, kFullAngle}) {
      const auto e = critical_values(t, theta, 1.5, 0.8);
      const auto grid = default_b_grid(e);
      CHECK(grid.size() == 512);
      CHECK(grid.back() == doctest::Approx(2.0 * e.B_root));
      const auto curve = energy_curve(t, theta, 1.5, 0.8, grid);
      std::size_t maxima = 0, arg = 0;
      for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        if (curve[i].second > curve[i - 1].second && curve[i].second > curve[i + 1].second) ++maxima;
        if (curve[i].second > curve[arg].second) arg = i;
      }
      CHECK(maxima == 1);
      CHECK(std::abs(curve[arg].first - e.B_c) <= grid[1]);
      CHECK(curve.front().second == 0.0);
    }
  }
  SUBCASE("homogeneity") {
    const L1Tension t(2, 1.0), t3(2, 3.0);
    const auto e = critical_values(t, kPi / 2, 1.0, 0.5);
    const auto doubled = critical_values(t, kPi / 2, 2.0, 0.5);
    CHECK(doubled.B_c == doctest::Approx(e.B_c / 2));
    CHECK(doubled.B_root == doctest::Approx(e.B_root / 2));
    CHECK(doubled.E_c == doctest::Approx(e.E_c / 2));
    const auto tripled = critical_values(t3, kPi / 2, 1.0, 0.5);
    CHECK(tripled.B_c == doctest::Approx(3 * e.B_c));
    CHECK(tripled.E_c == doctest::Approx(9 * e.E_c));
    const IsotropicTension s(3, 1.0);
    const auto e3 = critical_values(s, kFullAngle, 1.0, 1.0);
    const auto e3d = critical_values(s, kFullAngle, 2.0, 1.0);
    CHECK(e3d.E_c == doctest::Approx(e3.E_c / 4));
    CHECK(e3.B_c == doctest::Approx(2.0 / 3.0 * e3.F1));
  }
  SUBCASE("bad inputs") {
    const IsotropicTension t(2, 1.0);
    CHECK_THROWS_AS(critical_values(t, kPi, 1.0, 0.0), InvalidParameter);
    CHECK_THROWS_AS(critical_values(t, kPi, 1.0, -0.2), InvalidParameter);
    CHECK_THROWS_AS(energy_curve(t, kPi, 1.0, 1.0, {0.0, 2.0, 1.0}), InvalidParameter);
    CHECK_THROWS_AS(energy_curve(t, kPi, 1.0, 1.0, {-1.0, 2.0}), InvalidParameter);
  }
  SUBCASE("E_c falls with the cone angle") {
    const IsotropicTension t(2, 1.0);
    double previous = 0.0;
    for (double theta : {kPi / 8, kPi / 4, kPi / 2, kPi}) {
      const double ec = critical_values(t, theta, 1.0, 1.0).E_c;
      // Circular sector of angle θ: F1² = 2θ.
      CHECK(ec == doctest::Approx(theta / 2).epsilon(1e-5));
      CHECK(ec > previous);
      previous = ec;
    }
  }
  SUBCASE("critical diameter stays bounded as beta grows") {
    std::vector<double> diam;
    for (double beta : {2.0, 4.0, 8.0, 16.0}) {
      const L1Tension t(2, beta);
      diam.push_back(critical_values(t, kPi / 2, beta, onsager_magnetization(beta)).diameter_c);
    }
    const auto [lo, hi] = std::minmax_element(diam.begin(), diam.end());
    CHECK(*hi < 2.0 * *lo);
  }
}

TEST_CASE("relaxation exponent") {
  CHECK(lambda2(kPi / 2, kPi, 1.0, 2) == doctest::Approx((kPi + 2.0 / kPi) / 3.0));
  CHECK(lambda2(1.0, 0.0, 3.0, 2) == doctest::Approx(1.0));
  const IsotropicTension t(2, 1.0);
  const double ec_full = critical_values(t, kFullAngle, 1.0, 1.0).E_c;
  CHECK(lambda2(0.7, ec_full, 0.0, 2) == doctest::Approx(ec_full / 3));

  SUBCASE("catalyst geometry") {
    const double b = catalyst_size(t, kPi / 2, 1.0, 1.0);
    const WulffShape w(std::make_shared<IsotropicTension>(2, 1.0), kPi / 2, b);
    CHECK(w.cross_width() == doctest::Approx(2.0).epsilon(1e-6));
    // Quarter disk of radius r: two lateral radii, each with |n|_1 = √2.
    const double r = 2.0 / std::sqrt(2.0);
    CHECK(w.lateral_l1_area() == doctest::Approx(2.0 * r * std::sqrt(2.0)).epsilon(1e-6));
    CHECK(catalyst_cost(t, kPi / 2, 1.0, 1.0, 0.5) == doctest::Approx(std::log(2.0) * 4.0).epsilon(1e-6));
    CHECK(catalyst_cost(t, kPi / 2, 1.0, 1.0, 0.0) == 0.0);
    CHECK(std::isinf(catalyst_cost(t, kPi / 2, 1.0, 1.0, 1.0)));
  }
  SUBCASE("three-dimensional lateral area") {
    // Unit-volume half-ball: the flat face is a disk of radius (3/(2π))^(1/3) and |n|_1 = 1.
    const WulffShape half(std::make_shared<IsotropicTension>(3, 1.0), kPi, 1.0, 3);
    const double r = std::cbrt(3.0 / (2.0 * kPi));
    CHECK(half.lateral_l1_area() == doctest::Approx(kPi * r * r).epsilon(5e-3));
  }
  SUBCASE("no dilution cost favours the narrowest cone") {
    const std::vector<double> grid{0.2, 0.5, 1.0, 2.0, 3.0};
    const auto opt = optimize_theta(t, 1.0, 1.0, 0.0, grid);
    CHECK(opt.theta == 0.2);
    CHECK(opt.grid.size() == grid.size());
    CHECK(opt.E_c_exponent == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("ratio falls as beta grows") {
    std::vector<double> grid;
    for (int i = 1; i <= 30; ++i) grid.push_back(kPi * i / 31.0);
    double previous = 2.0;
    for (double beta : {2.0, 4.0, 8.0}) {
      const IsotropicTension tb(2, beta);
      const auto opt = optimize_theta(tb, beta, 1.0, 0.5, grid);
      CHECK(opt.ratio < previous);
      CHECK(opt.lambda2_full == doctest::Approx(critical_values(tb, kFullAngle, beta, 1.0).E_c / 3));
      previous = opt.ratio;
    }
  }
  SUBCASE("single point and bad grids") {
    const auto opt = optimize_theta(t, 1.0, 1.0, 0.3, {0.9});
    CHECK(opt.theta == 0.9);
    CHECK(std::isnan(opt.E_c_exponent));
    CHECK_THROWS_AS(optimize_theta(t, 1.0, 1.0, 0.3, {}), InvalidParameter);
    CHECK_THROWS_AS(optimize_theta(t, 1.0, 1.0, 0.3, {kPi}), InvalidParameter);
  }
}

TEST_CASE("dilution cost from carved edges") {
  CHECK(estimate_C_dil(0, 0.5, Scales::fixed(16, 2), 2) == 0.0);
  CHECK(std::isinf(estimate_C_dil(10, 1.0, Scales::fixed(16, 2), 2)));
  double previous = 0.0;
  for (double p : {0.1, 0.5, 0.9, 0.999}) {
    const double c = estimate_C_dil(10, p, Scales::fixed(16, 2), 2);
    CHECK(c > previous);
    previous = c;
  }
  CHECK_THROWS_AS(estimate_C_dil(1, 1.5, Scales::fixed(16, 2), 2), InvalidParameter);

  const auto tension = std::make_shared<IsotropicTension>(2, 1.0);
  const WulffShape shape(tension, kPi / 2, 1.0);
  const ConeBody cone(2, kPi / 2);
  std::vector<double> costs;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const auto scales = Scales::from_field(h, 2);
    const int half = 2 * scales.N;
    auto lat = std::make_shared<const Lattice>(Point{-half, -half}, std::vector<int>{2 * half, 2 * half});
    const auto env = uniform_environment(LatticeRegion::full(lat));
    const auto carved = carve_catalyst(env, shape, cone, Point{0, 0}, scales);
    CHECK(carved.carved_count > 0);
    costs.push_back(estimate_C_dil(carved.carved_count, 0.5, scales, 2));
  }
  MESSAGE("carved cost h=1/16: " << costs[0] << ", h=1/32: " << costs[1]
                                 << ", continuum: " << std::log(2.0) * shape.lateral_l1_area());
  CHECK(std::abs(costs[1] / costs[0] - 1.0) < 0.2);
}

TEST_CASE("spontaneous magnetization") {
  auto box = [](int half) {
    auto lat = std::make_shared<const Lattice>(Point{-half - 1, -half - 1}, std::vector<int>{2 * half + 3, 2 * half + 3});
    return uniform_environment(LatticeRegion::box(lat, Point{-half, -half}, {2 * half + 1, 2 * half + 1}));
  };
  SUBCASE("infinite temperature, no field") {
    const auto m = estimate_m_star(box(3), 0.0, 0.0, MagnetizationSampler::cftp, 4000, 5);
    CHECK(std::abs(m.m_star) < 4 * m.std_error);
    CHECK(m.samples == 4000);
  }
  SUBCASE("twice the critical coupling matches the closed form") {
    const double beta = 2.0 * std::log(1.0 + std::sqrt(2.0));
    const double exact = onsager_magnetization(beta);
    const auto m = estimate_m_star(box(5), beta, 0.0, MagnetizationSampler::cftp, 600, 9);
    MESSAGE("m* = " << m.m_star << " ± " << m.std_error << ", closed form " << exact);
    // Standard error under the closed form, since a run can see no minus spin at all.
    const double se = std::sqrt((1.0 - exact * exact) / static_cast<double>(m.samples));
    CHECK(std::abs(m.m_star - exact) < 4 * se + 1e-3);
    const auto g = estimate_m_star(box(8), beta, 0.0, MagnetizationSampler::glauber, 4000, 9);
    CHECK(std::abs(g.m_star - exact) < 4 * std::max(g.std_error, se) + 1e-3);
    CHECK(g.converged);
  }
  SUBCASE("deep low temperature") {
    const auto m = estimate_m_star(box(5), 10.0, 0.0, MagnetizationSampler::cftp, 200, 1);
    CHECK(m.m_star >= 0.999);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(estimate_m_star(box(2), 1.0, 0.0, MagnetizationSampler::cftp, 5, 1), InvalidParameter);
    auto lat = std::make_shared<const Lattice>(Point{2, 2}, std::vector<int>{4, 4});
    CHECK_THROWS_AS(estimate_m_star(uniform_environment(LatticeRegion::full(lat)), 1.0, 0.0,
                                    MagnetizationSampler::cftp, 100, 1),
                    InvalidParameter);
  }
}

TEST_CASE("Wulff annuli") {
  const auto tension = std::make_shared<IsotropicTension>(2, 1.0);
  const WulffShape shape(tension, kFullAngle, 1.0);
  const auto scales = Scales::fixed(32, 2);
  auto lat = std::make_shared<const Lattice>(Point{-40, -40}, std::vector<int>{80, 80});
  const auto blocks = wulff_annuli(shape, 0.3, 1.0, 4, scales, lat, Point{0, 0});
  CHECK(blocks.size() == 4);
  const auto outer = discretize(shape.resized(1.0), scales, lat, Point{0, 0});
  const auto inner = discretize(shape.resized(0.3), scales, lat, Point{0, 0});
  auto joined = LatticeRegion::empty(lat);
  for (const auto& b : blocks) {
    CHECK(b.subset_of(outer));
    CHECK(b.intersect(inner).empty());
    joined = joined.unite(b);
  }
  CHECK(joined.size() == outer.subtract(inner).size());
  // Neighbouring blocks overlap, blocks two apart do not.
  CHECK_FALSE(blocks[0].intersect(blocks[1]).empty());
  CHECK(blocks[0].intersect(blocks[2]).empty());
  CHECK_THROWS_AS(wulff_annuli(shape, 1.0, 0.5, 3, scales, lat, Point{0, 0}), InvalidParameter);
}
