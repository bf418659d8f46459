#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "dilute/error.hpp"
#include "dilute/lattice.hpp"
#include "doctest.h"

using namespace dilute;

namespace {

class Disk final : public ConvexBody {
 public:
  explicit Disk(double r) : r_(r) {}
  int dim() const override { return 2; }
  bool contains(std::span<const double> x) const override {
    return x[0] * x[0] + x[1] * x[1] <= r_ * r_;
  }
  double bounding_radius() const override { return r_; }

 private:
  double r_;
};

// Quarter-plane cone {x : x1 >= |x2|}.
class RightCone final : public ConvexBody {
 public:
  int dim() const override { return 2; }
  bool contains(std::span<const double> x) const override { return x[0] >= std::abs(x[1]); }
  double bounding_radius() const override { return INFINITY; }
};

// Triangle {x : |x2| <= x1 <= a}.
class Wedge final : public ConvexBody {
 public:
  explicit Wedge(double a) : a_(a) {}
  int dim() const override { return 2; }
  bool contains(std::span<const double> x) const override {
    return x[0] >= std::abs(x[1]) && x[0] <= a_;
  }
  double bounding_radius() const override { return a_; }

 private:
  double a_;
};

}  // namespace

TEST_CASE("lattice indexing and neighbours") {
  Lattice lat({-2, 1}, {4, 3});
  CHECK(lat.size() == 12);
  for (std::size_t v = 0; v < lat.size(); ++v) {
    CHECK(lat.index(lat.point(v)) == v);
    for (int dir = 0; dir < 4; ++dir) {
      auto u = lat.neighbor(v, dir);
      if (u == npos) continue;
      auto a = lat.point(v), b = lat.point(u);
      CHECK(std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) == 1);
      auto e = lat.edge_between(v, dir);
      auto [x, y] = lat.edge_ends(e);
      CHECK(std::set<std::size_t>{x, y} == std::set<std::size_t>{u, v});
    }
  }
  int valid = 0;
  for (std::size_t e = 0; e < lat.edge_slots(); ++e) valid += lat.edge_valid(e);
  CHECK(valid == 3 * 3 + 4 * 2);
}

TEST_CASE("region edges and boundary") {
  auto lat = Lattice::cube(2, 0, 5);
  auto reg = LatticeRegion::box(lat, {1, 1}, {3, 3});
  CHECK(reg.size() == 9);
  CHECK(reg.internal_edges().size() == 12);
  CHECK(reg.boundary_edges().size() == 12);
  CHECK(reg.outer_boundary().size() == 12);
  for (auto e : reg.boundary_edges()) {
    auto [x, y] = lat->edge_ends(e);
    CHECK(reg.contains(x) != reg.contains(y));
  }
}

TEST_CASE("gen_environment") {
  auto lat = Lattice::cube(2, 0, 51);
  auto reg = LatticeRegion::full(lat);
  SUBCASE("p = 1 opens everything") {
    auto env = gen_environment(reg, 1.0, 7);
    for (std::size_t e = 0; e < lat->edge_slots(); ++e) CHECK(env.J(e) == (lat->edge_valid(e) ? 1 : 0));
  }
  SUBCASE("tiny p closes everything") {
    auto small = LatticeRegion::full(Lattice::cube(2, 0, 8));
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto env = gen_environment(small, 1e-9, s);
      int open = 0;
      for (auto c : env.coupling) open += c;
      CHECK(open == 0);
    }
  }
  SUBCASE("open fraction concentrates") {
    // 51x51 has 2*51*50 = 5100 edges; use two seeds for ~1e4.
    int open = 0, total = 0;
    for (std::uint64_t s : {11u, 12u}) {
      auto env = gen_environment(reg, 0.7, s);
      for (std::size_t e = 0; e < lat->edge_slots(); ++e)
        if (lat->edge_valid(e)) {
          open += env.J(e);
          ++total;
        }
    }
    double frac = static_cast<double>(open) / total;
    double sigma = std::sqrt(0.7 * 0.3 / total);
    CHECK(std::abs(frac - 0.7) < 3 * sigma);
  }
  SUBCASE("invalid p") {
    CHECK_THROWS_AS(gen_environment(reg, 0.0, 1), InvalidParameter);
    CHECK_THROWS_AS(gen_environment(reg, 1.5, 1), InvalidParameter);
  }
  SUBCASE("reproducible and stable under region extension") {
    auto a = gen_environment(reg, 0.5, 3);
    auto b = gen_environment(reg, 0.5, 3);
    CHECK(snapshot_bytes(a) == snapshot_bytes(b));
    auto big = std::make_shared<const Lattice>(Point{-5, -3}, std::vector<int>{60, 60});
    auto c = gen_environment(LatticeRegion::full(big), 0.5, 3);
    for (std::size_t e = 0; e < lat->edge_slots(); ++e) {
      if (!lat->edge_valid(e)) continue;
      auto [x, y] = lat->edge_ends(e);
      auto bx = big->index(lat->point(x));
      auto by = big->index(lat->point(y));
      CHECK(c.J(bx * 2 + (by - bx == 1 ? 1 : 0)) == a.J(e));
    }
  }
}

TEST_CASE("scales") {
  auto s = Scales::from_field(1.0 / 16, 2);
  CHECK(s.K == 2);
  CHECK(s.N == 16);
  auto t = Scales::from_field(0.3, 2);
  CHECK(t.K == 1);
  CHECK(t.N == 3);
  auto u = Scales::from_field(1.0 / 100, 2);
  CHECK(u.K == 3);
  CHECK(u.N == 99);
  CHECK(u.N % u.K == 0);
  CHECK_THROWS_AS(Scales::fixed(5, 2), InvalidParameter);
}

TEST_CASE("box decomposition") {
  SUBCASE("K = 1 gives singletons") {
    auto reg = LatticeRegion::full(Lattice::cube(2, -3, 6));
    auto boxes = box_decomposition(reg, 1);
    CHECK(boxes.size() == reg.size());
    for (const auto& b : boxes) {
      CHECK(b.sites.size() == 1);
      CHECK(b.interior);
    }
  }
  SUBCASE("[0,2K)^d region has 2^d interior boxes") {
    for (int K : {2, 3, 4}) {
      auto lat = Lattice::cube(2, -2 * K, 6 * K);
      int lo = -(K / 2);  // aligned with the half-open box convention
      auto reg = LatticeRegion::box(lat, {lo, lo}, {2 * K, 2 * K});
      int interior = 0;
      for (const auto& b : box_decomposition(reg, K)) interior += b.interior;
      CHECK(interior == 4);
    }
  }
  SUBCASE("tiling and interior soundness on a random region") {
    auto lat = Lattice::cube(2, -7, 17);
    auto env = gen_environment(LatticeRegion::full(lat), 0.5, 99);
    auto reg = LatticeRegion::where(lat, [&](const Point& p) {
      return (p[0] * 31 + p[1] * 17 + p[0] * p[1]) % 5 != 0;
    });
    for (int K : {1, 2, 3, 4}) {
      std::vector<int> hits(lat->size(), 0);
      for (const auto& b : box_decomposition(reg, K)) {
        for (auto v : b.sites) {
          ++hits[v];
          CHECK(box_index_of(lat->point(v), K) == b.index);
          if (b.interior) CHECK(reg.contains(v));
        }
        if (b.interior) CHECK(b.sites.size() == static_cast<std::size_t>(K * K));
      }
      for (int h : hits) CHECK(h == 1);
    }
    (void)env;
  }
}

TEST_CASE("box index convention") {
  CHECK(box_index_of(Point{-1, 0}, 2) == Point{0, 0});
  CHECK(box_index_of(Point{1, -2}, 2) == Point{1, -1});
  CHECK(box_index_of(Point{1, 2}, 3) == Point{0, 1});
  CHECK(box_sites(Point{0, 1}, 2) == std::vector<Point>{{-1, 1}, {-1, 2}, {0, 1}, {0, 2}});
}

TEST_CASE("discretize") {
  SUBCASE("cube, K = 1, N = 4") {
    auto reg = discretize(CubeBody(2, 1.0), Scales::fixed(4, 1));
    // Box i survives iff i/4 +- 1/8 stays in [-1, 1], i.e. |i| <= 3.
    CHECK(reg.size() == 49);
    for (auto v : reg.vertices()) {
      auto p = reg.lattice().point(v);
      CHECK(std::abs(p[0]) <= 3);
      CHECK(std::abs(p[1]) <= 3);
    }
  }
  SUBCASE("point gives empty region") {
    CHECK(discretize(CubeBody(2, 0.0), Scales::fixed(8, 2)).empty());
  }
  SUBCASE("disk against brute-force box membership") {
    const double r = std::sqrt(1.0 / std::numbers::pi);  // unit-area disk
    const int N = 32, K = 2;
    auto reg = discretize(Disk(r), Scales::fixed(N, K));
    // Oracle: count boxes whose four macroscopic corners are in the disk.
    std::size_t expected = 0;
    const double half = 0.5 * K / N;
    for (int i = -40; i <= 40; ++i)
      for (int j = -40; j <= 40; ++j) {
        double cx = double(K) * i / N, cy = double(K) * j / N;
        double fx = std::abs(cx) + half, fy = std::abs(cy) + half;
        if (fx * fx + fy * fy <= r * r) expected += K * K;
      }
    CHECK(reg.size() == expected);
    double area = std::numbers::pi * (r * N) * (r * N);
    CHECK(std::abs(static_cast<double>(reg.size()) - area) < 4.0 * K * N);
  }
}

TEST_CASE("carve_catalyst") {
  auto lat = Lattice::cube(2, -20, 41);
  auto env = gen_environment(LatticeRegion::full(lat), 1.0, 5);
  Scales s = Scales::fixed(8, 1);
  RightCone cone;
  Wedge wedge(1.5);
  Point anchor{-5, 0};
  auto res = carve_catalyst(env, wedge, cone, anchor, s);
  auto shape = discretize(wedge, s, lat, anchor);
  auto cone_region = discretize(cone, s, lat, anchor);

  SUBCASE("brute-force edge scan") {
    std::set<std::size_t> expect;
    for (std::size_t e = 0; e < lat->edge_slots(); ++e) {
      if (!lat->edge_valid(e)) continue;
      auto [x, y] = lat->edge_ends(e);
      if ((shape.contains(x) && !cone_region.contains(y)) ||
          (shape.contains(y) && !cone_region.contains(x)))
        expect.insert(e);
    }
    CHECK(res.carved_count == expect.size());
    CHECK(std::set<std::size_t>(res.env.carved.begin(), res.env.carved.end()) == expect);
    for (std::size_t e = 0; e < lat->edge_slots(); ++e)
      CHECK(res.env.J(e) == (expect.count(e) ? 0 : env.J(e)));
    // Lateral boundary of the discrete wedge: two diagonal staircases of
    // length about 12 sites each, every site cutting two edges.
    CHECK(res.carved_count >= 40);
    CHECK(res.carved_count <= 56);
  }
  SUBCASE("open face in the +x1 direction is never carved") {
    int mouth = 0;
    for (auto x : shape.vertices()) {
      auto y = lat->neighbor(x, 1);
      if (y == npos || shape.contains(y)) continue;
      ++mouth;
      CHECK(res.env.J_dir(x, 1) == 1);
    }
    CHECK(mouth > 0);
  }
  SUBCASE("idempotent") {
    auto twice = carve_catalyst(res.env, wedge, cone, anchor, s);
    CHECK(twice.env.carved == res.env.carved);
    CHECK(twice.env.coupling == res.env.coupling);
  }
  SUBCASE("soundness: no open edge from cone to lateral complement within the shape") {
    for (auto x : shape.vertices())
      for (int dir = 0; dir < 4; ++dir) {
        auto y = lat->neighbor(x, dir);
        if (y != npos && !cone_region.contains(y)) CHECK(res.env.J_dir(x, dir) == 0);
      }
  }
  SUBCASE("out of bounds") {
    CHECK_THROWS_AS(carve_catalyst(env, Wedge(4.0), cone, anchor, s), OutOfBounds);
  }
}

TEST_CASE("snapshot round trip") {
  auto lat = std::make_shared<const Lattice>(Point{-3, 2}, std::vector<int>{7, 5});
  auto reg = LatticeRegion::where(lat, [](const Point& p) { return p[0] + p[1] > 0; });
  auto env = gen_environment(reg, 0.6, 42);
  env.carved = {3, 10};
  env.coupling[3] = env.coupling[10] = 0;
  std::stringstream ss;
  write_snapshot(env, ss);
  auto back = read_snapshot(ss);
  CHECK(back.region == env.region);
  CHECK(back.coupling == env.coupling);
  CHECK(back.carved == env.carved);
  CHECK(back.p == env.p);
  CHECK(back.seed == env.seed);
  std::stringstream bad("NOTASNAP");
  CHECK_THROWS_AS(read_snapshot(bad), InvalidParameter);
}
