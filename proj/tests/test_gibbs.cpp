#include <cmath>
#include <numeric>

#include "dilute/error.hpp"
#include "dilute/gibbs.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dilute;

namespace {

// Region `extent` placed at the origin inside a lattice with a one-site rim.
GibbsSpec patch(std::vector<int> extent, double beta, double h, BoundaryKind bc, double p = 1.0,
                std::uint64_t seed = 1) {
  const int d = static_cast<int>(extent.size());
  std::vector<int> ext = extent;
  for (auto& e : ext) e += 2;
  auto lat = std::make_shared<const Lattice>(Point(d, -1), ext);
  auto reg = LatticeRegion::box(lat, Point(d, 0), extent);
  return make_spec(gen_environment(reg, p, seed), beta, h, BoundaryCondition::uniform(*lat, bc));
}

}  // namespace

TEST_CASE("hamiltonian fixtures") {
  auto spec = patch({5, 5}, 1.0, 0.37, BoundaryKind::plus, 0.5, 3);
  CHECK(hamiltonian(make_spins(spec, 1), spec) == 0.0);

  auto minus = spec.with_boundary(BoundaryCondition::uniform(spec.lattice(), BoundaryKind::minus));
  CHECK(hamiltonian(make_spins(minus, -1), minus) == doctest::Approx(0.37 * 25).epsilon(1e-14));

  auto full = patch({5, 5}, 1.0, 0.37, BoundaryKind::plus);
  Spins s = make_spins(full, 1);
  s[full.lattice().index(Point{2, 2})] = -1;
  CHECK(hamiltonian(s, full) == doctest::Approx(4.37).epsilon(1e-14));

  SUBCASE("free boundary edges are omitted") {
    auto fr = patch({3, 3}, 1.0, 0.0, BoundaryKind::free);
    CHECK(hamiltonian(make_spins(fr, -1), fr) == 0.0);
    CHECK(hamiltonian(make_spins(fr, 1), fr) == 0.0);
  }
}

TEST_CASE("exact_gibbs") {
  SUBCASE("single free vertex") {
    auto spec = patch({1, 1}, 1.3, 0.4, BoundaryKind::free);
    auto g = exact_gibbs(spec);
    CHECK(g.prob[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.3 * 0.4))).epsilon(1e-14));
  }
  SUBCASE("beta = 0 is uniform") {
    auto spec = patch({2, 3}, 0.0, 0.7, BoundaryKind::plus);
    for (double p : exact_gibbs(spec).prob) CHECK(p == doctest::Approx(1.0 / 64).epsilon(1e-14));
  }
  SUBCASE("2x2 plus boundary magnetization") {
    auto spec = patch({2, 2}, 1.0, 0.0, BoundaryKind::plus);
    auto g = exact_gibbs(spec);
    double m = 0.0, total = 0.0;
    for (std::uint64_t b = 0; b < 16; ++b) {
      m += g.prob[b] * (2.0 * __builtin_popcountll(b) - 4.0) / 4.0;
      total += g.prob[b];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // Independent 16-term enumeration: E[mean spin] and log Z.
    CHECK(m == doctest::Approx(0.9540306525731395).epsilon(1e-12));
    CHECK(g.log_Z == doctest::Approx(0.08206448035026313).epsilon(1e-12));
  }
  SUBCASE("shift invariance") {
    auto spec = patch({2, 2}, 0.8, 0.3, BoundaryKind::minus, 0.6, 9);
    auto g = exact_gibbs(spec);
    // Normalized weights of H + 17 must reproduce the same measure.
    double z = 0.0;
    std::vector<double> w(16);
    for (std::uint64_t b = 0; b < 16; ++b) {
      w[b] = std::exp(-0.8 * (hamiltonian(spins_from_bits(spec, b), spec) + 17.0));
      z += w[b];
    }
    for (std::uint64_t b = 0; b < 16; ++b) CHECK(std::abs(w[b] / z - g.prob[b]) < 1e-12);
  }
  SUBCASE("large beta does not overflow") {
    auto spec = patch({3, 3}, 16.0, 0.2, BoundaryKind::minus);
    auto g = exact_gibbs(spec);
    CHECK(std::isfinite(g.log_Z));
    CHECK(std::accumulate(g.prob.begin(), g.prob.end(), 0.0) == doctest::Approx(1.0));
  }
  SUBCASE("size cap") {
    auto spec = patch({3, 7}, 1.0, 0.0, BoundaryKind::plus);
    CHECK_THROWS_AS(exact_gibbs(spec), ResourceLimit);
  }
}

TEST_CASE("stochastic ordering of exact measures") {
  auto events = oracle::up_sets(4);
  REQUIRE(events.size() == 168);
  const BoundaryKind kinds[] = {BoundaryKind::minus, BoundaryKind::free, BoundaryKind::plus};
  for (std::uint64_t seed = 1; seed <= 4; ++seed)
    for (double beta : {0.5, 1.0, 2.0})
      for (int lo = 0; lo < 3; ++lo)
        for (int hi = lo; hi < 3; ++hi)
          for (auto [h1, h2] : {std::pair{0.0, 0.0}, std::pair{0.0, 0.4}, std::pair{0.3, 1.0}}) {
            auto low = patch({2, 2}, beta, h1, kinds[lo], 0.7, seed);
            auto high = patch({2, 2}, beta, h2, kinds[hi], 0.7, seed);
            double v = oracle::dominance_violation(exact_gibbs(low).prob, exact_gibbs(high).prob, events);
            CHECK(v < 1e-12);
          }
  // Sanity: reversing the order is detected.
  auto low = patch({2, 2}, 1.0, 0.0, BoundaryKind::minus);
  auto high = patch({2, 2}, 1.0, 0.0, BoundaryKind::plus);
  CHECK(oracle::dominance_violation(exact_gibbs(high).prob, exact_gibbs(low).prob, events) > 0.1);
}

TEST_CASE("exact_generator_gap") {
  SUBCASE("single vertex has gap 1") {
    for (double h : {0.0, 0.5, 3.0}) {
      auto rep = exact_generator_gap(patch({1, 1}, 1.0, h, BoundaryKind::plus));
      CHECK(rep.gap == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("beta = 0 product chain") {
    auto rep = exact_generator_gap(patch({2, 3}, 0.0, 0.0, BoundaryKind::plus));
    CHECK(rep.gap == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("two coupled vertices") {
    auto rep = exact_generator_gap(patch({1, 2}, 1.0, 0.0, BoundaryKind::free));
    CHECK(rep.gap == doctest::Approx(0.5378828427399901).epsilon(1e-10));
  }
  SUBCASE("three-site chain with mixed ends") {
    auto lat = std::make_shared<const Lattice>(Point{0, 0}, std::vector<int>{1, 5});
    auto reg = LatticeRegion::box(lat, {0, 1}, {1, 3});
    BoundaryCondition bc{{1, 0, 0, 0, -1}};
    auto spec = make_spec(gen_environment(reg, 1.0, 0), 0.7, 0.3, bc);
    auto rep = exact_generator_gap(spec);
    CHECK(rep.gap == doctest::Approx(0.5771800849477658).epsilon(1e-10));
  }
  SUBCASE("twelve sites via the iterative path") {
    auto rep = exact_generator_gap(patch({3, 4}, 0.5, 0.2, BoundaryKind::plus));
    CHECK(rep.gap == doctest::Approx(0.4509778947635592).epsilon(1e-8));
  }
  SUBCASE("structure and stationarity") {
    auto spec = patch({2, 3}, 1.2, 0.3, BoundaryKind::minus, 0.7, 5);
    auto rep = exact_generator_gap(spec);
    auto g = exact_gibbs(spec);
    CHECK(rep.row_sum_error < 1e-12);
    CHECK(rep.detailed_balance_error < 1e-12);
    CHECK(rep.gap > 0.0);
    for (std::size_t i = 0; i < g.prob.size(); ++i) CHECK(std::abs(rep.stationary[i] - g.prob[i]) < 1e-10);
  }
  SUBCASE("size cap") {
    CHECK_THROWS_AS(exact_generator_gap(patch({3, 5}, 1.0, 0.0, BoundaryKind::plus)), ResourceLimit);
  }
}

TEST_CASE("magnetization profile") {
  auto spec = patch({8, 8}, 1.0, 0.0, BoundaryKind::plus);
  Scales s = Scales::fixed(8, 2);
  SUBCASE("all plus / all minus") {
    for (const auto& b : magnetization_profile(make_spins(spec, 1), spec, s, 1.0))
      CHECK(b.value == doctest::Approx(1.0));
    auto minus = spec.with_boundary(BoundaryCondition::uniform(spec.lattice(), BoundaryKind::minus));
    for (const auto& b : magnetization_profile(make_spins(minus, -1), minus, s, 1.0))
      CHECK(b.value == doctest::Approx(0.0));
  }
  SUBCASE("half split") {
    // Region [-1, 7)^2 is exactly the boxes 0..3 per axis.
    auto lat = Lattice::cube(2, -2, 10);
    auto reg = LatticeRegion::box(lat, {-1, -1}, {8, 8});
    auto aligned = make_spec(gen_environment(reg, 1.0, 0), 1.0, 0.0,
                             BoundaryCondition::uniform(*lat, BoundaryKind::minus));
    Spins sp = make_spins(aligned, -1);
    for (auto v : reg.vertices())
      if (lat->coord(v, 0) >= 3) sp[v] = 1;
    double integral = 0.0;
    int interior = 0;
    for (const auto& b : magnetization_profile(sp, aligned, s, 1.0)) {
      if (!b.interior) continue;
      ++interior;
      CHECK(b.value == doctest::Approx(b.index[0] >= 2 ? 1.0 : 0.0));
      integral += b.value * (2.0 / 8) * (2.0 / 8);
    }
    CHECK(interior == 16);
    CHECK(integral == doctest::Approx(0.5 * 64 * (1.0 / 64)));
  }
  CHECK_THROWS_AS(magnetization_profile(make_spins(spec, 1), spec, s, 0.0), InvalidParameter);
}
