#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dilute/error.hpp"
#include "dilute/harness.hpp"

using namespace dilute;

namespace {

constexpr double kPi = 3.14159265358979323846;

ExperimentConfig parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.lattice = 16;
  config.beta = 1.2;
  config.h = {0.8, 0.5};
  config.seeds = ExperimentConfig::default_seeds(6);
  config.t_cap = 500;
  config.threads = 2;
  config.bootstrap = 200;
  return config;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dilute_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing, validation and round trip") {
  const auto config = parse_text(R"(
# catalyst run
[experiment]
dim = 2
lattice = 48        # side
beta = 1.5
h = [0.3]
theta = "pi/2"
b_plant = 1.5B_root, 0.5 * B_c, 2
seed_base = 10
seeds = 3
boundary = 'minus'
t_cap = 2e3
out = "runs/cat"
)");
  CHECK(config.lattice == 48);
  CHECK(config.beta == 1.5);
  REQUIRE(config.h.size() == 1);
  CHECK(config.theta == doctest::Approx(kPi / 2).epsilon(1e-15));
  CHECK(config.seeds == std::vector<std::uint64_t>{10, 11, 12});
  REQUIRE(config.b_plant.size() == 3);
  CHECK(config.b_plant[0].unit == PlantSize::Unit::B_root);
  CHECK(config.b_plant[1].unit == PlantSize::Unit::B_c);
  CHECK(config.b_plant[1].factor == 0.5);
  CHECK(config.b_plant[2].unit == PlantSize::Unit::absolute);
  CHECK(config.t_cap == 2000.0);
  CHECK(config.out == "runs/cat");

  const auto again = parse_text(config.to_text());
  CHECK(again.to_text() == config.to_text());
  CHECK(again.hash() == config.hash());
  auto other = config;
  other.beta = 1.6;
  CHECK(other.hash() != config.hash());

  CHECK(parse_text("seeds = [4, 2, 9]").seeds == std::vector<std::uint64_t>{4, 2, 9});
  CHECK(parse_text("theta = 2pi").theta == doctest::Approx(2 * kPi));

  CHECK_THROWS_AS(parse_text("colour = red"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("beta = fast"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("lattice = 3.5"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("p = 1.5"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("theta = 4"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("h = [0.3, -0.1]"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("boundary = sideways"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("beta = 1\nbeta = 2"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("no equals sign"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("scale_N = 6\nscale_K = 4"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("seeds = 0"), InvalidParameter);
  CHECK_THROWS_AS(parse_text("tension = bogus:1"), InvalidParameter);
  CHECK_THROWS_AS(PlantSize::parse("-1B_c"), InvalidParameter);
}

TEST_CASE("resolved physics inputs") {
  ExperimentConfig config;
  config.beta = 1.5;
  CHECK((*resolve_tension(config))(std::vector<double>{1.0, 0.0}) ==
        doctest::Approx(onsager_tension(1.5)));
  CHECK(resolve_m_star(config) == doctest::Approx(onsager_magnetization(1.5)));
  config.m_star = "0.9";
  CHECK(resolve_m_star(config) == 0.9);
  config.beta = 0.5;
  config.m_star = "onsager";
  CHECK_THROWS_AS(resolve_m_star(config), InvalidParameter);
  const auto scales = resolve_scales(config, 0.3);
  CHECK(scales.N == 3);
  CHECK(scales.K == 1);
  config.scale_N = 8;
  config.scale_K = 2;
  CHECK(resolve_scales(config, 0.3).N == 8);
}

TEST_CASE("statistics helpers") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(quantile({0, 10}, 0.25) == 2.5);
  CHECK(std::isnan(median({})));

  // Binomial(10, 1/2) upper tail at 8: (45 + 10 + 1) / 1024.
  CHECK(sign_test_p(8, 10) == doctest::Approx(56.0 / 1024).epsilon(1e-12));
  CHECK(sign_test_p(10, 10) == doctest::Approx(1.0 / 1024).epsilon(1e-12));
  CHECK(sign_test_p(0, 10) == 1.0);
  CHECK(sign_test_p(0, 0) == 1.0);
  CHECK(sign_test_p(46, 48) < 1e-10);

  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  CHECK(ols_slope(x, y) == doctest::Approx(2.0));
  CHECK(std::isnan(ols_slope(std::vector<double>{1.0}, std::vector<double>{1.0})));

  auto med = [](const std::vector<double>& v) { return median(v); };
  const std::vector<double> constant(30, 4.0);
  const auto flat = bootstrap_ci(constant, med, 500, 1);
  CHECK(flat.lo == 4.0);
  CHECK(flat.hi == 4.0);
  std::vector<double> spread;
  for (int i = 0; i < 101; ++i) spread.push_back(i);
  const auto a = bootstrap_ci(spread, med, 1000, 7);
  const auto b = bootstrap_ci(spread, med, 1000, 7);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo < 50);
  CHECK(a.hi > 50);
  CHECK(a.hi - a.lo < 40);
}

TEST_CASE("worker pool") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 1000);
  parallel_for(0, 4, [](std::size_t) { FAIL("no jobs expected"); });
  CHECK_THROWS_AS(parallel_for(50, 3,
                               [](std::size_t i) {
                                 if (i == 17) throw InvariantViolation("boom");
                               }),
                  InvariantViolation);
}

TEST_CASE("records and environment snapshots persist") {
  RunRecord record;
  record.experiment = "catalyst";
  record.config_hash = "0123456789abcdef";
  record.seed = 42;
  record.arm = "carved";
  record.h = 0.3;
  record.b = 0.87953;
  record.hit = {1234.5678901234567, false};
  record.outcome = "hit";
  record.env_ref = "feedface";
  record.series = {{0.0, 0.0}, {0.1, 1.0 / 3.0}};
  record.occupation = {1, 0, 0, 1};
  const auto line = to_json_line(record);
  CHECK(to_json_line(parse_json_line(line)) == line);
  CHECK(parse_json_line(line).hit.time == record.hit.time);

  const auto dir = scratch_dir("records");
  std::filesystem::create_directories(dir);
  append_jsonl(dir / "runs.jsonl", {record});
  append_jsonl(dir / "runs.jsonl", {record, record});
  CHECK(read_jsonl(dir / "runs.jsonl").size() == 3);

  auto lattice = Lattice::cube(2, -1, 8);
  auto region = LatticeRegion::box(lattice, {0, 0}, {6, 6});
  const auto env = gen_environment(region, 0.6, 3);
  const auto other = gen_environment(region, 0.6, 4);
  const auto hash = store_environment(env, dir / "env");
  CHECK(hash == environment_hash(env));
  CHECK(store_environment(env, dir / "env") == hash);
  CHECK(store_environment(other, dir / "env") != hash);
  std::ifstream in(dir / "env" / ("env-" + hash + ".bin"), std::ios::binary);
  CHECK(environment_hash(read_snapshot(in)) == hash);
  std::filesystem::remove_all(dir);
}

TEST_CASE("nucleation scan") {
  auto config = small_config();
  SUBCASE("replay and per-noise monotonicity in h") {
    for (std::uint64_t seed : config.seeds) {
      const auto strong = nucleation_run(config, 0.8, seed);
      const auto weak = nucleation_run(config, 0.5, seed);
      CHECK(to_json_line(strong) == to_json_line(nucleation_run(config, 0.8, seed)));
      CHECK(strong.hit.time <= weak.hit.time);
      CHECK(strong.env_ref == weak.env_ref);
    }
  }
  SUBCASE("scan statistics and thread independence") {
    const auto report = nucleation_scan(config);
    REQUIRE(report.cells.size() == 2);
    CHECK(report.records.size() == 12);
    CHECK(report.cells[0].median <= report.cells[1].median);
    CHECK(report.cells[0].q1 <= report.cells[0].median);
    CHECK(report.cells[0].median <= report.cells[0].q3);
    CHECK(report.fitted_cells == 2);
    CHECK(std::isfinite(report.slope));
    CHECK(report.slope_ci.lo <= report.slope);
    CHECK(report.slope <= report.slope_ci.hi);
    auto serial = config;
    serial.threads = 1;
    const auto again = nucleation_scan(serial);
    for (std::size_t i = 0; i < report.records.size(); ++i)
      CHECK(to_json_line(again.records[i]) == to_json_line(report.records[i]));
    CHECK(again.slope == report.slope);
  }
  SUBCASE("fast mixing above the critical temperature") {
    config.beta = 0.4;
    config.h = {0.5, 0.25};
    const auto report = nucleation_scan(config);
    for (const auto& cell : report.cells) {
      CHECK(cell.censored == 0);
      CHECK(cell.median < 10.0);
    }
  }
  SUBCASE("zero cap censors every run") {
    config.t_cap = 0.0;
    config.window = 0.5;
    const auto report = nucleation_scan(config);
    for (const auto& cell : report.cells) {
      CHECK(cell.censored == cell.runs);
      CHECK(cell.median_censored);
    }
    CHECK(report.fitted_cells == 0);
    CHECK(std::isnan(report.slope));
  }
  SUBCASE("series recording") {
    config.series_dt = 0.5;
    const auto record = nucleation_run(config, 0.8, 1);
    REQUIRE(record.series.size() >= 2);
    CHECK(record.series.front().second == 0.0);
    for (std::size_t i = 1; i < record.series.size(); ++i)
      CHECK(record.series[i].first == doctest::Approx(0.5 * static_cast<double>(i)));
  }
}

TEST_CASE("catalyst comparison") {
  ExperimentConfig config;
  config.lattice = 24;
  config.beta = 1.5;
  config.h = {0.3};
  config.seeds = ExperimentConfig::default_seeds(8);
  config.t_cap = 300;
  config.bootstrap = 200;

  SUBCASE("setup and pairing") {
    const auto setup = catalyst_setup(config);
    CHECK(setup.carved_edges > 0);
    CHECK(setup.carved.carved.size() == setup.carved_edges);
    CHECK(setup.plain.carved.empty());
    CHECK(environment_hash(setup.plain) != environment_hash(setup.carved));
    CHECK(setup.mouth.size() > 0);
    const auto a = catalyst_run(config, setup, true, 5);
    CHECK(to_json_line(a) == to_json_line(catalyst_run(config, setup, true, 5)));
    const auto report = catalyst_ab(config);
    CHECK(report.pairs == 8);
    CHECK(report.carved_faster + report.ties + report.carved_slower == 8);
    CHECK(report.environments.size() == 2);
    CHECK(!report.verdict.empty());
  }
  SUBCASE("full angle carves nothing so the arms coincide") {
    config.theta = 2 * kPi;
    config.b_max = 0.5;
    const auto report = catalyst_ab(config);
    CHECK(report.carved_edges == 0);
    CHECK(report.ties == report.pairs);
    CHECK(report.median_ratio == 1.0);
    CHECK_FALSE(report.effect);
  }
  SUBCASE("a dominant field makes both arms immediate") {
    config.h = {5.0 / 1.5};
    config.b_max = 1.0;
    config.scale_N = 4;
    config.scale_K = 1;
    const auto report = catalyst_ab(config);
    CHECK(report.median_plain < 2.0);
    CHECK(report.median_ratio > 0.5);
    CHECK(report.median_ratio < 2.0);
  }
  SUBCASE("catalyst that does not fit") {
    config.lattice = 6;
    config.b_max = 6.0;
    CHECK_THROWS_AS(catalyst_ab(config), OutOfBounds);
  }
}

TEST_CASE("planted droplets") {
  ExperimentConfig config;
  config.lattice = 40;
  config.beta = 1.5;
  config.h = {0.3};
  config.seeds = ExperimentConfig::default_seeds(6);
  config.t_cap = 400;
  const double m_star = resolve_m_star(config);

  const auto big = plant_run(config, 3.7, m_star, 1);
  CHECK(big.outcome == "grew");
  CHECK(to_json_line(big) == to_json_line(plant_run(config, 3.7, m_star, 1)));
  const auto baseline = plant_run(config, 0.0, m_star, 1);
  CHECK(baseline.outcome != "shrank");

  config.b_plant = {PlantSize{0.0, PlantSize::Unit::absolute}, PlantSize{0.5, PlantSize::Unit::B_c}};
  const auto report = plant_and_grow(config);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].shrank == 0);
  CHECK(report.rows[1].b == doctest::Approx(0.5 * report.energetics.B_c));
  CHECK(report.rows[1].grew + report.rows[1].shrank <= report.rows[1].runs);
  CHECK(report.rows[0].grow_fraction + report.rows[0].shrink_fraction <= 1.0);

  config.lattice = 10;
  CHECK_THROWS_AS(plant_run(config, 3.7, m_star, 1), OutOfBounds);
}

TEST_CASE("directed occupation") {
  // 3x3 cells, three slices; cells indexed row-major.
  std::vector<std::uint8_t> occupation(27, 0);
  auto set = [&](int slice, int x, int y) { occupation[slice * 9 + x * 3 + y] = 1; };
  set(1, 1, 1);
  set(1, 0, 2);  // occupied but not reachable from the origin in one step
  set(2, 2, 2);
  set(2, 0, 0);
  const auto reach = directed_reach(occupation, 3, 2, 3);
  CHECK(reach[0][0] == 1);
  CHECK(std::count(reach[0].begin(), reach[0].end(), 1) == 1);
  CHECK(reach[1][4] == 1);
  CHECK(reach[1][2] == 0);
  CHECK(reach[2][8] == 1);
  CHECK(reach[2][0] == 1);
  CHECK_THROWS_AS(directed_reach(occupation, 3, 2, 2), InvalidParameter);
}

TEST_CASE("conductive grid") {
  ExperimentConfig config;
  config.beta = 1.5;
  config.h = {0.3};
  config.seeds = ExperimentConfig::default_seeds(2);
  config.cells = 3;
  config.t_cap = 40;
  config.period = 50;
  const auto report = conductive_grid_experiment(config);
  CHECK(report.slices == 1);
  CHECK(report.spanning == 0);
  for (const auto& record : report.records) CHECK(record.occupation.size() == 9);

  config.period = 20;
  const auto record = grid_run(config, 3);
  CHECK(record.occupation.size() == 27);
  CHECK(to_json_line(record) == to_json_line(grid_run(config, 3)));

  config.cells = 2;
  CHECK_THROWS_AS(conductive_grid_experiment(config), InvalidParameter);
}

TEST_CASE("reports are written to disk") {
  auto config = small_config();
  config.seeds = ExperimentConfig::default_seeds(3);
  const auto dir = scratch_dir("reports");
  save_report(nucleation_scan(config), dir);
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "fit.csv"));
  CHECK(read_jsonl(dir / "runs.jsonl").size() == 6);
  std::ifstream summary(dir / "summary.csv");
  std::string header;
  std::getline(summary, header);
  CHECK(header.rfind("h,runs,censored,median", 0) == 0);
  std::filesystem::remove_all(dir);
}
