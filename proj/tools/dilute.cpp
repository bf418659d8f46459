// Command-line front end: environments, Wulff geometry, exact oracles, FK
// sampling, Glauber runs, coarse graining and the end-to-end experiments.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "dilute/coarse_grain.hpp"
#include "dilute/error.hpp"
#include "dilute/fk.hpp"
#include "dilute/gibbs.hpp"
#include "dilute/glauber.hpp"
#include "dilute/harness.hpp"
#include "dilute/lattice.hpp"
#include "dilute/wulff.hpp"

using namespace dilute;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ModelOptions {
  int dim = 2;
  int size = 8;
  double p = 1.0;
  std::uint64_t seed = 1;
  double beta = 1.0;
  double h = 0.0;
  std::string boundary = "minus";
};

void add_model_options(CLI::App& app, ModelOptions& o) {
  app.add_option("--dim", o.dim, "lattice dimension")->check(CLI::IsMember({2, 3}));
  app.add_option("--size", o.size, "side of the box region")->check(CLI::PositiveNumber);
  app.add_option("--p", o.p, "edge retention probability")->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--beta", o.beta, "inverse temperature")->check(CLI::PositiveNumber);
  app.add_option("--field", o.h, "external field h");
  app.add_option("--boundary", o.boundary, "plus, minus, free or wired");
}

// Box [0, size)^d inside a one-site rim, diluted unless p = 1.
GibbsSpec box_spec(const ModelOptions& o) {
  auto lattice = Lattice::cube(o.dim, -1, o.size + 2);
  auto region = LatticeRegion::box(lattice, Point(o.dim, 0), std::vector<int>(o.dim, o.size));
  auto env = o.p >= 1.0 ? uniform_environment(region) : gen_environment(region, o.p, o.seed);
  return make_spec(std::move(env), o.beta, o.h,
                   BoundaryCondition::uniform(*lattice, parse_boundary_kind(o.boundary)));
}

double magnetization(const Spins& spins, const LatticeRegion& region) {
  double sum = 0.0;
  for (auto v : region.vertices()) sum += spins[v];
  return region.empty() ? 0.0 : sum / static_cast<double>(region.size());
}

std::string spin_picture(const Spins& spins, const GibbsSpec& spec) {
  std::string out;
  const auto& lattice = spec.lattice();
  if (lattice.dim() != 2) return out;
  for (int x = 0; x < lattice.extent()[0]; ++x) {
    for (int y = 0; y < lattice.extent()[1]; ++y) {
      const Point p{lattice.lo()[0] + x, lattice.lo()[1] + y};
      const auto v = lattice.index(p);
      out += !spec.region.contains(v) ? ' ' : spins[v] > 0 ? '+' : '-';
    }
    out += '\n';
  }
  return out;
}

json interval(const Interval& i) { return json::array({i.lo, i.hi}); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dilute: metastability experiments for the dilute Ising model"};
  app.require_subcommand(1);

  // ------------------------------------------------------------------ env
  ModelOptions env_opts;
  std::string env_out;
  double carve_theta = 0.0, carve_b = 1.0;
  int carve_N = 4, carve_K = 1;
  auto* env_cmd = app.add_subcommand("env", "generate a diluted environment and its snapshot");
  add_model_options(*env_cmd, env_opts);
  env_cmd->add_option("--out", env_out, "snapshot file to write");
  env_cmd->add_option("--carve-theta", carve_theta, "carve a catalyst of this cone angle at the centre");
  env_cmd->add_option("--carve-b", carve_b, "catalyst size (macroscopic)");
  env_cmd->add_option("--scale-N", carve_N, "macroscopic scale N");
  env_cmd->add_option("--scale-K", carve_K, "mesoscopic scale K");
  env_cmd->callback([&] {
    const int lo = -env_opts.size / 2;
    auto lattice = Lattice::cube(env_opts.dim, lo - 1, env_opts.size + 2);
    auto region = LatticeRegion::box(lattice, Point(env_opts.dim, lo), std::vector<int>(env_opts.dim, env_opts.size));
    auto env = env_opts.p >= 1.0 ? uniform_environment(region) : gen_environment(region, env_opts.p, env_opts.seed);
    std::size_t carved = 0;
    if (carve_theta > 0.0) {
      const auto tension = std::make_shared<IsotropicTension>(env_opts.dim, onsager_tension(env_opts.beta));
      const WulffShape shape(tension, carve_theta, carve_b);
      auto result = carve_catalyst(env, shape, ConeBody(env_opts.dim, carve_theta), Point(env_opts.dim, 0),
                                   Scales::fixed(carve_N, carve_K));
      env = std::move(result.env);
      carved = result.carved_count;
    }
    std::size_t edges = 0, open = 0;
    for (auto e : env.region.internal_edges()) {
      ++edges;
      open += env.J(e);
    }
    json out{{"sites", env.region.size()}, {"internal_edges", edges}, {"open_edges", open},
             {"carved", carved}, {"hash", environment_hash(env)}};
    if (!env_out.empty()) {
      std::ofstream file(env_out, std::ios::binary);
      write_snapshot(env, file);
      out["snapshot"] = env_out;
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ wulff
  std::string wulff_mode, tension_text = "iso:1";
  double w_theta = 2 * kPi, w_beta = 1.0, w_m = 1.0, w_p = 0.5, w_cdil = 0.0;
  int w_points = 32;
  auto* wulff_cmd = app.add_subcommand("wulff", "droplet energetics and the cone-angle optimum");
  wulff_cmd->add_option("mode", wulff_mode, "curve, critical, lambda2 or opt-theta")
      ->required()
      ->check(CLI::IsMember({"curve", "critical", "lambda2", "opt-theta"}));
  wulff_cmd->add_option("--tension", tension_text, "iso:t, l1aniso:t or onsager");
  wulff_cmd->add_option("--theta", w_theta, "cone angle");
  wulff_cmd->add_option("--beta", w_beta, "inverse temperature")->check(CLI::PositiveNumber);
  wulff_cmd->add_option("--m-star", w_m, "spontaneous magnetization (0: Onsager)");
  wulff_cmd->add_option("--p", w_p, "edge retention probability for the dilution cost");
  wulff_cmd->add_option("--c-dil", w_cdil, "dilution constant for lambda2");
  wulff_cmd->add_option("--points", w_points, "grid points")->check(CLI::PositiveNumber);
  wulff_cmd->callback([&] {
    const auto tension = tension_text == "onsager"
                             ? std::make_shared<IsotropicTension>(2, onsager_tension(w_beta))
                             : parse_tension(tension_text, 2, w_beta);
    const double m = w_m > 0.0 ? w_m : onsager_magnetization(w_beta);
    json out;
    if (wulff_mode == "opt-theta") {
      std::vector<double> grid;
      for (int i = 1; i <= w_points; ++i) grid.push_back(kPi * i / (w_points + 1));
      const auto opt = optimize_theta(*tension, w_beta, m, w_p, grid);
      out = {{"theta", opt.theta}, {"lambda2", opt.lambda2}, {"lambda2_full", opt.lambda2_full},
             {"ratio", opt.ratio}, {"E_c_exponent", opt.E_c_exponent}};
      for (const auto& pt : opt.grid)
        out["grid"].push_back({{"theta", pt.theta}, {"E_c", pt.E_c}, {"cost", pt.cost}, {"lambda2", pt.lambda2}});
    } else {
      const auto e = critical_values(*tension, w_theta, w_beta, m);
      if (wulff_mode == "critical") {
        out = {{"F1", e.F1}, {"B_c", e.B_c}, {"B_root", e.B_root}, {"E_c", e.E_c}, {"diameter_c", e.diameter_c}};
      } else if (wulff_mode == "lambda2") {
        out = {{"E_c", e.E_c}, {"lambda2", lambda2(w_theta, e.E_c, w_cdil, 2)}};
      } else {
        for (const auto& [b, energy] : energy_curve(*tension, w_theta, w_beta, m, default_b_grid(e, w_points)))
          out.push_back({b, energy});
      }
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ oracle
  ModelOptions oracle_opts;
  oracle_opts.size = 3;
  bool oracle_gap = false;
  auto* oracle_cmd = app.add_subcommand("oracle", "exact Gibbs enumeration on a tiny box");
  add_model_options(*oracle_cmd, oracle_opts);
  oracle_cmd->add_flag("--gap", oracle_gap, "also diagonalize the heat-bath generator");
  oracle_cmd->callback([&] {
    const auto spec = box_spec(oracle_opts);
    const auto exact = exact_gibbs(spec);
    double mean = 0.0;
    for (std::uint64_t bits = 0; bits < exact.prob.size(); ++bits)
      mean += exact.prob[bits] * magnetization(spins_from_bits(spec, bits), spec.region);
    json out{{"sites", spec.region.size()}, {"log_Z", exact.log_Z}, {"mean_magnetization", mean}};
    if (oracle_gap) {
      const auto report = exact_generator_gap(spec);
      out["gap"] = report.gap;
      out["detailed_balance_error"] = report.detailed_balance_error;
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ fk
  ModelOptions fk_opts;
  std::string fk_mode;
  std::size_t sweeps = 1000;
  auto* fk_cmd = app.add_subcommand("fk", "Edwards-Sokal checks, Swendsen-Wang and surface tension");
  fk_cmd->add_option("mode", fk_mode, "es, sw or tau")->required()->check(CLI::IsMember({"es", "sw", "tau"}));
  add_model_options(*fk_cmd, fk_opts);
  fk_cmd->add_option("--sweeps", sweeps, "Swendsen-Wang sweeps");
  fk_cmd->callback([&] {
    json out;
    if (fk_mode == "es") {
      const auto report = es_equivalence_check(box_spec(fk_opts));
      out = {{"max_marginal_error", report.max_marginal_error}, {"count_formula_holds", report.count_formula_holds},
             {"omega_states", report.omega_states}, {"support_size", report.support_size}};
    } else if (fk_mode == "sw") {
      const auto spec = box_spec(fk_opts);
      CounterRng rng(fk_opts.seed);
      Spins spins = make_spins(spec, -1);
      double sum = 0.0;
      for (std::size_t s = 0; s < sweeps; ++s) {
        spins = sw_step(spins, spec, rng).second;
        sum += magnetization(spins, spec.region);
      }
      out = {{"mean_magnetization", sum / static_cast<double>(std::max<std::size_t>(sweeps, 1))},
             {"final", spin_picture(spins, spec)}};
    } else {
      std::vector<double> normal(fk_opts.dim, 0.0);
      normal[0] = 1.0;
      std::vector<int> lo(fk_opts.dim, 0), extent(fk_opts.dim, fk_opts.size);
      lo[0] = -fk_opts.size / 2;
      const auto strip = make_tau_strip(lo, extent, normal, fk_opts.beta, fk_opts.p, fk_opts.seed, fk_opts.size);
      const auto mc = tau_mc(strip, sweeps, fk_opts.seed);
      out = {{"tau_mc", mc.tau}, {"std_error", mc.std_error}, {"no_event", mc.no_event}};
      if (strip.plus.region.size() <= kExactGibbsCap) out["tau_exact"] = tau_exact(strip);
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ glauber
  ModelOptions gl_opts;
  std::string gl_mode;
  double t_cap = 1000.0, threshold = 0.5;
  auto* gl_cmd = app.add_subcommand("glauber", "hitting times, perfect samples and relaxation rates");
  gl_cmd->add_option("mode", gl_mode, "hit, cftp or gap")->required()->check(CLI::IsMember({"hit", "cftp", "gap"}));
  add_model_options(*gl_cmd, gl_opts);
  gl_cmd->add_option("--t-cap", t_cap, "time cap");
  gl_cmd->add_option("--threshold", threshold, "plus fraction that ends a hitting run");
  gl_cmd->callback([&] {
    const auto spec = box_spec(gl_opts);
    json out;
    if (gl_mode == "hit") {
      PlusFraction predicate(spec.region, threshold);
      const auto hit = hitting_time(spec, make_spins(spec, -1), predicate, GraphicalNoise(gl_opts.seed), t_cap);
      out = {{"time", hit.time}, {"censored", hit.censored}};
    } else if (gl_mode == "cftp") {
      const auto sample = cftp_sample(spec, gl_opts.seed);
      out = {{"window", sample.window}, {"magnetization", magnetization(sample.sample, spec.region)},
             {"sample", spin_picture(sample.sample, spec)}};
    } else {
      const auto gap = gap_estimate(spec, gl_opts.seed);
      out = {{"gap", gap.gap}, {"std_error", gap.std_error}, {"wide", gap.wide}};
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ cg
  ModelOptions cg_opts;
  cg_opts.size = 16;
  cg_opts.beta = 1.5;
  std::string cg_mode;
  int K = 4;
  double eps = 0.5, cg_m = 0.0;
  std::size_t cg_sweeps = 50;
  auto* cg_cmd = app.add_subcommand("cg", "coarse-grain a Swendsen-Wang sample with an interface boundary");
  cg_cmd->add_option("mode", cg_mode, "classify, labels or flow")
      ->required()
      ->check(CLI::IsMember({"classify", "labels", "flow"}));
  add_model_options(*cg_cmd, cg_opts);
  cg_cmd->add_option("--K", K, "mesoscopic box side")->check(CLI::PositiveNumber);
  cg_cmd->add_option("--eps", eps, "density tolerance");
  cg_cmd->add_option("--m-star", cg_m, "spontaneous magnetization (0: Onsager)");
  cg_cmd->add_option("--sweeps", cg_sweeps, "Swendsen-Wang sweeps before classifying");
  cg_cmd->callback([&] {
    auto spec = box_spec(cg_opts);
    auto lattice = spec.region.lattice_ptr();
    // Shift the interface to the middle of the box.
    std::vector<std::int8_t> zeta(lattice->size());
    for (std::size_t v = 0; v < lattice->size(); ++v) zeta[v] = 2 * lattice->coord(v, 0) >= cg_opts.size ? 1 : -1;
    spec = spec.with_boundary(BoundaryCondition::from_spins(std::move(zeta)));
    CounterRng rng(cg_opts.seed);
    Spins spins = spec.boundary.zeta;  // start from the interface itself
    EdgeConfig omega = EdgeConfig::closed(spec.lattice());
    for (std::size_t s = 0; s < std::max<std::size_t>(cg_sweeps, 1); ++s)
      std::tie(omega, spins) = sw_step(spins, spec, rng);
    const double m = cg_m > 0.0 ? cg_m : onsager_magnetization(cg_opts.beta);
    const auto classification = classify_boxes(omega, spec, K, eps, m);
    json out{{"boxes", classification.boxes.size()}, {"good", classification.good_count()}};
    if (cg_mode == "classify") {
      std::map<std::string, std::size_t> faults;
      for (const auto& box : classification.boxes) ++faults[to_string(box.fault)];
      out["faults"] = faults;
    } else {
      const auto labels = phase_labels(classification, spins);
      out["plus"] = labels.count(1);
      out["minus"] = labels.count(-1);
      out["neutral"] = labels.count(0);
      if (cg_mode == "flow") {
        std::vector<Point> boxes;
        for (const auto& box : classification.boxes) boxes.push_back(box.index);
        const auto flow = max_box_flow(labels, boxes);
        out["flow"] = flow.flow;
      } else {
        for (const auto& [index, label] : labels.label) out["labels"].push_back({index, label});
      }
    }
    std::cout << out.dump(2) << '\n';
  });

  // ------------------------------------------------------------------ exp
  std::string exp_mode, config_path, out_dir;
  auto* exp_cmd = app.add_subcommand("exp", "run an experiment from a config file");
  exp_cmd->add_option("mode", exp_mode, "nucleate, catalyst, grow or grid")
      ->required()
      ->check(CLI::IsMember({"nucleate", "catalyst", "grow", "grid"}));
  exp_cmd->add_option("--config", config_path, "flat key = value config")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", out_dir, "output directory (overrides the config)");
  exp_cmd->callback([&] {
    auto config = load_config(config_path);
    if (!out_dir.empty()) config.out = out_dir;
    json out{{"config_hash", config.hash()}};
    if (exp_mode == "nucleate") {
      const auto report = nucleation_scan(config);
      for (const auto& c : report.cells)
        out["cells"].push_back({{"h", c.h}, {"median", c.median}, {"q1", c.q1}, {"q3", c.q3},
                                {"median_ci", interval(c.median_ci)}, {"censored", c.censored}, {"runs", c.runs}});
      out["slope"] = report.slope;
      out["slope_ci"] = interval(report.slope_ci);
      if (!config.out.empty()) save_report(report, config.out);
    } else if (exp_mode == "catalyst") {
      const auto r = catalyst_ab(config);
      out.update({{"B_max", r.B_max}, {"carved_edges", r.carved_edges}, {"pairs", r.pairs},
                  {"not_larger_fraction", r.not_larger_fraction}, {"sign_p", r.sign_p},
                  {"median_plain", r.median_plain}, {"median_carved", r.median_carved},
                  {"median_ratio", r.median_ratio}, {"ratio_ci", interval(r.ratio_ci)},
                  {"effect", r.effect}, {"verdict", r.verdict}});
      if (!config.out.empty()) save_report(r, config.out);
    } else if (exp_mode == "grow") {
      const auto r = plant_and_grow(config);
      out.update({{"m_star", r.m_star}, {"B_c", r.energetics.B_c}, {"B_root", r.energetics.B_root}});
      for (const auto& row : r.rows)
        out["rows"].push_back({{"b_plant", row.size.text()}, {"b", row.b}, {"grew", row.grew},
                               {"shrank", row.shrank}, {"runs", row.runs}, {"p_grow", row.p_grow},
                               {"p_shrink", row.p_shrink}});
      if (!config.out.empty()) save_report(r, config.out);
    } else {
      const auto r = conductive_grid_experiment(config);
      out.update({{"cells", r.cells}, {"cell_side", r.cell_side}, {"period", r.period},
                  {"spanning", r.spanning}, {"runs", r.runs}, {"front_speed", r.front_speed},
                  {"mean_occupation", r.mean_occupation}});
      if (!config.out.empty()) save_report(r, config.out);
    }
    std::cout << out.dump(2) << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
