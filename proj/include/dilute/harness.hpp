#pragma once

// End-to-end experiments on top of the dynamics: nucleation scans, paired
// catalyst comparisons, planted-droplet controls and rescaled growth grids,
// with their statistics, persistence and a small worker pool.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dilute/glauber.hpp"
#include "dilute/wulff.hpp"

namespace dilute {

/// A planted size: an absolute macroscopic b, or a multiple of B_c or B_root.
struct PlantSize {
  enum class Unit { absolute, B_c, B_root };
  double factor = 0.0;
  Unit unit = Unit::absolute;

  static PlantSize parse(const std::string& text);  // "2.5", "1.5B_root", "0.5B_c"
  std::string text() const;
};

struct ExperimentConfig {
  int dim = 2;
  int lattice = 64;  // side of the region Λ
  double p = 1.0;
  std::uint64_t env_seed = 1;
  double beta = 1.2;
  std::vector<double> h{0.5, 0.35, 0.25};
  std::string boundary = "minus";
  double theta = 3.14159265358979323846 / 2.0;
  double b_min = 0.0;  // planted size of the growth grid; 0 means 1.5 B_root
  double b_max = 0.0;  // catalyst size; 0 means catalyst_size()
  std::vector<PlantSize> b_plant{{1.5, PlantSize::Unit::B_root}, {0.5, PlantSize::Unit::B_c}};
  std::vector<std::uint64_t> seeds = default_seeds(20);
  double t_cap = 1e4;
  double threshold = 0.5;
  double window = 1.0;    // central window side as a fraction of the lattice
  double mouth = 2.0;     // catalyst stop window W_θ(mouth · B_max)
  double grow_window = 2.0;  // growth window W_2π(grow_window · b_plant)
  std::string tension = "onsager";  // or "iso:t" / "l1aniso:t"
  std::string m_star = "onsager";   // "onsager", "measure" or a number
  std::size_t m_star_samples = 400;
  int m_star_box = 9;
  int cells = 5;
  int cell_side = 0;  // sites; 0 derives it from the planted droplet
  double period = 0.0;  // cell period T; 0 means t_cap / (2 cells)
  int scale_N = 0;      // 0 derives N and K from h
  int scale_K = 0;
  unsigned threads = 0;  // 0 means hardware concurrency
  double series_dt = 0.0;  // record the stop observable every series_dt
  std::size_t bootstrap = 1000;
  std::string out;

  static std::vector<std::uint64_t> default_seeds(std::size_t count, std::uint64_t base = 1);

  /// Throws InvalidParameter on any value outside its domain.
  void validate() const;
  /// Canonical key = value text; parse(to_text()) round-trips.
  std::string to_text() const;
  /// Hex FNV-1a of to_text().
  std::string hash() const;
};

/// Flat `key = value` document: '#' comments, optional quotes, lists as
/// [a, b, c] or comma-separated. `seeds` accepts a count (starting at
/// `seed_base`) or a list. Unknown keys and malformed values throw
/// InvalidParameter; the result is validated.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Surface tension and m* named by the config at its β.
std::shared_ptr<const SurfaceTension> resolve_tension(const ExperimentConfig& config);
double resolve_m_star(const ExperimentConfig& config);
Scales resolve_scales(const ExperimentConfig& config, double h);

struct RunRecord {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string arm;  // "plain"/"carved", "b=<text>", ...
  double h = 0.0;
  double b = 0.0;
  HitResult hit;
  std::string outcome;  // "hit"/"censored", "grew"/"shrank"/"undecided", ...
  std::string env_ref;  // content hash of the environment snapshot
  std::vector<std::pair<double, double>> series;
  std::vector<std::uint8_t> occupation;  // grid runs: slices × cells, row major
};

std::string to_json_line(const RunRecord& record);
RunRecord parse_json_line(const std::string& line);
void append_jsonl(const std::filesystem::path& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_jsonl(const std::filesystem::path& path);

/// Hex FNV-1a of the snapshot bytes.
std::string environment_hash(const Environment& env);
/// Writes env-<hash>.bin under `dir` unless present; returns the hash.
std::string store_environment(const Environment& env, const std::filesystem::path& dir);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Runs job(0..n-1) on `threads` workers (0: hardware concurrency); the
/// first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

double median(std::vector<double> values);
/// Linear interpolation between order statistics, q in [0, 1].
double quantile(std::vector<double> values, double q);
/// Percentile bootstrap interval of `statistic` over resamples of `values`.
Interval bootstrap_ci(const std::vector<double>& values,
                      const std::function<double(const std::vector<double>&)>& statistic,
                      std::size_t resamples, std::uint64_t seed, double level = 0.95);
/// P(X >= successes) for X ~ Binomial(trials, 1/2).
double sign_test_p(std::size_t successes, std::size_t trials);
/// Least-squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);

struct NucleationCell {
  double h = 0.0;
  std::size_t runs = 0;
  std::size_t censored = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  Interval median_ci;
  bool median_censored = false;  // at least half the runs hit t_cap
};

struct NucleationReport {
  std::vector<NucleationCell> cells;
  std::size_t fitted_cells = 0;
  double slope = 0.0;  // of log median T against h^-(d-1); NaN with < 2 cells
  Interval slope_ci;
  std::vector<RunRecord> records;
};

/// Start all minus under the config boundary; stop when the plus fraction of
/// the central window reaches the threshold. The noise depends on the seed
/// only, so cells at different h are coupled.
RunRecord nucleation_run(const ExperimentConfig& config, double h, std::uint64_t seed);
NucleationReport nucleation_scan(const ExperimentConfig& config);

struct CatalystReport {
  double B_max = 0.0;
  std::size_t carved_edges = 0;
  std::size_t mouth_sites = 0;
  std::size_t pairs = 0;
  std::size_t carved_faster = 0;
  std::size_t ties = 0;
  std::size_t carved_slower = 0;
  double not_larger_fraction = 0.0;
  double sign_p = 1.0;  // one-sided, ties dropped
  double median_plain = 0.0;
  double median_carved = 0.0;
  Interval ci_plain;
  Interval ci_carved;
  double median_ratio = 1.0;  // carved over plain
  Interval ratio_ci;
  bool effect = false;  // not_larger_fraction >= 0.7 and sign_p < 0.05
  std::string verdict;
  std::vector<RunRecord> records;
  std::vector<Environment> environments;  // plain, carved
};

/// The two environments of the comparison and the stop window.
struct CatalystSetup {
  Environment plain;
  Environment carved;
  std::size_t carved_edges = 0;
  LatticeRegion mouth;
  double B_max = 0.0;
  Scales scales;
};

/// Cone apex at the centre of Λ, opening along +x_1. Throws OutOfBounds if
/// the catalyst or the mouth window does not fit.
CatalystSetup catalyst_setup(const ExperimentConfig& config);
RunRecord catalyst_run(const ExperimentConfig& config, const CatalystSetup& setup,
                       bool carved, std::uint64_t seed);
/// h is the first entry of config.h.
CatalystReport catalyst_ab(const ExperimentConfig& config);

struct GrowthRow {
  PlantSize size;
  double b = 0.0;
  double planted_volume = 0.0;  // ∫ M_K over the window at time 0
  double grow_level = 0.0;
  double shrink_level = 0.0;
  std::size_t runs = 0;
  std::size_t grew = 0;
  std::size_t shrank = 0;
  double grow_fraction = 0.0;
  double shrink_fraction = 0.0;
  double p_grow = 1.0;    // sign test of grew against shrank
  double p_shrink = 1.0;  // sign test of shrank against grew
};

struct GrowthReport {
  double m_star = 0.0;
  DropletEnergetics energetics;
  std::vector<GrowthRow> rows;
  std::vector<RunRecord> records;
};

/// Plus on the discretized W_2π(b) at the centre, minus elsewhere and on the
/// boundary; ∫ M_K is tracked over W_2π(grow_window · b). A run grew once the
/// integral reaches twice its initial (planted) value and shrank once it falls
/// to half of it. With b = 0 the window is W_2π(B_root), growth means half the
/// window volume, and shrinking cannot occur.
RunRecord plant_run(const ExperimentConfig& config, double b, double m_star, std::uint64_t seed);
GrowthReport plant_and_grow(const ExperimentConfig& config);

struct GridReport {
  int cells = 0;
  int cell_side = 0;
  double period = 0.0;
  std::size_t slices = 0;  // time slices 0..slices-1 at multiples of the period
  double b_plant = 0.0;
  std::size_t runs = 0;
  std::size_t spanning = 0;  // runs with a directed path to the far corner
  double front_speed = 0.0;  // cells per unit time, pooled over runs
  std::vector<double> mean_occupation;  // per slice, fraction of occupied cells
  std::vector<RunRecord> records;
};

/// Directed occupation from the planted source: reach_0 = {planted cell},
/// reach_{i+1} = occupied cells within L-infinity distance 1 of reach_i.
std::vector<std::vector<std::uint8_t>> directed_reach(const std::vector<std::uint8_t>& occupation,
                                                      int cells, int dim, std::size_t slices);

/// Cells of side cell_side tile Λ (cells^d of them); the droplet W_2π(b_min)
/// sits in the centre of the cell at the origin corner. A cell is occupied in
/// slice i when ∫ M_K over it at time i·T is at least threshold · its volume.
/// Throws InvalidParameter for fewer than 3 cells per side.
RunRecord grid_run(const ExperimentConfig& config, std::uint64_t seed);
GridReport conductive_grid_experiment(const ExperimentConfig& config);

/// Writes runs.jsonl and summary.csv under `dir` (created if needed).
void save_report(const NucleationReport& report, const std::filesystem::path& dir);
void save_report(const CatalystReport& report, const std::filesystem::path& dir);
void save_report(const GrowthReport& report, const std::filesystem::path& dir);
void save_report(const GridReport& report, const std::filesystem::path& dir);

}  // namespace dilute
