#pragma once

// Graphical construction of single-site Glauber dynamics: per-site Poisson
// clocks with uniform marks, space-time regions, monotone coupling, coupling
// from the past, block dynamics, relaxation-rate and hitting-time measurement.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dilute/gibbs.hpp"
#include "dilute/rng.hpp"

namespace dilute {

struct ClockEvent {
  double time = 0.0;
  double mark = 0.0;
  std::size_t site = 0;
};

/// Rate-one Poisson clocks with uniform marks, generated per (site, unit
/// window) from a counter-based stream keyed by (seed, global site
/// coordinates, window). Any sub-window or sub-region replays the same events.
class GraphicalNoise {
 public:
  explicit GraphicalNoise(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  /// Appends the events of `site` in [window, window + 1).
  void window_events(const Lattice& lattice, std::size_t site, std::int64_t window,
                     std::vector<ClockEvent>& out) const;
  /// Events of `site` in [t0, t1), in time order.
  std::vector<ClockEvent> events(const Lattice& lattice, std::size_t site, double t0, double t1) const;

 private:
  std::uint64_t seed_;
};

enum class UpdateRule { heat_bath, metropolis };

/// P(σ(x) = +1 | rest) = 1 / (1 + exp(-β(Σ_y J σ(y) + h))), free sites counting 0.
double heat_bath_prob(std::size_t x, const Spins& spins, const GibbsSpec& spec);

/// ST(Γ_0..Γ_n; t_0 < .. < t_{n+1}): Γ_i is active on [t_i, t_{i+1}).
class SpaceTimeRegion {
 public:
  SpaceTimeRegion(std::vector<LatticeRegion> slabs, std::vector<double> times);
  static SpaceTimeRegion constant(LatticeRegion region, double t0, double t1);
  /// Inverted pyramid: boxes of half-width r0 - speed*(t - t0) around centre,
  /// shrinking by one site per 1/speed time units until empty or t1.
  static SpaceTimeRegion pyramid(std::shared_ptr<const Lattice> lattice, const Point& centre,
                                 int r0, double speed, double t0, double t1);
  /// Parallelepiped: a fixed box translated by one site along `axis` every
  /// 1/speed time units.
  static SpaceTimeRegion parallelepiped(std::shared_ptr<const Lattice> lattice, const Point& lo,
                                        const std::vector<int>& extent, int axis, double speed,
                                        double t0, double t1);

  const std::vector<LatticeRegion>& slabs() const noexcept { return slabs_; }
  const std::vector<double>& times() const noexcept { return times_; }
  double start() const noexcept { return times_.front(); }
  double end() const noexcept { return times_.back(); }
  /// Index i with t_i <= t < t_{i+1} (the last slab for t = end()).
  std::size_t slab_at(double t) const;
  const Lattice& lattice() const noexcept { return slabs_.front().lattice(); }

 private:
  std::vector<LatticeRegion> slabs_;
  std::vector<double> times_;
};

struct Trajectory {
  Spins initial;
  Spins final;
  std::vector<std::pair<double, Spins>> snapshots;
  std::size_t events = 0;
  double end_time = 0.0;
  bool stopped = false;  // an observer ended the run early
};

struct RunOptions {
  std::vector<double> snapshot_times;  // ascending
  UpdateRule rule = UpdateRule::heat_bath;
  /// Called after every clock event with (time, site, spins); return true to stop.
  std::function<bool(double, std::size_t, const Spins&)> observer;
};

/// Runs the dynamics of `spec` (environment, β, h, ζ; spec.region is
/// ignored) on the space-time region from (s, ξ) to t_end. Entering sites
/// adopt ζ; leaving sites are reset to ζ; transitions precede clock events
/// at equal times. ξ must equal ζ off the slab active at s.
Trajectory run(const SpaceTimeRegion& region, const GibbsSpec& spec, double s, const Spins& xi,
               double t_end, const GraphicalNoise& noise, const RunOptions& options = {});

/// Static-region shorthand.
Trajectory run(const GibbsSpec& spec, const Spins& xi, double t0, double t1,
               const GraphicalNoise& noise, const RunOptions& options = {});

struct ConcatenationCheck {
  bool premises = false;    // both coalescence equalities hold
  bool conclusion = false;  // the concatenated run ends at σ^{u_n,+}_Δ
};

/// Replays the concatenation property on shared noise. `first` is
/// ST(Γ_0..Γ_m; t_0..t_{m+1}), `second` is ST(Δ_0..Δ_n; u_0..u_{n+1}) with
/// Γ_m = Δ_0 and t_m = u_0 < t_{m+1} <= u_1. Premises:
/// σ^{t_0,ξ}_Γ(t_{m+1}) = σ^{t_m,+}_Γ(t_{m+1}) and
/// σ^{u_0,+}_Δ(u_{n+1}) = σ^{u_n,+}_Δ(u_{n+1}). Conclusion:
/// σ^{t_0,ξ}_{Γ∪Δ}(u_{n+1}) = σ^{u_n,+}_Δ(u_{n+1}).
ConcatenationCheck check_concatenation(const SpaceTimeRegion& first, const SpaceTimeRegion& second,
                                       const GibbsSpec& spec, const Spins& xi,
                                       const GraphicalNoise& noise);

struct CoupledPair {
  Trajectory low;
  Trajectory high;
  std::size_t checked_events = 0;
  bool coalesced = false;
};

/// Shares the noise between two heat-bath runs with ξ_low <= ξ_high,
/// ζ_low <= ζ_high and h_low <= h_high on a common environment; checks the
/// pointwise order after every event and throws InvariantViolation on any
/// breach. Unordered inputs throw InvalidParameter.
CoupledPair monotone_couple(const SpaceTimeRegion& region, const GibbsSpec& low,
                            const GibbsSpec& high, const Spins& xi_low, const Spins& xi_high,
                            double t_end, const GraphicalNoise& noise);

struct CftpOptions {
  double first_window = 1.0;
  double max_window = 1 << 20;
};

struct CftpResult {
  Spins sample;
  double window = 0.0;  // backward horizon that coalesced
};

/// Monotone coupling from the past on spec.region: doubles the backward
/// horizon, reusing the same noise, until the extremal starts agree at 0.
/// Throws Timeout beyond max_window.
CftpResult cftp_sample(const GibbsSpec& spec, std::uint64_t seed, const CftpOptions& options = {});

/// Block dynamics: each block carries a rate-one clock; at a ring the block
/// is resampled from the Gibbs measure conditioned on the current exterior
/// by nested CFTP.
Trajectory block_dynamics(const GibbsSpec& spec, const std::vector<LatticeRegion>& blocks,
                          const Spins& start, double t_end, std::uint64_t seed,
                          const CftpOptions& options = {});

enum class GapMethod { coupled_starts, autocorrelation };

struct GapEstimate {
  double gap = 0.0;
  double std_error = 0.0;
  bool wide = false;  // error bars too large for the budget
  GapMethod method = GapMethod::coupled_starts;
};

struct GapBudget {
  std::size_t replicas = 200;
  double t_max = 40.0;
  double dt = 0.25;
  GapMethod method = GapMethod::coupled_starts;
};

/// coupled_starts: decay rate of E[M(σ⁺_t) - M(σ⁻_t)] from the extremal
/// starts under shared noise, fitted on its exponential tail.
/// autocorrelation: inverse integrated autocorrelation time of the
/// magnetization from a CFTP equilibrium start.
GapEstimate gap_estimate(const GibbsSpec& spec, std::uint64_t seed, const GapBudget& budget = {});

/// Increasing event tracked incrementally along a run.
class StopPredicate {
 public:
  virtual ~StopPredicate() = default;
  virtual void reset(const Spins& spins) = 0;
  virtual void update(std::size_t site, std::int8_t before, std::int8_t after) = 0;
  virtual bool satisfied() const = 0;
  virtual std::unique_ptr<StopPredicate> clone() const = 0;
};

/// Fraction of plus sites in `window` at least `threshold`.
class PlusFraction final : public StopPredicate {
 public:
  PlusFraction(LatticeRegion window, double threshold);
  void reset(const Spins& spins) override;
  void update(std::size_t site, std::int8_t before, std::int8_t after) override;
  bool satisfied() const override;
  std::unique_ptr<StopPredicate> clone() const override { return std::make_unique<PlusFraction>(*this); }
  double fraction() const noexcept;

 private:
  LatticeRegion window_;
  double threshold_;
  std::size_t plus_ = 0;
};

/// Integral of the magnetization profile over the boxes inside `window`
/// at least `threshold` (macroscopic volume units).
class ProfileThreshold final : public StopPredicate {
 public:
  ProfileThreshold(const GibbsSpec& spec, const LatticeRegion& window, const Scales& scales,
                   double m_star, double threshold);
  void reset(const Spins& spins) override;
  void update(std::size_t site, std::int8_t before, std::int8_t after) override;
  bool satisfied() const override;
  std::unique_ptr<StopPredicate> clone() const override {
    return std::make_unique<ProfileThreshold>(*this);
  }
  double integral() const noexcept;
  /// Macroscopic volume of the counted boxes.
  double volume() const noexcept { return volume_; }

 private:
  std::vector<std::uint32_t> box_of_;  // per site; UINT32_MAX if not counted
  std::vector<double> box_scale_;      // d(value)/d(spin) per box
  std::vector<double> box_base_;
  std::vector<double> box_sum_;
  double volume_ = 0.0;
  double threshold_;
  double integral_ = 0.0;
};

struct HitResult {
  double time = 0.0;
  bool censored = false;
};

/// First time the predicate holds along the run from `start`, or t_cap
/// (censored).
HitResult hitting_time(const GibbsSpec& spec, const Spins& start, StopPredicate& predicate,
                       const GraphicalNoise& noise, double t_cap);

}  // namespace dilute
