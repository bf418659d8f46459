#include "dilute/glauber.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dilute/error.hpp"

namespace dilute {

namespace {

const double kExpMinusOne = std::exp(-1.0);

void keyed_window_events(std::uint64_t key, std::int64_t window, std::size_t tag,
                         std::vector<ClockEvent>& out) {
  CounterRng rng(key);
  // Poisson(1) by CDF inversion.
  double u = rng.uniform();
  double p = kExpMinusOne, cdf = p;
  int k = 0;
  while (u >= cdf && k < 64) {
    ++k;
    p /= k;
    cdf += p;
  }
  const double base = static_cast<double>(window);
  for (int i = 0; i < k; ++i) {
    const double t = base + rng.uniform();
    out.push_back(ClockEvent{t, rng.uniform(), tag});
  }
}

// J = 1 neighbours of every site, flattened.
struct CouplingTable {
  std::vector<std::uint32_t> offset;
  std::vector<std::uint32_t> nbr;
  int degree = 0;

  explicit CouplingTable(const Environment& env) {
    const Lattice& lat = env.lattice();
    degree = lat.degree();
    offset.reserve(lat.size() + 1);
    offset.push_back(0);
    for (std::size_t v = 0; v < lat.size(); ++v) {
      for (int dir = 0; dir < degree; ++dir) {
        auto y = lat.neighbor(v, dir);
        if (y != npos && env.J_dir(v, dir) == 1) nbr.push_back(static_cast<std::uint32_t>(y));
      }
      offset.push_back(static_cast<std::uint32_t>(nbr.size()));
    }
  }

  int field(const Spins& s, std::size_t x) const noexcept {
    int f = 0;
    for (auto i = offset[x]; i < offset[x + 1]; ++i) f += s[nbr[i]];
    return f;
  }
};

struct Replica {
  const GibbsSpec* spec = nullptr;
  Spins spins;
  std::vector<double> up;      // heat bath: q by field + degree
  std::vector<double> accept;  // metropolis: [current spin > 0][field + degree]

  Replica(const GibbsSpec& s, Spins init, int degree) : spec(&s), spins(std::move(init)) {
    up.resize(static_cast<std::size_t>(2 * degree + 1));
    accept.resize(2 * up.size());
    for (int f = -degree; f <= degree; ++f) {
      const auto i = static_cast<std::size_t>(f + degree);
      up[i] = 1.0 / (1.0 + std::exp(-s.beta * (f + s.h)));
      accept[i] = std::min(1.0, std::exp(s.beta * (f + s.h)));                 // -1 -> +1
      accept[up.size() + i] = std::min(1.0, std::exp(-s.beta * (f + s.h)));  // +1 -> -1
    }
  }
};

std::int8_t updated_spin(const Replica& r, UpdateRule rule, int field, int degree,
                         std::int8_t current, double mark) noexcept {
  const auto i = static_cast<std::size_t>(field + degree);
  if (rule == UpdateRule::heat_bath) return mark > 1.0 - r.up[i] ? 1 : -1;
  const double a = r.accept[(current > 0 ? r.up.size() : 0) + i];
  return mark < a ? static_cast<std::int8_t>(-current) : current;
}

// Drives the replicas through [s, t_end) of the space-time region with shared
// noise. Slab transitions at times in (s, t_end] are applied, except at the
// region's final time. `on_event(t, x)` returns true to stop.
template <class OnEvent>
bool drive(const SpaceTimeRegion& st, double s, double t_end, const GraphicalNoise& noise,
           const CouplingTable& table, std::vector<Replica>& reps, UpdateRule rule,
           std::size_t& events, OnEvent&& on_event) {
  const Lattice& lat = st.lattice();
  const auto& times = st.times();
  const std::size_t slabs = st.slabs().size();
  std::size_t i = st.slab_at(s);
  double t = s;
  std::vector<ClockEvent> buf;
  while (t < t_end) {
    const bool has_next = i + 1 < slabs;
    const double seg_end = has_next ? std::min(t_end, times[i + 1]) : t_end;
    const auto& verts = st.slabs()[i].vertices();
    for (auto w = static_cast<std::int64_t>(std::floor(t)); static_cast<double>(w) < seg_end; ++w) {
      buf.clear();
      for (auto v : verts) noise.window_events(lat, v, w, buf);
      std::sort(buf.begin(), buf.end(), [](const ClockEvent& a, const ClockEvent& b) {
        return a.time < b.time || (a.time == b.time && a.site < b.site);
      });
      for (const auto& ev : buf) {
        if (ev.time < t) continue;
        if (ev.time >= seg_end) break;
        for (auto& r : reps) {
          const int f = table.field(r.spins, ev.site);
          r.spins[ev.site] = updated_spin(r, rule, f, table.degree, r.spins[ev.site], ev.mark);
        }
        ++events;
        if (on_event(ev.time, ev.site)) return true;
      }
    }
    t = seg_end;
    if (has_next && t == times[i + 1]) {
      const auto& from = st.slabs()[i];
      const auto& to = st.slabs()[i + 1];
      for (auto& r : reps) {
        for (auto v : from.vertices())
          if (!to.contains(v)) r.spins[v] = r.spec->boundary.at(v);
        for (auto v : to.vertices())
          if (!from.contains(v)) r.spins[v] = r.spec->boundary.at(v);
      }
      ++i;
    }
  }
  return false;
}

void check_compatible(const SpaceTimeRegion& st, const GibbsSpec& spec, double s, const Spins& xi) {
  const Lattice& lat = st.lattice();
  if (!(spec.lattice() == lat)) throw InvalidParameter("run: spec and region use different lattices");
  if (xi.size() != lat.size()) throw InvalidParameter("run: start configuration has the wrong size");
  const auto& slab = st.slabs()[st.slab_at(s)];
  for (std::size_t v = 0; v < lat.size(); ++v) {
    if (slab.contains(v)) {
      if (xi[v] != 1 && xi[v] != -1) throw InvalidParameter("run: start spins must be +-1 on the slab");
    } else if (xi[v] != spec.boundary.at(v)) {
      throw InvalidParameter("run: start configuration differs from the boundary off the slab");
    }
  }
}

void check_times(const SpaceTimeRegion& st, double s, double t_end) {
  if (!(s >= st.start() && s <= st.end()))
    throw InvalidParameter("run: start time outside the space-time region");
  if (!(t_end >= s && t_end <= st.end()))
    throw InvalidParameter("run: end time outside [start, region end]");
}

double mean_spin(const Spins& s, const LatticeRegion& region) {
  long total = 0;
  for (auto v : region.vertices()) total += s[v];
  return static_cast<double>(total) / static_cast<double>(region.size());
}

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

void GraphicalNoise::window_events(const Lattice& lattice, std::size_t site, std::int64_t window,
                                   std::vector<ClockEvent>& out) const {
  keyed_window_events(hash_words({seed_, lattice.site_key(site), static_cast<std::uint64_t>(window)}),
                      window, site, out);
}

std::vector<ClockEvent> GraphicalNoise::events(const Lattice& lattice, std::size_t site, double t0,
                                               double t1) const {
  std::vector<ClockEvent> all, out;
  for (auto w = static_cast<std::int64_t>(std::floor(t0)); static_cast<double>(w) < t1; ++w)
    window_events(lattice, site, w, all);
  for (const auto& e : all)
    if (e.time >= t0 && e.time < t1) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return out;
}

double heat_bath_prob(std::size_t x, const Spins& spins, const GibbsSpec& spec) {
  return 1.0 / (1.0 + std::exp(-spec.beta * (local_field(spins, spec, x) + spec.h)));
}

SpaceTimeRegion::SpaceTimeRegion(std::vector<LatticeRegion> slabs, std::vector<double> times)
    : slabs_(std::move(slabs)), times_(std::move(times)) {
  if (slabs_.empty()) throw InvalidParameter("SpaceTimeRegion: no slabs");
  if (times_.size() != slabs_.size() + 1)
    throw InvalidParameter("SpaceTimeRegion: need one more time than slabs");
  for (std::size_t i = 0; i + 1 < times_.size(); ++i)
    if (!(times_[i] < times_[i + 1])) throw InvalidParameter("SpaceTimeRegion: times must increase");
  for (const auto& s : slabs_)
    if (!(s.lattice() == slabs_.front().lattice()))
      throw InvalidParameter("SpaceTimeRegion: slabs on different lattices");
}

SpaceTimeRegion SpaceTimeRegion::constant(LatticeRegion region, double t0, double t1) {
  return SpaceTimeRegion({std::move(region)}, {t0, t1});
}

SpaceTimeRegion SpaceTimeRegion::pyramid(std::shared_ptr<const Lattice> lattice, const Point& centre,
                                         int r0, double speed, double t0, double t1) {
  if (r0 < 0 || !(speed > 0.0)) throw InvalidParameter("pyramid: need r0 >= 0 and speed > 0");
  std::vector<LatticeRegion> slabs;
  std::vector<double> times{t0};
  for (int r = r0; r >= 0; --r) {
    const double next = t0 + static_cast<double>(r0 - r + 1) / speed;
    Point lo = centre;
    for (auto& c : lo) c -= r;
    slabs.push_back(LatticeRegion::box(lattice, lo, std::vector<int>(centre.size(), 2 * r + 1)));
    if (next >= t1) {
      times.push_back(t1);
      return SpaceTimeRegion(std::move(slabs), std::move(times));
    }
    times.push_back(next);
  }
  slabs.push_back(LatticeRegion::empty(lattice));
  times.push_back(t1);
  return SpaceTimeRegion(std::move(slabs), std::move(times));
}

SpaceTimeRegion SpaceTimeRegion::parallelepiped(std::shared_ptr<const Lattice> lattice,
                                                const Point& lo, const std::vector<int>& extent,
                                                int axis, double speed, double t0, double t1) {
  if (!(speed > 0.0)) throw InvalidParameter("parallelepiped: speed must be positive");
  if (axis < 0 || axis >= static_cast<int>(lo.size())) throw InvalidParameter("parallelepiped: bad axis");
  std::vector<LatticeRegion> slabs;
  std::vector<double> times{t0};
  Point corner = lo;
  for (int k = 1;; ++k) {
    slabs.push_back(LatticeRegion::box(lattice, corner, extent));
    const double next = t0 + k / speed;
    if (next >= t1) break;
    times.push_back(next);
    ++corner[static_cast<std::size_t>(axis)];
  }
  times.push_back(t1);
  return SpaceTimeRegion(std::move(slabs), std::move(times));
}

std::size_t SpaceTimeRegion::slab_at(double t) const {
  if (t >= times_.back()) return slabs_.size() - 1;
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - times_.begin() - 1));
}

Trajectory run(const SpaceTimeRegion& region, const GibbsSpec& spec, double s, const Spins& xi,
               double t_end, const GraphicalNoise& noise, const RunOptions& options) {
  check_times(region, s, t_end);
  check_compatible(region, spec, s, xi);
  CouplingTable table(*spec.env);
  std::vector<Replica> reps;
  reps.emplace_back(spec, xi, table.degree);
  Trajectory out;
  out.initial = xi;

  double t = s;
  auto observe = [&](double time, std::size_t x) {
    return options.observer && options.observer(time, x, reps[0].spins);
  };
  for (double snap : options.snapshot_times) {
    if (snap < s || snap > t_end) continue;
    if (drive(region, t, snap, noise, table, reps, options.rule, out.events, observe)) {
      out.stopped = true;
      break;
    }
    t = snap;
    out.snapshots.emplace_back(snap, reps[0].spins);
  }
  if (!out.stopped)
    out.stopped = drive(region, t, t_end, noise, table, reps, options.rule, out.events, observe);
  out.end_time = t_end;
  out.final = std::move(reps[0].spins);
  return out;
}

Trajectory run(const GibbsSpec& spec, const Spins& xi, double t0, double t1,
               const GraphicalNoise& noise, const RunOptions& options) {
  return run(SpaceTimeRegion::constant(spec.region, t0, t1), spec, t0, xi, t1, noise, options);
}

ConcatenationCheck check_concatenation(const SpaceTimeRegion& first, const SpaceTimeRegion& second,
                                       const GibbsSpec& spec, const Spins& xi,
                                       const GraphicalNoise& noise) {
  const std::size_t m = first.slabs().size() - 1;
  const auto& t = first.times();
  const auto& u = second.times();
  if (!(first.slabs()[m] == second.slabs().front()) || t[m] != u[0] || !(t[m + 1] <= u[1]))
    throw InvalidParameter("check_concatenation: regions do not meet as required");

  auto plus_on = [&](const LatticeRegion& slab) {
    Spins s = spec.boundary.zeta;
    for (auto v : slab.vertices()) s[v] = 1;
    return s;
  };
  const Spins from_start = run(first, spec, t[0], xi, t[m + 1], noise).final;
  const Spins from_last = run(first, spec, t[m], plus_on(first.slabs()[m]), t[m + 1], noise).final;
  const std::size_t n = second.slabs().size() - 1;
  const Spins delta_early = run(second, spec, u[0], plus_on(second.slabs()[0]), u[n + 1], noise).final;
  const Spins delta_late = run(second, spec, u[n], plus_on(second.slabs()[n]), u[n + 1], noise).final;

  std::vector<LatticeRegion> slabs(first.slabs().begin(), first.slabs().end() - 1);
  slabs.insert(slabs.end(), second.slabs().begin(), second.slabs().end());
  std::vector<double> times(t.begin(), t.end() - 1);
  times.insert(times.end(), u.begin() + 1, u.end());
  const SpaceTimeRegion joined(std::move(slabs), std::move(times));
  const Spins concatenated = run(joined, spec, t[0], xi, u[n + 1], noise).final;

  return ConcatenationCheck{from_start == from_last && delta_early == delta_late,
                            concatenated == delta_late};
}

CoupledPair monotone_couple(const SpaceTimeRegion& region, const GibbsSpec& low,
                            const GibbsSpec& high, const Spins& xi_low, const Spins& xi_high,
                            double t_end, const GraphicalNoise& noise) {
  if (low.env != high.env) throw InvalidParameter("monotone_couple: environments must be shared");
  if (low.beta != high.beta) throw InvalidParameter("monotone_couple: beta must be shared");
  if (!(low.h <= high.h)) throw InvalidParameter("monotone_couple: h_low > h_high");
  const double s = region.start();
  check_times(region, s, t_end);
  check_compatible(region, low, s, xi_low);
  check_compatible(region, high, s, xi_high);
  const std::size_t n = region.lattice().size();
  for (std::size_t v = 0; v < n; ++v) {
    if (xi_low[v] > xi_high[v]) throw InvalidParameter("monotone_couple: start states are not ordered");
    if (low.boundary.at(v) > high.boundary.at(v))
      throw InvalidParameter("monotone_couple: boundary conditions are not ordered");
  }
  CouplingTable table(*low.env);
  std::vector<Replica> reps;
  reps.emplace_back(low, xi_low, table.degree);
  reps.emplace_back(high, xi_high, table.degree);
  CoupledPair out;
  out.low.initial = xi_low;
  out.high.initial = xi_high;
  std::size_t events = 0;
  drive(region, s, t_end, noise, table, reps, UpdateRule::heat_bath, events,
        [&](double time, std::size_t x) {
          if (reps[0].spins[x] > reps[1].spins[x])
            throw InvariantViolation("monotone_couple: order broken at t=" + std::to_string(time));
          ++out.checked_events;
          return false;
        });
  for (std::size_t v = 0; v < n; ++v)
    if (reps[0].spins[v] > reps[1].spins[v])
      throw InvariantViolation("monotone_couple: order broken in the final state");
  out.low.events = out.high.events = events;
  out.low.end_time = out.high.end_time = t_end;
  out.coalesced = reps[0].spins == reps[1].spins;
  out.low.final = std::move(reps[0].spins);
  out.high.final = std::move(reps[1].spins);
  return out;
}

CftpResult cftp_sample(const GibbsSpec& spec, std::uint64_t seed, const CftpOptions& options) {
  if (!(options.first_window > 0.0)) throw InvalidParameter("cftp_sample: first window must be positive");
  CouplingTable table(*spec.env);
  GraphicalNoise noise(seed);
  if (spec.region.empty()) return CftpResult{make_spins(spec, 1), 0.0};
  for (double T = options.first_window; T <= options.max_window; T *= 2.0) {
    const double start = -std::ceil(T);
    auto st = SpaceTimeRegion::constant(spec.region, start, 0.0);
    std::vector<Replica> reps;
    reps.emplace_back(spec, make_spins(spec, 1), table.degree);
    reps.emplace_back(spec, make_spins(spec, -1), table.degree);
    std::size_t events = 0;
    drive(st, start, 0.0, noise, table, reps, UpdateRule::heat_bath, events,
          [](double, std::size_t) { return false; });
    if (reps[0].spins == reps[1].spins) return CftpResult{std::move(reps[0].spins), -start};
  }
  throw Timeout("cftp_sample: no coalescence within a backward window of " +
                std::to_string(options.max_window) + " on " + std::to_string(spec.region.size()) +
                " sites");
}

Trajectory block_dynamics(const GibbsSpec& spec, const std::vector<LatticeRegion>& blocks,
                          const Spins& start, double t_end, std::uint64_t seed,
                          const CftpOptions& options) {
  if (blocks.empty()) throw InvalidParameter("block_dynamics: no blocks");
  for (const auto& b : blocks)
    if (!b.subset_of(spec.region)) throw InvalidParameter("block_dynamics: block leaves the region");
  check_compatible(SpaceTimeRegion::constant(spec.region, 0.0, 1.0), spec, 0.0, start);
  std::vector<ClockEvent> rings;
  const std::uint64_t clock_seed = hash_words({seed, 0xb10cULL});
  for (std::int64_t w = 0; static_cast<double>(w) < t_end; ++w)
    for (std::size_t j = 0; j < blocks.size(); ++j)
      keyed_window_events(hash_words({clock_seed, j, static_cast<std::uint64_t>(w)}), w, j, rings);
  std::sort(rings.begin(), rings.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

  Trajectory out;
  out.initial = start;
  Spins state = start;
  for (const auto& ring : rings) {
    if (ring.time >= t_end) break;
    auto sub = spec.on(blocks[ring.site]).with_boundary(BoundaryCondition::from_spins(state));
    auto sample = cftp_sample(sub, hash_words({seed, ring.site, out.events}), options).sample;
    for (auto v : blocks[ring.site].vertices()) state[v] = sample[v];
    ++out.events;
  }
  out.end_time = t_end;
  out.final = std::move(state);
  return out;
}

GapEstimate gap_estimate(const GibbsSpec& spec, std::uint64_t seed, const GapBudget& budget) {
  if (budget.replicas < 20 || !(budget.dt > 0.0) || !(budget.t_max > budget.dt))
    throw InvalidParameter("gap_estimate: need >= 20 replicas and t_max > dt > 0");
  if (spec.region.empty()) throw InvalidParameter("gap_estimate: empty region");
  CouplingTable table(*spec.env);
  const auto steps = static_cast<std::size_t>(std::floor(budget.t_max / budget.dt));
  const auto st = SpaceTimeRegion::constant(spec.region, 0.0, steps * budget.dt);
  const std::size_t R = budget.replicas;
  constexpr std::size_t groups = 20;
  // series[r][k]: observable of replica r at time k dt.
  std::vector<std::vector<double>> series(R, std::vector<double>(steps + 1, 0.0));

  GapEstimate est;
  est.method = budget.method;
  for (std::size_t r = 0; r < R; ++r) {
    GraphicalNoise noise(hash_words({seed, r}));
    std::vector<Replica> reps;
    if (budget.method == GapMethod::coupled_starts) {
      reps.emplace_back(spec, make_spins(spec, 1), table.degree);
      reps.emplace_back(spec, make_spins(spec, -1), table.degree);
    } else {
      reps.emplace_back(spec, cftp_sample(spec, hash_words({seed, r, 0xcf7bULL})).sample, table.degree);
    }
    auto observable = [&] {
      return budget.method == GapMethod::coupled_starts
                 ? mean_spin(reps[0].spins, spec.region) - mean_spin(reps[1].spins, spec.region)
                 : mean_spin(reps[0].spins, spec.region);
    };
    series[r][0] = observable();
    std::size_t events = 0;
    for (std::size_t k = 1; k <= steps; ++k) {
      if (budget.method == GapMethod::coupled_starts && reps[0].spins == reps[1].spins) break;
      drive(st, (k - 1) * budget.dt, k * budget.dt, noise, table, reps, UpdateRule::heat_bath, events,
            [](double, std::size_t) { return false; });
      series[r][k] = observable();
    }
  }

  // Rate estimate from a subset of replicas (excluded group g, or none).
  std::vector<std::size_t> window;  // fit indices, fixed from the full sample
  auto rate = [&](std::size_t excluded) -> double {
    std::vector<double> curve(steps + 1, 0.0);
    double used = 0.0;
    if (budget.method == GapMethod::coupled_starts) {
      for (std::size_t r = 0; r < R; ++r) {
        if (r % groups == excluded) continue;
        used += 1.0;
        for (std::size_t k = 0; k <= steps; ++k) curve[k] += series[r][k];
      }
      for (auto& c : curve) c /= used;
      std::vector<double> x, y;
      for (auto k : window) {
        if (!(curve[k] > 0.0)) continue;
        x.push_back(k * budget.dt);
        y.push_back(std::log(curve[k]));
      }
      return x.size() < 2 ? 0.0 : -slope(x, y);
    }
    // Autocorrelation of the magnetization, pooled over replicas.
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      if (r % groups == excluded) continue;
      for (std::size_t k = 0; k <= steps; ++k) mean += series[r][k];
      used += static_cast<double>(steps + 1);
    }
    mean /= used;
    for (std::size_t r = 0; r < R; ++r) {
      if (r % groups == excluded) continue;
      for (std::size_t k = 0; k <= steps; ++k) var += (series[r][k] - mean) * (series[r][k] - mean);
    }
    var /= used;
    if (!(var > 0.0)) return 0.0;
    // Trapezoidal integral of ρ(t) with a self-consistent window (5 τ).
    double tau = 0.5 * budget.dt;
    for (std::size_t lag = 1; lag <= steps; ++lag) {
      double c = 0.0, pairs = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        if (r % groups == excluded) continue;
        for (std::size_t k = 0; k + lag <= steps; ++k) {
          c += (series[r][k] - mean) * (series[r][k + lag] - mean);
          pairs += 1.0;
        }
      }
      tau += budget.dt * c / pairs / var;
      if (lag * budget.dt >= 5.0 * tau) break;
    }
    return tau > 0.0 ? 1.0 / tau : 0.0;
  };

  if (budget.method == GapMethod::coupled_starts) {
    // Tail window: below e^{-2} (else e^{-1}) of the start value and above
    // four standard errors of the mean curve. The local decay rate reaches
    // the gap from below, so later points are less biased.
    std::vector<double> mean(steps + 1, 0.0), sq(steps + 1, 0.0);
    for (const auto& s : series)
      for (std::size_t k = 0; k <= steps; ++k) {
        mean[k] += s[k];
        sq[k] += s[k] * s[k];
      }
    std::size_t resolved = 0;  // points above the noise floor
    for (std::size_t k = 0; k <= steps; ++k) {
      mean[k] /= static_cast<double>(R);
      const double var = std::max(0.0, sq[k] / R - mean[k] * mean[k]);
      if (!(mean[k] > 4.0 * std::sqrt(var / static_cast<double>(R)))) break;
      resolved = k + 1;
    }
    for (double depth : {2.0, 1.0}) {
      window.clear();
      for (std::size_t k = 0; k < resolved; ++k)
        if (mean[k] <= mean[0] * std::exp(-depth)) window.push_back(k);
      if (window.size() >= 3) break;
    }
    if (window.size() < 3) {
      // Too fast or too noisy for a tail: fall back to the whole positive curve.
      window.clear();
      for (std::size_t k = 0; k <= steps && mean[k] > 0.0; ++k) window.push_back(k);
      est.wide = true;
    }
  }

  est.gap = rate(groups);  // no group excluded
  std::vector<double> jack(groups);
  for (std::size_t g = 0; g < groups; ++g) jack[g] = rate(g);
  const double jm = std::accumulate(jack.begin(), jack.end(), 0.0) / groups;
  double ss = 0.0;
  for (double j : jack) ss += (j - jm) * (j - jm);
  est.std_error = std::sqrt(ss * (groups - 1.0) / groups);
  if (!(est.gap > 0.0) || est.std_error > 0.25 * est.gap) est.wide = true;
  return est;
}

PlusFraction::PlusFraction(LatticeRegion window, double threshold)
    : window_(std::move(window)), threshold_(threshold) {
  if (window_.empty()) throw InvalidParameter("PlusFraction: empty window");
}

void PlusFraction::reset(const Spins& spins) {
  plus_ = 0;
  for (auto v : window_.vertices()) plus_ += spins[v] > 0 ? 1 : 0;
}

void PlusFraction::update(std::size_t site, std::int8_t before, std::int8_t after) {
  if (before == after || !window_.contains(site)) return;
  if (after > 0) ++plus_;
  else --plus_;
}

bool PlusFraction::satisfied() const { return fraction() >= threshold_; }

double PlusFraction::fraction() const noexcept {
  return static_cast<double>(plus_) / static_cast<double>(window_.size());
}

ProfileThreshold::ProfileThreshold(const GibbsSpec& spec, const LatticeRegion& window,
                                   const Scales& scales, double m_star, double threshold)
    : threshold_(threshold) {
  if (!(m_star > 0.0)) throw InvalidParameter("ProfileThreshold: m_star must be positive");
  const double cell = std::pow(static_cast<double>(scales.K) / scales.N, spec.lattice().dim());
  box_of_.assign(spec.lattice().size(), UINT32_MAX);
  for (const auto& box : box_decomposition(spec.region, scales.K)) {
    bool inside = true;
    for (auto v : box.sites) inside = inside && window.contains(v);
    if (!inside || box.sites.empty()) continue;
    const double n = static_cast<double>(box.sites.size());
    const double scale = box.interior ? 1.0 / m_star : 1.0;
    for (auto v : box.sites) box_of_[v] = static_cast<std::uint32_t>(box_sum_.size());
    box_scale_.push_back(cell * 0.5 * scale / n);
    box_base_.push_back(cell * 0.5);
    box_sum_.push_back(0.0);
    volume_ += cell;
  }
}

void ProfileThreshold::reset(const Spins& spins) {
  std::fill(box_sum_.begin(), box_sum_.end(), 0.0);
  for (std::size_t v = 0; v < box_of_.size(); ++v)
    if (box_of_[v] != UINT32_MAX) box_sum_[box_of_[v]] += spins[v];
  integral_ = 0.0;
  for (std::size_t b = 0; b < box_sum_.size(); ++b) integral_ += box_base_[b] + box_scale_[b] * box_sum_[b];
}

void ProfileThreshold::update(std::size_t site, std::int8_t before, std::int8_t after) {
  const auto b = box_of_[site];
  if (before == after || b == UINT32_MAX) return;
  box_sum_[b] += after - before;
  integral_ += box_scale_[b] * (after - before);
}

bool ProfileThreshold::satisfied() const { return integral_ >= threshold_; }

double ProfileThreshold::integral() const noexcept { return integral_; }

HitResult hitting_time(const GibbsSpec& spec, const Spins& start, StopPredicate& predicate,
                       const GraphicalNoise& noise, double t_cap) {
  if (!(t_cap >= 0.0)) throw InvalidParameter("hitting_time: negative cap");
  predicate.reset(start);
  if (predicate.satisfied()) return HitResult{0.0, false};
  const auto st = SpaceTimeRegion::constant(spec.region, 0.0, std::max(t_cap, 1e-300));
  check_compatible(st, spec, 0.0, start);
  CouplingTable table(*spec.env);
  std::vector<Replica> reps;
  reps.emplace_back(spec, start, table.degree);
  std::size_t events = 0;
  HitResult out{t_cap, true};
  auto& spins = reps[0].spins;
  Spins previous = start;  // spin values before the latest event
  drive(st, 0.0, t_cap, noise, table, reps, UpdateRule::heat_bath, events,
        [&](double time, std::size_t x) {
          const std::int8_t before = previous[x];
          previous[x] = spins[x];
          predicate.update(x, before, spins[x]);
          if (predicate.satisfied()) {
            out = HitResult{time, false};
            return true;
          }
          return false;
        });
  return out;
}

}  // namespace dilute
