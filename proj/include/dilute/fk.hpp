#pragma once

// Edwards-Sokal coupling: random-cluster configurations with a ghost vertex,
// boundary-aware cluster decomposition, spin assignment, Swendsen-Wang
// sweeps and the finite-volume surface-tension estimator.

#include <cstdint>
#include <vector>

#include "dilute/gibbs.hpp"
#include "dilute/rng.hpp"

namespace dilute {

/// ω over the real edges (indexed by edge id of the ambient lattice) and the
/// ghost edges {g, x} (indexed by site). Only edges of E^w(Λ) and ghost edges
/// of sites in Λ are meaningful.
struct EdgeConfig {
  std::vector<std::uint8_t> real;
  std::vector<std::uint8_t> ghost;
  bool ghost_sampled = true;  // false: ghost edges marginalized out

  static EdgeConfig closed(const Lattice& lattice, bool ghost_sampled = true);
};

/// Real edges of E^w(Λ) with J = 1: internal edges and boundary edges to
/// non-free exterior sites.
std::vector<std::size_t> active_edges(const GibbsSpec& spec);

double edge_open_prob(const GibbsSpec& spec) noexcept;   // 1 - exp(-β)
double ghost_open_prob(const GibbsSpec& spec) noexcept;  // 1 - exp(-βh)

struct ClusterPartition {
  static constexpr std::size_t none = static_cast<std::size_t>(-1);

  std::vector<std::size_t> label;  // per ambient site; `none` outside Λ
  std::vector<std::vector<std::size_t>> members;
  std::size_t plus_id = none;   // V₊: touches ∂⁺ or the ghost (may be empty -> none)
  std::size_t minus_id = none;  // V₋: touches ∂⁻
  std::vector<std::size_t> free_ids;
  bool admissible = true;  // ∂⁺ ∪ {g} not connected to ∂⁻
  bool ghost_sampled = true;

  std::size_t free_count() const noexcept { return free_ids.size(); }
};

/// Union-find over open edges with the boundary and ghost merge rules.
ClusterPartition clusters(const EdgeConfig& omega, const GibbsSpec& spec);

/// Components of Λ under open internal real edges only (ghost and boundary
/// edges ignored). Returns a label per ambient site (`none` outside Λ).
std::vector<std::size_t> real_clusters(const EdgeConfig& omega, const GibbsSpec& spec);

/// V₊ -> +1, V₋ -> -1; free clusters are fair coins when ghost edges were
/// sampled, otherwise +1 with probability e^{βh|V|}/(1 + e^{βh|V|}).
/// Throws InvalidParameter for a partition outside the support.
Spins assign_spins(const ClusterPartition& partition, const GibbsSpec& spec, CounterRng& rng);

/// One Swendsen-Wang sweep: open each agreeing active edge (and, when
/// `sample_ghost`, each ghost edge at a plus site) then reassign spins.
std::pair<EdgeConfig, Spins> sw_step(const Spins& spins, const GibbsSpec& spec, CounterRng& rng,
                                     bool sample_ghost = false);

struct EsReport {
  double max_marginal_error = 0.0;  // |Σ_ω φ(σ,ω) - μ(σ)| over σ
  bool count_formula_holds = true;  // #σ compatible with ω = 2^{n(ω)} on the support, 0 off it
  std::size_t omega_states = 0;
  std::size_t support_size = 0;
  std::size_t excluded = 0;  // ω outside the support
  std::vector<double> spin_marginal;
};

inline constexpr std::size_t kEsSiteCap = 10;
inline constexpr std::size_t kEsEdgeCap = 16;

/// Exact joint enumeration of (σ, ω); throws ResourceLimit above the caps.
EsReport es_equivalence_check(const GibbsSpec& spec);

/// φ over ω restricted to the given bit layout: bit i < edges.size() is
/// edges[i], then one ghost bit per site of Λ (present even when h = 0).
struct FkDistribution {
  std::vector<std::size_t> edges;
  std::vector<double> prob;
};
/// Throws ResourceLimit when edges + |Λ| exceeds 20 bits.
FkDistribution fk_distribution(const GibbsSpec& spec, const std::vector<std::size_t>& edges);

/// Strip for the surface-tension estimator: Λ is a box, the interface
/// boundary is ζ(y) = +1 iff y·n >= 0, and `width` is the side length
/// normalizing the log ratio (raised to d - 1).
struct TauStrip {
  GibbsSpec plus;       // h = 0, plus boundary
  GibbsSpec interface;  // h = 0, interface boundary
  int width = 1;
};

/// Box with `extent` whose lower corner is `lo`, inside a one-site rim, on
/// the given environment seed and dilution.
TauStrip make_tau_strip(const std::vector<int>& lo, const std::vector<int>& extent,
                        std::span<const double> normal, double beta, double p, std::uint64_t seed,
                        int width);

/// (W)^{-(d-1)} log(Z⁺ / Z^ζ) by enumeration.
double tau_exact(const TauStrip& strip);

struct TauEstimate {
  double tau = 0.0;
  double std_error = 0.0;
  double disconnect_fraction = 0.0;
  std::size_t samples = 0;
  bool no_event = false;  // estimate is only a lower bound
};

/// Monte Carlo: estimate φ^{+,0}(D^ζ) from SW sweeps under plus boundary,
/// with batch-means error bars.
TauEstimate tau_mc(const TauStrip& strip, std::size_t sweeps, std::uint64_t seed,
                   std::size_t burn_in = 1000);

}  // namespace dilute
