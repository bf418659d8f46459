#pragma once

// Hamiltonian, exact Gibbs enumeration and the exact heat-bath generator on
// tiny regions. These are the brute-force references for the samplers.

#include <cstdint>
#include <memory>
#include <vector>

#include "dilute/lattice.hpp"

namespace dilute {

/// Spins over the whole ambient lattice: the state on Λ, ζ elsewhere
/// (0 on free sites).
using Spins = std::vector<std::int8_t>;

struct GibbsSpec {
  std::shared_ptr<const Environment> env;
  LatticeRegion region;  // Λ; usually env->region
  double beta = 1.0;
  double h = 0.0;
  BoundaryCondition boundary;

  const Lattice& lattice() const noexcept { return region.lattice(); }
  /// Same parameters on a different vertex set of the same lattice.
  GibbsSpec on(LatticeRegion sub) const;
  GibbsSpec with_boundary(BoundaryCondition bc) const;
  GibbsSpec with_field(double field) const;
};

GibbsSpec make_spec(Environment env, double beta, double h, BoundaryCondition boundary);
GibbsSpec make_spec(std::shared_ptr<const Environment> env, double beta, double h,
                    BoundaryCondition boundary);

/// Λ filled with `fill`, the exterior with ζ.
Spins make_spins(const GibbsSpec& spec, std::int8_t fill);
/// Λ set from bit i of `bits` for the i-th vertex of Λ (1 -> +1).
Spins spins_from_bits(const GibbsSpec& spec, std::uint64_t bits);
std::uint64_t bits_of(const GibbsSpec& spec, const Spins& spins);
/// Replaces the exterior of `spins` by ζ; Λ is left untouched.
void impose_boundary(const GibbsSpec& spec, Spins& spins);

/// H = sum over edges meeting Λ of J(e) 1{σx != σy} + h |{x in Λ : σx = -1}|;
/// edges to free exterior sites are omitted.
double hamiltonian(const Spins& spins, const GibbsSpec& spec);

/// Sum over y ~ x of J(x,y) σ(y) (free sites count 0).
double local_field(const Spins& spins, const GibbsSpec& spec, std::size_t x);

struct ExactGibbs {
  double log_Z = 0.0;
  std::vector<double> prob;  // indexed by bits_of
};

inline constexpr std::size_t kExactGibbsCap = 20;
inline constexpr std::size_t kExactGapCap = 12;

/// Throws ResourceLimit above kExactGibbsCap sites.
ExactGibbs exact_gibbs(const GibbsSpec& spec);

/// P(σ(x) = +1 | σ off x) from the full Hamiltonian difference.
double exact_conditional(const GibbsSpec& spec, const Spins& spins, std::size_t x);

struct GeneratorReport {
  double gap = 0.0;                // smallest nonzero eigenvalue of -L
  std::vector<double> stationary;  // normalized kernel of L^T, indexed by bits_of
  double row_sum_error = 0.0;      // max |sum_j L(i,j)|
  double detailed_balance_error = 0.0;
};

/// Heat-bath generator with rate-one clocks; throws ResourceLimit above
/// kExactGapCap sites.
GeneratorReport exact_generator_gap(const GibbsSpec& spec);

struct ProfileBox {
  Point index;
  double value = 0.0;
  bool interior = false;
};

/// Per-box ½(1 + σ(B)/m*) for boxes inside Λ and ½(1 + σ(B)) otherwise,
/// with σ(B) the mean spin over the box sites.
std::vector<ProfileBox> magnetization_profile(const Spins& spins, const GibbsSpec& spec,
                                              const Scales& scales, double m_star);

}  // namespace dilute
