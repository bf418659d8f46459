#pragma once

// Finite hypercubic lattices, regions, dilution environments, mesoscopic
// boxes and the discretization of continuum shapes onto boxes.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dilute {

using Point = std::vector<int>;
inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/// Ambient hyperrectangle [lo, lo + extent) of Z^d with a precomputed
/// nearest-neighbour table.
///
/// Sites are indexed lexicographically with the first coordinate most
/// significant. Direction `dir` in [0, 2d) means axis dir/2, negative step
/// for even dir and positive step for odd dir. The edge {v, v + e_k} has id
/// v*d + k; ids whose upper endpoint falls off the lattice are invalid.
class Lattice {
 public:
  Lattice(Point lo, std::vector<int> extent);

  /// [lo, lo + size)^d.
  static std::shared_ptr<const Lattice> cube(int dim, int lo, int size);

  int dim() const noexcept { return dim_; }
  const Point& lo() const noexcept { return lo_; }
  const std::vector<int>& extent() const noexcept { return extent_; }
  std::size_t size() const noexcept { return size_; }
  int degree() const noexcept { return 2 * dim_; }

  bool contains(std::span<const int> p) const noexcept;
  /// npos when p lies outside the lattice.
  std::size_t index(std::span<const int> p) const noexcept;
  Point point(std::size_t v) const;
  int coord(std::size_t v, int axis) const noexcept;

  std::size_t neighbor(std::size_t v, int dir) const noexcept {
    return nbr_[v * static_cast<std::size_t>(2 * dim_) + static_cast<std::size_t>(dir)];
  }

  std::size_t edge_slots() const noexcept { return size_ * static_cast<std::size_t>(dim_); }
  bool edge_valid(std::size_t e) const noexcept;
  /// Id of the edge joining v to its neighbour in direction dir (npos if none).
  std::size_t edge_between(std::size_t v, int dir) const noexcept;
  /// (lower endpoint, upper endpoint) of a valid edge.
  std::pair<std::size_t, std::size_t> edge_ends(std::size_t e) const noexcept;

  /// Hash of the global coordinates; independent of lo/extent.
  std::uint64_t site_key(std::size_t v) const noexcept { return site_keys_[v]; }
  std::uint64_t edge_key(std::size_t e) const noexcept;

  bool operator==(const Lattice& other) const noexcept {
    return lo_ == other.lo_ && extent_ == other.extent_;
  }

 private:
  int dim_;
  Point lo_;
  std::vector<int> extent_;
  std::vector<std::size_t> stride_;
  std::size_t size_;
  std::vector<std::size_t> nbr_;
  std::vector<std::uint64_t> site_keys_;
};

/// A vertex set Λ inside an ambient lattice. Edges and boundaries are those
/// of Z^d restricted to the ambient lattice; neighbours that fall off the
/// ambient lattice do not exist (they behave as free boundary).
class LatticeRegion {
 public:
  LatticeRegion(std::shared_ptr<const Lattice> lattice, std::vector<std::uint8_t> mask);

  static LatticeRegion full(std::shared_ptr<const Lattice> lattice);
  static LatticeRegion empty(std::shared_ptr<const Lattice> lattice);
  /// The sub-box [lo, lo + extent) of the ambient lattice.
  static LatticeRegion box(std::shared_ptr<const Lattice> lattice, const Point& lo,
                           const std::vector<int>& extent);
  template <class Pred>
  static LatticeRegion where(std::shared_ptr<const Lattice> lattice, Pred pred) {
    std::vector<std::uint8_t> mask(lattice->size(), 0);
    for (std::size_t v = 0; v < lattice->size(); ++v) mask[v] = pred(lattice->point(v)) ? 1 : 0;
    return LatticeRegion(std::move(lattice), std::move(mask));
  }

  const Lattice& lattice() const noexcept { return *lattice_; }
  const std::shared_ptr<const Lattice>& lattice_ptr() const noexcept { return lattice_; }
  bool contains(std::size_t v) const noexcept { return v < mask_.size() && mask_[v] != 0; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
  const std::vector<std::size_t>& vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }
  bool empty() const noexcept { return vertices_.empty(); }

  /// E(Λ): both endpoints inside.
  std::vector<std::size_t> internal_edges() const;
  /// Edges with exactly one endpoint inside.
  std::vector<std::size_t> boundary_edges() const;
  /// Vertices outside Λ adjacent to Λ.
  std::vector<std::size_t> outer_boundary() const;

  LatticeRegion unite(const LatticeRegion& other) const;
  LatticeRegion subtract(const LatticeRegion& other) const;
  LatticeRegion intersect(const LatticeRegion& other) const;
  bool subset_of(const LatticeRegion& other) const;

  bool operator==(const LatticeRegion& other) const noexcept {
    return *lattice_ == *other.lattice_ && mask_ == other.mask_;
  }

 private:
  std::shared_ptr<const Lattice> lattice_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> vertices_;
};

/// Quenched coupling field J(e) in {0,1} on every edge of the ambient
/// lattice, plus the set of edges forced closed by catalyst carving.
struct Environment {
  LatticeRegion region;
  std::vector<std::uint8_t> coupling;  // indexed by edge id; 0 on invalid slots
  double p = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> carved;  // sorted edge ids

  const Lattice& lattice() const noexcept { return region.lattice(); }
  const std::shared_ptr<const Lattice>& lattice_ptr() const noexcept {
    return region.lattice_ptr();
  }
  int J(std::size_t e) const noexcept { return coupling[e]; }
  /// Coupling on the edge leaving v in direction dir (0 if it does not exist).
  int J_dir(std::size_t v, int dir) const noexcept {
    auto e = lattice().edge_between(v, dir);
    return e == npos ? 0 : coupling[e];
  }
};

/// Each edge open independently with probability p, keyed by (seed, global
/// edge coordinates) so that a larger lattice reproduces the same couplings
/// on the shared edges.
Environment gen_environment(const LatticeRegion& region, double p, std::uint64_t seed);

/// Undiluted environment (J = 1 everywhere).
Environment uniform_environment(const LatticeRegion& region);

/// Field scale h, macroscopic scale N and mesoscopic scale K.
struct Scales {
  double h = 1.0;
  int N = 1;
  int K = 1;

  /// K = floor(h^(-1/(2d))), N = K * floor(h^(-1) / K).
  static Scales from_field(double h, int dim);
  /// Explicit scales; K must divide N. h defaults to 1/N.
  static Scales fixed(int N, int K, double h = 0.0);
};

enum class BoundaryKind { plus, minus, free, wired };

BoundaryKind parse_boundary_kind(const std::string& name);
std::string to_string(BoundaryKind kind);
/// Spin value a kind freezes outside Λ; wired boundaries act as plus.
std::int8_t boundary_spin(BoundaryKind kind) noexcept;

/// Frozen exterior configuration ζ over the ambient lattice. Value 0 marks a
/// free site: edges to it do not enter the Hamiltonian.
struct BoundaryCondition {
  std::vector<std::int8_t> zeta;

  std::int8_t at(std::size_t v) const noexcept { return zeta[v]; }

  static BoundaryCondition uniform(const Lattice& lattice, BoundaryKind kind);
  /// ζ(y) = +1 if y·n >= 0, -1 otherwise.
  static BoundaryCondition interface(const Lattice& lattice, std::span<const double> normal);
  /// Inner set gets `inner`, the rest of `cone` gets `outer`, everything
  /// outside `cone` is free (the (+,-), (-,+), (+,+), (-,-) taxonomy).
  static BoundaryCondition annulus(const LatticeRegion& inner, const LatticeRegion& cone,
                                   BoundaryKind inner_kind, BoundaryKind outer_kind);
  static BoundaryCondition from_spins(std::vector<std::int8_t> spins) {
    return BoundaryCondition{std::move(spins)};
  }
};

/// A closed convex body in R^d, queried by point membership.
class ConvexBody {
 public:
  virtual ~ConvexBody() = default;
  virtual int dim() const = 0;
  virtual bool contains(std::span<const double> x) const = 0;
  /// Bound on |x|_inf over the body; +inf for unbounded bodies.
  virtual double bounding_radius() const = 0;
};

/// Axis-aligned cube [-r, r]^d.
class CubeBody final : public ConvexBody {
 public:
  CubeBody(int dim, double half_side) : dim_(dim), r_(half_side) {}
  int dim() const override { return dim_; }
  bool contains(std::span<const double> x) const override;
  double bounding_radius() const override { return r_; }

 private:
  int dim_;
  double r_;
};

/// Box index i with x in B_K(i) = [-K/2, K/2)^d + K i.
Point box_index_of(std::span<const int> x, int K);
/// Lattice sites of B_K(i), in lexicographic order.
std::vector<Point> box_sites(std::span<const int> index, int K);

struct MesoBox {
  Point index;
  std::vector<std::size_t> sites;  // sites of B_K(i) inside the ambient lattice
  bool interior = false;           // all K^d sites inside the region
};

/// All boxes B_K(i) meeting the ambient lattice; they are disjoint and tile it.
std::vector<MesoBox> box_decomposition(const LatticeRegion& region, int K);

/// Union of boxes B_K(i) + anchor whose macroscopic cube
/// K i / N + [-K/2N, K/2N]^d lies in the body. Unbounded bodies are clipped
/// to the lattice.
LatticeRegion discretize(const ConvexBody& body, const Scales& scales,
                         std::shared_ptr<const Lattice> lattice, const Point& anchor);
/// As above on a fresh lattice centred at the origin, sized to the body plus
/// one box of margin. An empty result is allowed.
LatticeRegion discretize(const ConvexBody& body, const Scales& scales);

struct CarveResult {
  Environment env;
  std::size_t carved_count = 0;  // edges carved by this call
};

/// Forces J = 0 on every edge {x, y} with x in the discretized `shape` and y
/// outside the discretized `cone`, both placed at `anchor`. Throws OutOfBounds
/// if the discretized shape is not inside env.region.
CarveResult carve_catalyst(const Environment& env, const ConvexBody& shape,
                           const ConvexBody& cone, const Point& anchor, const Scales& scales);

/// Header (magic, d, lo, extent, p, seed, carved count), J bitmap over valid
/// edges in id order, region bitmap, carved edge ids. Little endian.
void write_snapshot(const Environment& env, std::ostream& out);
Environment read_snapshot(std::istream& in);
std::vector<std::uint8_t> snapshot_bytes(const Environment& env);

}  // namespace dilute
