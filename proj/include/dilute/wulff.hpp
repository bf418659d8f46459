#pragma once

// Surface-tension models, Wulff shapes inside cones, the droplet energy curve
// and its critical values, and the relaxation exponent optimized over the
// cone angle.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dilute/gibbs.hpp"

namespace dilute {

inline constexpr double kFullAngle = 2.0 * 3.14159265358979323846;

/// τ(n) on unit vectors, β included. Must be positive and even.
class SurfaceTension {
 public:
  virtual ~SurfaceTension() = default;
  virtual int dim() const = 0;
  virtual double operator()(std::span<const double> n) const = 0;
  virtual bool isotropic() const { return false; }
  virtual std::string name() const = 0;
};

/// τ ≡ value.
class IsotropicTension final : public SurfaceTension {
 public:
  IsotropicTension(int dim, double value);
  int dim() const override { return dim_; }
  double operator()(std::span<const double>) const override { return value_; }
  bool isotropic() const override { return true; }
  std::string name() const override;
  double value() const noexcept { return value_; }

 private:
  int dim_;
  double value_;
};

/// τ(n) = value · |n|_1 / |n|_2; its Wulff shape is a cube.
class L1Tension final : public SurfaceTension {
 public:
  L1Tension(int dim, double value);
  int dim() const override { return dim_; }
  double operator()(std::span<const double> n) const override;
  std::string name() const override;

 private:
  int dim_;
  double value_;
};

/// Arbitrary positive even function.
class FunctionTension final : public SurfaceTension {
 public:
  FunctionTension(int dim, std::function<double(std::span<const double>)> fn, std::string label);
  int dim() const override { return dim_; }
  double operator()(std::span<const double> n) const override { return fn_(n); }
  std::string name() const override { return label_; }

 private:
  int dim_;
  std::function<double(std::span<const double>)> fn_;
  std::string label_;
};

/// "iso:t" or "l1aniso:t": τ = t·β (isotropic) or t·β·|n|_1/|n|_2.
std::shared_ptr<const SurfaceTension> parse_tension(const std::string& text, int dim, double beta);

/// Axial surface tension of the undiluted square-lattice model, β included:
/// 2K + ln tanh K with K = β/2 (zero at and above the critical temperature).
double onsager_tension(double beta);
/// Spontaneous magnetization (1 - sinh(β)^-4)^(1/8), zero for β <= β_c.
double onsager_magnetization(double beta);

/// A_θ = {x : x_1 >= |x|_2 cos(θ/2)}, θ in (0, π] or 2π (all of R^d).
class ConeBody final : public ConvexBody {
 public:
  ConeBody(int dim, double theta);
  int dim() const override { return dim_; }
  bool contains(std::span<const double> x) const override;
  double bounding_radius() const override { return std::numeric_limits<double>::infinity(); }
  double theta() const noexcept { return theta_; }
  bool full() const noexcept { return full_; }

 private:
  int dim_;
  double theta_;
  double cos_half_;
  bool full_;
};

/// Direction net on S^{d-1}: equally spaced angles (d = 2) or a subdivided
/// icosahedron (d = 3).
std::vector<std::vector<double>> direction_net(int dim, int resolution);

inline constexpr int kNet2d = 4096;
inline constexpr int kNet3dLevel = 5;

/// W_θ(b) = w_θ b (A_θ ∩ {x : x·n <= τ(n) for n in the net}), with w_θ
/// fixing the volume of W_θ(1) to one.
class WulffShape final : public ConvexBody {
 public:
  WulffShape(std::shared_ptr<const SurfaceTension> tension, double theta, double b,
             int resolution = 0, std::uint64_t qmc_points = 1 << 17);

  int dim() const override { return dim_; }
  bool contains(std::span<const double> x) const override;
  double bounding_radius() const override;

  double theta() const noexcept { return theta_; }
  double size() const noexcept { return b_; }
  double w_theta() const noexcept { return w_theta_; }
  /// Volume of the unnormalized set A_θ ∩ {x·n <= τ(n)}.
  double base_volume() const noexcept { return base_volume_; }
  /// b^d by construction; `measured_volume` recomputes it from the geometry.
  double volume() const noexcept;
  double measured_volume() const;
  /// Same shape at another size.
  WulffShape resized(double b) const;
  /// Vertices of the polygon, counter-clockwise (d = 2 only).
  std::vector<std::array<double, 2>> polygon() const;
  /// Largest distance between two points of the shape.
  double diameter() const;
  /// Width of the shape across the cone axis: max of |x_⊥| twice (d = 2: the
  /// extent in x_2).
  double cross_width() const;
  /// (d-1)-measure of the part of the boundary on the cone's lateral surface,
  /// weighted by |n|_1.
  double lateral_l1_area() const;

  const SurfaceTension& tension() const noexcept { return *tension_; }
  const std::shared_ptr<const SurfaceTension>& tension_ptr() const noexcept { return tension_; }
  const std::vector<std::vector<double>>& net() const noexcept { return net_; }
  const std::vector<double>& net_tension() const noexcept { return net_tau_; }

 private:
  bool base_contains(std::span<const double> y, double slack) const;

  std::shared_ptr<const SurfaceTension> tension_;
  int dim_;
  double theta_;
  double b_;
  ConeBody cone_;
  std::vector<std::vector<double>> net_;
  std::vector<double> net_tau_;
  std::vector<std::array<double, 2>> base_polygon_;  // d = 2
  std::vector<double> box_lo_, box_hi_;              // bounding box of the base set
  double base_volume_ = 0.0;
  double w_theta_ = 0.0;
  std::uint64_t qmc_points_;
};

/// Convex polygon in the plane, counter-clockwise.
using Polygon = std::vector<std::array<double, 2>>;

/// Σ over edges not lying on the lateral boundary of A_θ of τ(n)·length.
double surface_functional(const Polygon& polygon, const SurfaceTension& tension, double theta);
/// F(W_θ(b)) from the support identity ∫ x·n dH^{d-1} = d·volume: the
/// lateral faces pass through the apex and contribute nothing.
double surface_functional(const WulffShape& shape);

struct DropletEnergetics {
  int dim = 2;
  double theta = kFullAngle;
  double F1 = 0.0;  // F(W_θ(1))
  double beta = 1.0;
  double m_star = 1.0;
  double B_c = 0.0;
  double B_root = 0.0;
  double E_c = 0.0;
  double diameter_c = 0.0;  // diameter of W_θ(B_c)

  /// E^θ(b) = b^{d-1} F1 - b^d β m*.
  double energy(double b) const noexcept;
};

/// Throws InvalidParameter for m* <= 0 or β <= 0.
DropletEnergetics critical_values(const SurfaceTension& tension, double theta, double beta,
                                  double m_star);

/// (b, E^θ(b)) on the grid; throws InvalidParameter for unsorted or
/// negative grids and for m* <= 0.
std::vector<std::pair<double, double>> energy_curve(const SurfaceTension& tension, double theta,
                                                    double beta, double m_star,
                                                    const std::vector<double>& b_grid);
/// n uniformly spaced points on [0, 2 B_root].
std::vector<double> default_b_grid(const DropletEnergetics& energetics, std::size_t n = 512);

/// (E_c + C_dil / θ) / (d + 1).
double lambda2(double theta, double E_c, double C_dil, int dim);

/// h^{d-1} · carved · log(1/(1-p)); +inf when p = 1.
double estimate_C_dil(std::size_t carved_count, double p, const Scales& scales, int dim);

/// Catalyst size: the smallest b whose cross width matches the diameter of
/// the full-space critical droplet, so a filled catalyst seeds a
/// supercritical droplet at its mouth.
double catalyst_size(const SurfaceTension& tension, double theta, double beta, double m_star);

/// Continuum dilution cost C_dil/θ of a catalyst: log(1/(1-p)) times the
/// |n|_1-weighted lateral area of W_θ(catalyst_size).
double catalyst_cost(const SurfaceTension& tension, double theta, double beta, double m_star,
                     double p);

struct ThetaPoint {
  double theta = 0.0;
  double E_c = 0.0;
  double cost = 0.0;  // C_dil / θ
  double lambda2 = 0.0;
};

struct ThetaOptimum {
  double theta = 0.0;
  double lambda2 = 0.0;
  double lambda2_full = 0.0;  // E_c^{2π} / (d + 1) of the undiluted model
  double ratio = 0.0;
  double E_c_exponent = 0.0;  // slope of log E_c^θ against log θ
  std::vector<ThetaPoint> grid;
};

/// Grid minimizer of λ₂^θ over θ in (0, π); throws InvalidParameter for an
/// empty grid or angles outside (0, π).
ThetaOptimum optimize_theta(const SurfaceTension& tension, double beta, double m_star, double p,
                            const std::vector<double>& theta_grid);

enum class MagnetizationSampler { cftp, glauber };

struct MagnetizationEstimate {
  double m_star = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  bool converged = true;
};

/// Mean of σ(0) under plus boundary and field h_small on the region of
/// `env` (which must contain the origin), averaged over `samples` draws.
MagnetizationEstimate estimate_m_star(const Environment& env, double beta, double h_small,
                                      MagnetizationSampler sampler, std::size_t samples,
                                      std::uint64_t seed);

/// Blocks of the annulus decomposition: with ε = (b_out - b_in) / count,
/// block j is W_θ(b_in + (j-1)ε, b_in + (j+1)ε) discretized at `anchor`,
/// clipped to [b_in, b_out].
std::vector<LatticeRegion> wulff_annuli(const WulffShape& shape, double b_in, double b_out,
                                        int count, const Scales& scales,
                                        std::shared_ptr<const Lattice> lattice, const Point& anchor);

}  // namespace dilute
