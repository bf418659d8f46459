#include "dilute/wulff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "dilute/error.hpp"
#include "dilute/glauber.hpp"

namespace dilute {

namespace {

constexpr double kPi = 3.14159265358979323846;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double l1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

bool is_full_angle(double theta) { return std::abs(theta - kFullAngle) < 1e-12; }

void check_theta(double theta) {
  if (!((theta > 0.0 && theta <= kPi + 1e-15) || is_full_angle(theta)))
    throw InvalidParameter("cone angle must lie in (0, pi] or equal 2 pi");
}

// Keeps the part of a convex polygon with x·n <= c.
Polygon clip(const Polygon& poly, double nx, double ny, double c) {
  Polygon out;
  const std::size_t n = poly.size();
  out.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const double fa = a[0] * nx + a[1] * ny - c;
    const double fb = b[0] * nx + b[1] * ny - c;
    if (fa <= 0.0) out.push_back(a);
    if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
      const double s = fa / (fa - fb);
      out.push_back({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
    }
  }
  return out;
}

double polygon_area(const Polygon& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u[0] * v[1] - u[1] * v[0];
  }
  return 0.5 * a;
}

// Outward normals of the lateral faces of the planar cone.
std::vector<std::array<double, 2>> cone_normals_2d(double theta) {
  if (is_full_angle(theta)) return {};
  if (std::abs(theta - kPi) < 1e-15) return {{-1.0, 0.0}};
  const double a = theta / 2;
  return {{-std::sin(a), std::cos(a)}, {-std::sin(a), -std::cos(a)}};
}

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

IsotropicTension::IsotropicTension(int dim, double value) : dim_(dim), value_(value) {
  if (dim < 2 || dim > 3) throw InvalidParameter("surface tension: dimension must be 2 or 3");
  if (!(value > 0.0)) throw InvalidParameter("surface tension must be positive");
}

std::string IsotropicTension::name() const {
  std::ostringstream os;
  os << "iso(" << value_ << ")";
  return os.str();
}

L1Tension::L1Tension(int dim, double value) : dim_(dim), value_(value) {
  if (dim < 2 || dim > 3) throw InvalidParameter("surface tension: dimension must be 2 or 3");
  if (!(value > 0.0)) throw InvalidParameter("surface tension must be positive");
}

double L1Tension::operator()(std::span<const double> n) const { return value_ * l1(n) / norm(n); }

std::string L1Tension::name() const {
  std::ostringstream os;
  os << "l1aniso(" << value_ << ")";
  return os.str();
}

FunctionTension::FunctionTension(int dim, std::function<double(std::span<const double>)> fn,
                                 std::string label)
    : dim_(dim), fn_(std::move(fn)), label_(std::move(label)) {
  if (dim < 2 || dim > 3) throw InvalidParameter("surface tension: dimension must be 2 or 3");
}

std::shared_ptr<const SurfaceTension> parse_tension(const std::string& text, int dim, double beta) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidParameter("tension spec must look like iso:t or l1aniso:t");
  const std::string kind = text.substr(0, colon);
  double t = 0.0;
  try {
    t = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidParameter("tension spec: bad number in '" + text + "'");
  }
  if (kind == "iso") return std::make_shared<IsotropicTension>(dim, t * beta);
  if (kind == "l1aniso") return std::make_shared<L1Tension>(dim, t * beta);
  throw InvalidParameter("unknown tension model '" + kind + "'");
}

double onsager_tension(double beta) {
  const double K = beta / 2;
  return std::max(0.0, 2.0 * K + std::log(std::tanh(K)));
}

double onsager_magnetization(double beta) {
  const double s = std::sinh(beta);
  const double x = 1.0 - std::pow(s, -4.0);
  return x > 0.0 ? std::pow(x, 0.125) : 0.0;
}

ConeBody::ConeBody(int dim, double theta)
    : dim_(dim), theta_(theta), cos_half_(std::cos(theta / 2)), full_(is_full_angle(theta)) {
  check_theta(theta);
  if (std::abs(theta - kPi) < 1e-15) cos_half_ = 0.0;
}

bool ConeBody::contains(std::span<const double> x) const {
  if (full_) return true;
  return x[0] >= norm(x) * cos_half_ - 1e-12 * (1.0 + std::abs(x[0]));
}

std::vector<std::vector<double>> direction_net(int dim, int resolution) {
  std::vector<std::vector<double>> net;
  if (dim == 2) {
    const int m = resolution > 0 ? resolution : kNet2d;
    if (m % 4 != 0) throw InvalidParameter("direction_net: planar resolution must be a multiple of 4");
    for (int k = 0; k < m; ++k) {
      const double a = 2.0 * kPi * k / m;
      net.push_back({std::cos(a), std::sin(a)});
    }
    // Snap the axes exactly.
    for (auto& n : net)
      for (auto& c : n)
        if (std::abs(c) < 1e-15) c = 0.0;
    return net;
  }
  if (dim != 3) throw InvalidParameter("direction_net: dimension must be 2 or 3");
  const int level = resolution > 0 ? resolution : kNet3dLevel;
  const double phi = (1.0 + std::sqrt(5.0)) / 2;
  std::vector<std::array<double, 3>> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                                          {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                                          {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  auto normalize = [](std::array<double, 3> p) {
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    return std::array<double, 3>{p[0] / r, p[1] / r, p[2] / r};
  };
  for (auto& p : v) p = normalize(p);
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const auto& p = v[static_cast<std::size_t>(a)];
      const auto& q = v[static_cast<std::size_t>(b)];
      v.push_back(normalize({p[0] + q[0], p[1] + q[1], p[2] + q[2]}));
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& f : faces) {
      const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  for (const auto& p : v) net.push_back({p[0], p[1], p[2]});
  // The bounding box below relies on the coordinate axes being present.
  for (int axis = 0; axis < 3; ++axis)
    for (double s : {-1.0, 1.0}) {
      std::vector<double> e(3, 0.0);
      e[static_cast<std::size_t>(axis)] = s;
      const bool present = std::any_of(net.begin(), net.end(), [&](const auto& n) {
        return std::abs(n[0] - e[0]) + std::abs(n[1] - e[1]) + std::abs(n[2] - e[2]) < 1e-12;
      });
      if (!present) net.push_back(e);
    }
  return net;
}

WulffShape::WulffShape(std::shared_ptr<const SurfaceTension> tension, double theta, double b,
                       int resolution, std::uint64_t qmc_points)
    : tension_(std::move(tension)),
      dim_(tension_ ? tension_->dim() : 0),
      theta_(theta),
      b_(b),
      cone_(dim_ == 0 ? 2 : dim_, theta),
      qmc_points_(qmc_points) {
  if (!tension_) throw InvalidParameter("WulffShape: missing surface tension");
  if (!(b >= 0.0)) throw InvalidParameter("WulffShape: size must be nonnegative");
  net_ = direction_net(dim_, resolution);
  net_tau_.reserve(net_.size());
  for (const auto& n : net_) {
    const double t = (*tension_)(n);
    if (!(t > 0.0)) throw InvalidParameter("WulffShape: surface tension must be positive");
    net_tau_.push_back(t);
  }
  box_lo_.assign(static_cast<std::size_t>(dim_), 0.0);
  box_hi_.assign(static_cast<std::size_t>(dim_), 0.0);
  for (std::size_t k = 0; k < net_.size(); ++k)
    for (int i = 0; i < dim_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (net_[k][ui] == 1.0) box_hi_[ui] = net_tau_[k];
      if (net_[k][ui] == -1.0) box_lo_[ui] = -net_tau_[k];
    }
  if (!cone_.full()) box_lo_[0] = 0.0;

  if (dim_ == 2) {
    Polygon poly{{box_lo_[0], box_lo_[1]}, {box_hi_[0], box_lo_[1]}, {box_hi_[0], box_hi_[1]},
                 {box_lo_[0], box_hi_[1]}};
    for (std::size_t k = 0; k < net_.size() && !poly.empty(); ++k)
      poly = clip(poly, net_[k][0], net_[k][1], net_tau_[k]);
    for (const auto& n : cone_normals_2d(theta)) poly = clip(poly, n[0], n[1], 0.0);
    // Drop near-duplicate vertices left by clipping through existing corners.
    Polygon clean;
    for (const auto& p : poly)
      if (clean.empty() || std::hypot(p[0] - clean.back()[0], p[1] - clean.back()[1]) > 1e-14)
        clean.push_back(p);
    while (clean.size() > 1 &&
           std::hypot(clean.front()[0] - clean.back()[0], clean.front()[1] - clean.back()[1]) <= 1e-14)
      clean.pop_back();
    base_polygon_ = std::move(clean);
    base_volume_ = polygon_area(base_polygon_);
  } else {
    std::uint64_t inside = 0;
    double box = 1.0;
    for (int i = 0; i < dim_; ++i) box *= box_hi_[static_cast<std::size_t>(i)] - box_lo_[static_cast<std::size_t>(i)];
    std::vector<double> y(static_cast<std::size_t>(dim_));
    const std::uint64_t primes[] = {2, 3, 5};
    for (std::uint64_t q = 1; q <= qmc_points_; ++q) {
      for (int i = 0; i < dim_; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        y[ui] = box_lo_[ui] + radical_inverse(q, primes[i]) * (box_hi_[ui] - box_lo_[ui]);
      }
      inside += base_contains(y, 0.0) ? 1 : 0;
    }
    base_volume_ = box * static_cast<double>(inside) / static_cast<double>(qmc_points_);
  }
  if (!(base_volume_ > 0.0)) throw InvariantViolation("WulffShape: empty base set");
  w_theta_ = std::pow(base_volume_, -1.0 / dim_);
}

bool WulffShape::base_contains(std::span<const double> y, double slack) const {
  if (!cone_.contains(y)) return false;
  if (dim_ == 2) {
    const auto& p = base_polygon_;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& a = p[i];
      const auto& c = p[(i + 1) % p.size()];
      // Left of every counter-clockwise edge.
      const double cross = (c[0] - a[0]) * (y[1] - a[1]) - (c[1] - a[1]) * (y[0] - a[0]);
      if (cross < -slack) return false;
    }
    return true;
  }
  for (std::size_t k = 0; k < net_.size(); ++k)
    if (dot(net_[k], y) > net_tau_[k] + slack) return false;
  return true;
}

bool WulffShape::contains(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw InvalidParameter("WulffShape: point of wrong dimension");
  const double s = w_theta_ * b_;
  if (s == 0.0) return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
  std::vector<double> y(x.begin(), x.end());
  for (auto& v : y) v /= s;
  return base_contains(y, 1e-12);
}

double WulffShape::bounding_radius() const {
  double r = 0.0;
  for (int i = 0; i < dim_; ++i)
    r = std::max({r, std::abs(box_lo_[static_cast<std::size_t>(i)]), std::abs(box_hi_[static_cast<std::size_t>(i)])});
  return r * w_theta_ * b_;
}

double WulffShape::volume() const noexcept { return std::pow(b_, dim_); }

double WulffShape::measured_volume() const {
  const double s = w_theta_ * b_;
  if (dim_ == 2) return polygon_area(base_polygon_) * s * s;
  std::uint64_t inside = 0;
  double box = 1.0;
  for (int i = 0; i < dim_; ++i) box *= box_hi_[static_cast<std::size_t>(i)] - box_lo_[static_cast<std::size_t>(i)];
  std::vector<double> y(static_cast<std::size_t>(dim_));
  const std::uint64_t primes[] = {2, 3, 5};
  // A shifted sequence so the check is not the normalizing sum itself.
  for (std::uint64_t q = 1; q <= qmc_points_; ++q) {
    for (int i = 0; i < dim_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      double u = radical_inverse(q, primes[i]) + 0.5 * (std::sqrt(static_cast<double>(primes[i])) - 1.0);
      u -= std::floor(u);
      y[ui] = box_lo_[ui] + u * (box_hi_[ui] - box_lo_[ui]);
    }
    inside += base_contains(y, 0.0) ? 1 : 0;
  }
  return box * static_cast<double>(inside) / static_cast<double>(qmc_points_) * std::pow(s, dim_);
}

WulffShape WulffShape::resized(double b) const {
  WulffShape copy(*this);
  if (!(b >= 0.0)) throw InvalidParameter("WulffShape: size must be nonnegative");
  copy.b_ = b;
  return copy;
}

std::vector<std::array<double, 2>> WulffShape::polygon() const {
  if (dim_ != 2) throw InvalidParameter("WulffShape::polygon: planar shapes only");
  const double s = w_theta_ * b_;
  Polygon out = base_polygon_;
  for (auto& p : out) {
    p[0] *= s;
    p[1] *= s;
  }
  return out;
}

namespace {

// Points of the base set extreme along a subset of the net (d = 3).
std::vector<std::vector<double>> extreme_points(const WulffShape& shape,
                                                const std::vector<std::vector<double>>& samples) {
  const auto& net = shape.net();
  std::vector<std::vector<double>> out;
  const std::size_t stride = std::max<std::size_t>(1, net.size() / 400);
  for (std::size_t k = 0; k < net.size(); k += stride) {
    const std::vector<double>* best = nullptr;
    double best_v = -1e300;
    for (const auto& p : samples) {
      const double v = dot(net[k], p);
      if (v > best_v) {
        best_v = v;
        best = &p;
      }
    }
    if (best) out.push_back(*best);
  }
  return out;
}

std::vector<std::vector<double>> interior_samples(const WulffShape& shape, std::uint64_t count) {
  const double r = shape.bounding_radius();
  std::vector<std::vector<double>> out;
  const int d = shape.dim();
  const std::uint64_t primes[] = {2, 3, 5};
  std::vector<double> x(static_cast<std::size_t>(d));
  for (std::uint64_t q = 1; q <= count; ++q) {
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = (2.0 * radical_inverse(q, primes[i]) - 1.0) * r;
    if (shape.contains(x)) out.push_back(x);
  }
  return out;
}

}  // namespace

double WulffShape::diameter() const {
  double best = 0.0;
  if (dim_ == 2) {
    // Rotating calipers over antipodal vertex pairs.
    const auto p = polygon();
    const std::size_t n = p.size();
    if (n < 3) return 0.0;
    auto twice_area = [&](std::size_t a, std::size_t b, std::size_t c) {
      return std::abs((p[b][0] - p[a][0]) * (p[c][1] - p[a][1]) - (p[b][1] - p[a][1]) * (p[c][0] - p[a][0]));
    };
    auto dist = [&](std::size_t a, std::size_t b) { return std::hypot(p[a][0] - p[b][0], p[a][1] - p[b][1]); };
    std::size_t j = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t next = (i + 1) % n;
      while (twice_area(i, next, (j + 1) % n) > twice_area(i, next, j)) j = (j + 1) % n;
      best = std::max({best, dist(i, j), dist(next, j)});
    }
    return best;
  }
  if (b_ == 0.0) return 0.0;
  const auto ext = extreme_points(*this, interior_samples(*this, 1 << 15));
  for (std::size_t i = 0; i < ext.size(); ++i)
    for (std::size_t j = i + 1; j < ext.size(); ++j) {
      double s = 0.0;
      for (int k = 0; k < dim_; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        s += (ext[i][uk] - ext[j][uk]) * (ext[i][uk] - ext[j][uk]);
      }
      best = std::max(best, std::sqrt(s));
    }
  return best;
}

double WulffShape::cross_width() const {
  if (dim_ == 2) {
    double lo = 0.0, hi = 0.0;
    for (const auto& p : polygon()) {
      lo = std::min(lo, p[1]);
      hi = std::max(hi, p[1]);
    }
    return hi - lo;
  }
  if (b_ == 0.0) return 0.0;
  double best = 0.0;
  const auto ext = extreme_points(*this, interior_samples(*this, 1 << 15));
  for (std::size_t i = 0; i < ext.size(); ++i)
    for (std::size_t j = i + 1; j < ext.size(); ++j)
      best = std::max(best, std::hypot(ext[i][1] - ext[j][1], ext[i][2] - ext[j][2]));
  return best;
}

double WulffShape::lateral_l1_area() const {
  if (cone_.full() || b_ == 0.0) return 0.0;
  const double s = w_theta_ * b_;
  if (dim_ == 2) {
    double total = 0.0;
    const auto normals = cone_normals_2d(theta_);
    const auto p = polygon();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& a = p[i];
      const auto& c = p[(i + 1) % p.size()];
      const double len = std::hypot(c[0] - a[0], c[1] - a[1]);
      if (len == 0.0) continue;
      for (const auto& n : normals) {
        const double tol = 1e-10 * s;
        if (std::abs(a[0] * n[0] + a[1] * n[1]) < tol && std::abs(c[0] * n[0] + c[1] * n[1]) < tol) {
          total += len * (std::abs(n[0]) + std::abs(n[1]));
          break;
        }
      }
    }
    return total;
  }
  // Cone surface r (cos a, sin a cos φ, sin a sin φ); area element r sin a dr dφ
  // (r dr dφ on the flat face when a = π/2).
  const double a = theta_ / 2;
  const int steps = 720;
  double total = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double phi = 2.0 * kPi * (k + 0.5) / steps;
    const std::vector<double> dir{std::cos(a), std::sin(a) * std::cos(phi), std::sin(a) * std::sin(phi)};
    const std::vector<double> n{-std::sin(a), std::cos(a) * std::cos(phi), std::cos(a) * std::sin(phi)};
    double lo = 0.0, hi = 4.0 * bounding_radius() + 1e-12;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      std::vector<double> x{dir[0] * mid, dir[1] * mid, dir[2] * mid};
      // Nudge inside the cone so the membership test sees the face from within.
      x[0] += 1e-12 * mid;
      (contains(x) ? lo : hi) = mid;
    }
    total += 0.5 * lo * lo * std::sin(a) * l1(n) * (2.0 * kPi / steps);
  }
  return total;
}

double surface_functional(const Polygon& polygon, const SurfaceTension& tension, double theta) {
  check_theta(theta);
  if (tension.dim() != 2) throw InvalidParameter("surface_functional: planar tension required");
  if (polygon.size() < 3) throw InvalidParameter("surface_functional: need a polygon with area");
  double scale = 0.0;
  for (const auto& p : polygon) scale = std::max({scale, std::abs(p[0]), std::abs(p[1])});
  if (!std::isfinite(scale)) throw InvalidParameter("surface_functional: unbounded shape");
  const auto normals = cone_normals_2d(theta);
  double total = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& a = polygon[i];
    const auto& c = polygon[(i + 1) % polygon.size()];
    const double len = std::hypot(c[0] - a[0], c[1] - a[1]);
    if (len == 0.0) continue;
    bool lateral = false;
    for (const auto& n : normals) {
      const double tol = 1e-10 * scale;
      lateral = lateral || (std::abs(a[0] * n[0] + a[1] * n[1]) < tol && std::abs(c[0] * n[0] + c[1] * n[1]) < tol);
    }
    if (lateral) continue;
    const double n[2] = {(c[1] - a[1]) / len, -(c[0] - a[0]) / len};
    total += tension(n) * len;
  }
  return total;
}

double surface_functional(const WulffShape& shape) {
  if (shape.dim() == 2) return surface_functional(shape.polygon(), shape.tension(), shape.theta());
  return shape.dim() * shape.volume() * std::pow(shape.base_volume(), 1.0 / shape.dim()) / shape.size();
}

double DropletEnergetics::energy(double b) const noexcept {
  return std::pow(b, dim - 1) * F1 - std::pow(b, dim) * beta * m_star;
}

namespace {

std::shared_ptr<const SurfaceTension> borrow(const SurfaceTension& tension) {
  return std::shared_ptr<const SurfaceTension>(std::shared_ptr<const SurfaceTension>{}, &tension);
}

DropletEnergetics energetics_of(const WulffShape& unit, double beta, double m_star) {
  if (!(m_star > 0.0)) throw InvalidParameter("critical_values: m* must be positive");
  if (!(beta > 0.0)) throw InvalidParameter("critical_values: beta must be positive");
  DropletEnergetics e;
  e.dim = unit.dim();
  e.theta = unit.theta();
  e.beta = beta;
  e.m_star = m_star;
  const double d = e.dim;
  e.F1 = surface_functional(unit);
  e.B_root = e.F1 / (beta * m_star);
  e.B_c = (d - 1) / d * e.B_root;
  e.E_c = std::pow(e.F1 / d, d) * std::pow((d - 1) / (beta * m_star), d - 1);
  e.diameter_c = unit.diameter() * e.B_c;
  return e;
}

// Cost of the catalyst built on `unit`, given the full-space critical diameter.
double cost_of(const WulffShape& unit, double diameter_full, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("catalyst_cost: p must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  const auto shape = unit.resized(diameter_full / unit.cross_width());
  return std::log(1.0 / (1.0 - p)) * shape.lateral_l1_area();
}

}  // namespace

DropletEnergetics critical_values(const SurfaceTension& tension, double theta, double beta,
                                  double m_star) {
  if (!(m_star > 0.0)) throw InvalidParameter("critical_values: m* must be positive");
  if (!(beta > 0.0)) throw InvalidParameter("critical_values: beta must be positive");
  return energetics_of(WulffShape(borrow(tension), theta, 1.0), beta, m_star);
}

std::vector<std::pair<double, double>> energy_curve(const SurfaceTension& tension, double theta,
                                                    double beta, double m_star,
                                                    const std::vector<double>& b_grid) {
  for (std::size_t i = 0; i < b_grid.size(); ++i) {
    if (!(b_grid[i] >= 0.0)) throw InvalidParameter("energy_curve: grid must be nonnegative");
    if (i > 0 && !(b_grid[i] > b_grid[i - 1])) throw InvalidParameter("energy_curve: grid must increase");
  }
  const auto e = critical_values(tension, theta, beta, m_star);
  std::vector<std::pair<double, double>> out;
  out.reserve(b_grid.size());
  for (double b : b_grid) out.emplace_back(b, e.energy(b));
  return out;
}

std::vector<double> default_b_grid(const DropletEnergetics& energetics, std::size_t n) {
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = 2.0 * energetics.B_root * static_cast<double>(i) / static_cast<double>(n - 1);
  return grid;
}

double lambda2(double theta, double E_c, double C_dil, int dim) {
  return (E_c + C_dil / theta) / (dim + 1);
}

double estimate_C_dil(std::size_t carved_count, double p, const Scales& scales, int dim) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("estimate_C_dil: p must lie in [0, 1]");
  if (carved_count == 0) return 0.0;
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  return std::pow(scales.h, dim - 1) * static_cast<double>(carved_count) * std::log(1.0 / (1.0 - p));
}

double catalyst_size(const SurfaceTension& tension, double theta, double beta, double m_star) {
  const auto full = critical_values(tension, kFullAngle, beta, m_star);
  return full.diameter_c / WulffShape(borrow(tension), theta, 1.0).cross_width();
}

double catalyst_cost(const SurfaceTension& tension, double theta, double beta, double m_star,
                     double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("catalyst_cost: p must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  const auto full = critical_values(tension, kFullAngle, beta, m_star);
  return cost_of(WulffShape(borrow(tension), theta, 1.0), full.diameter_c, p);
}

ThetaOptimum optimize_theta(const SurfaceTension& tension, double beta, double m_star, double p,
                            const std::vector<double>& theta_grid) {
  if (theta_grid.empty()) throw InvalidParameter("optimize_theta: empty grid");
  for (double t : theta_grid)
    if (!(t > 0.0 && t < kPi)) throw InvalidParameter("optimize_theta: angles must lie in (0, pi)");
  const int d = tension.dim();
  ThetaOptimum out;
  const auto full = critical_values(tension, kFullAngle, beta, m_star);
  out.lambda2_full = full.E_c / (d + 1);
  out.lambda2 = std::numeric_limits<double>::infinity();
  for (double t : theta_grid) {
    ThetaPoint pt;
    pt.theta = t;
    const WulffShape unit(borrow(tension), t, 1.0);
    pt.E_c = energetics_of(unit, beta, m_star).E_c;
    pt.cost = cost_of(unit, full.diameter_c, p);
    pt.lambda2 = lambda2(t, pt.E_c, pt.cost * t, d);
    if (pt.lambda2 < out.lambda2) {
      out.lambda2 = pt.lambda2;
      out.theta = t;
    }
    out.grid.push_back(pt);
  }
  out.ratio = out.lambda2 / out.lambda2_full;
  std::vector<double> x, y;
  for (const auto& pt : out.grid) {
    x.push_back(std::log(pt.theta));
    y.push_back(std::log(pt.E_c));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  out.E_c_exponent = sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  return out;
}

MagnetizationEstimate estimate_m_star(const Environment& env, double beta, double h_small,
                                      MagnetizationSampler sampler, std::size_t samples,
                                      std::uint64_t seed) {
  if (samples < 20) throw InvalidParameter("estimate_m_star: need at least 20 samples");
  const auto& lat = env.lattice();
  const Point origin(static_cast<std::size_t>(lat.dim()), 0);
  const auto o = lat.index(origin);
  if (o == npos || !env.region.contains(o)) throw InvalidParameter("estimate_m_star: region must contain the origin");
  auto spec = make_spec(env, beta, h_small, BoundaryCondition::uniform(lat, BoundaryKind::plus));
  std::vector<double> values;
  values.reserve(samples);
  MagnetizationEstimate out;
  if (sampler == MagnetizationSampler::cftp) {
    for (std::size_t i = 0; i < samples; ++i) values.push_back(cftp_sample(spec, hash_words({seed, i})).sample[o]);
  } else {
    RunOptions opt;
    const double burn = 50.0;
    for (std::size_t i = 0; i < samples; ++i) opt.snapshot_times.push_back(burn + static_cast<double>(i));
    auto traj = run(spec, make_spins(spec, 1), 0.0, burn + static_cast<double>(samples), GraphicalNoise(seed), opt);
    for (const auto& [t, s] : traj.snapshots) values.push_back(s[o]);
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  out.m_star = mean;
  out.samples = values.size();
  out.std_error = std::sqrt(var / n);
  if (sampler == MagnetizationSampler::glauber) {
    const std::size_t batches = 20, len = values.size() / batches;
    std::vector<double> means(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < len; ++i) means[b] += values[b * len + i];
      means[b] /= static_cast<double>(len);
    }
    double bv = 0.0;
    for (double m : means) bv += (m - mean) * (m - mean);
    bv /= (batches - 1.0);
    const double batch_se = std::sqrt(bv / batches);
    // Integrated autocorrelation time in sample units.
    const double tau = var > 0.0 ? batch_se * batch_se / (var / n) : 1.0;
    out.std_error = std::max(out.std_error, batch_se);
    out.converged = tau < static_cast<double>(len);
  }
  return out;
}

std::vector<LatticeRegion> wulff_annuli(const WulffShape& shape, double b_in, double b_out,
                                        int count, const Scales& scales,
                                        std::shared_ptr<const Lattice> lattice, const Point& anchor) {
  if (count < 1 || !(b_out > b_in) || b_in < 0.0) throw InvalidParameter("wulff_annuli: need 0 <= b_in < b_out, count >= 1");
  const double eps = (b_out - b_in) / count;
  std::vector<LatticeRegion> out;
  for (int j = 0; j < count; ++j) {
    const double inner = std::max(b_in, b_in + (j - 1) * eps);
    const double outer = std::min(b_out, b_in + (j + 1) * eps);
    auto block = discretize(shape.resized(outer), scales, lattice, anchor);
    if (inner > 0.0) block = block.subtract(discretize(shape.resized(inner), scales, lattice, anchor));
    if (!block.empty()) out.push_back(std::move(block));
  }
  return out;
}

}  // namespace dilute
