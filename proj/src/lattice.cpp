#include "dilute/lattice.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "dilute/error.hpp"
#include "dilute/rng.hpp"

namespace dilute {

namespace {

std::uint64_t coord_key(std::span<const int> p) {
  std::uint64_t h = 0x243f6a8885a308d3ULL ^ p.size();
  for (int c : p) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
  return h;
}

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Iterates every integer point of the box [lo, hi] (inclusive).
template <class Fn>
void for_each_index(const Point& lo, const Point& hi, Fn fn) {
  const std::size_t d = lo.size();
  for (std::size_t k = 0; k < d; ++k)
    if (hi[k] < lo[k]) return;
  Point i = lo;
  while (true) {
    fn(i);
    std::size_t k = d;
    while (true) {
      if (k == 0) return;
      --k;
      if (++i[k] <= hi[k]) break;
      i[k] = lo[k];
    }
  }
}

}  // namespace

Lattice::Lattice(Point lo, std::vector<int> extent)
    : dim_(static_cast<int>(lo.size())), lo_(std::move(lo)), extent_(std::move(extent)) {
  if (dim_ < 1 || extent_.size() != lo_.size())
    throw InvalidParameter("lattice: lo and extent must have the same positive length");
  stride_.assign(static_cast<std::size_t>(dim_), 1);
  size_ = 1;
  for (int k = dim_ - 1; k >= 0; --k) {
    if (extent_[k] <= 0) throw InvalidParameter("lattice: extents must be positive");
    stride_[k] = size_;
    size_ *= static_cast<std::size_t>(extent_[k]);
  }
  const auto deg = static_cast<std::size_t>(2 * dim_);
  nbr_.assign(size_ * deg, npos);
  site_keys_.resize(size_);
  Point p(dim_);
  for (std::size_t v = 0; v < size_; ++v) {
    std::size_t rem = v;
    for (int k = 0; k < dim_; ++k) {
      int off = static_cast<int>(rem / stride_[k]);
      rem %= stride_[k];
      p[k] = lo_[k] + off;
      if (off > 0) nbr_[v * deg + 2 * k] = v - stride_[k];
      if (off + 1 < extent_[k]) nbr_[v * deg + 2 * k + 1] = v + stride_[k];
    }
    site_keys_[v] = coord_key(p);
  }
}

std::shared_ptr<const Lattice> Lattice::cube(int dim, int lo, int size) {
  return std::make_shared<const Lattice>(Point(dim, lo), std::vector<int>(dim, size));
}

bool Lattice::contains(std::span<const int> p) const noexcept {
  if (p.size() != static_cast<std::size_t>(dim_)) return false;
  for (int k = 0; k < dim_; ++k)
    if (p[k] < lo_[k] || p[k] >= lo_[k] + extent_[k]) return false;
  return true;
}

std::size_t Lattice::index(std::span<const int> p) const noexcept {
  if (!contains(p)) return npos;
  std::size_t v = 0;
  for (int k = 0; k < dim_; ++k) v += static_cast<std::size_t>(p[k] - lo_[k]) * stride_[k];
  return v;
}

Point Lattice::point(std::size_t v) const {
  Point p(dim_);
  for (int k = 0; k < dim_; ++k) {
    p[k] = lo_[k] + static_cast<int>(v / stride_[k]);
    v %= stride_[k];
  }
  return p;
}

int Lattice::coord(std::size_t v, int axis) const noexcept {
  return lo_[axis] + static_cast<int>((v / stride_[axis]) % static_cast<std::size_t>(extent_[axis]));
}

bool Lattice::edge_valid(std::size_t e) const noexcept {
  if (e >= edge_slots()) return false;
  const auto d = static_cast<std::size_t>(dim_);
  return neighbor(e / d, static_cast<int>(2 * (e % d) + 1)) != npos;
}

std::size_t Lattice::edge_between(std::size_t v, int dir) const noexcept {
  std::size_t u = neighbor(v, dir);
  if (u == npos) return npos;
  const auto d = static_cast<std::size_t>(dim_);
  const auto axis = static_cast<std::size_t>(dir / 2);
  return (dir % 2 == 1 ? v : u) * d + axis;
}

std::pair<std::size_t, std::size_t> Lattice::edge_ends(std::size_t e) const noexcept {
  const auto d = static_cast<std::size_t>(dim_);
  std::size_t v = e / d;
  return {v, neighbor(v, static_cast<int>(2 * (e % d) + 1))};
}

std::uint64_t Lattice::edge_key(std::size_t e) const noexcept {
  const auto d = static_cast<std::size_t>(dim_);
  return hash_words({site_key(e / d), e % d});
}

// ---------------------------------------------------------------------------

LatticeRegion::LatticeRegion(std::shared_ptr<const Lattice> lattice, std::vector<std::uint8_t> mask)
    : lattice_(std::move(lattice)), mask_(std::move(mask)) {
  if (!lattice_) throw InvalidParameter("region: null lattice");
  if (mask_.size() != lattice_->size()) throw InvalidParameter("region: mask size mismatch");
  for (std::size_t v = 0; v < mask_.size(); ++v) {
    if (mask_[v]) {
      mask_[v] = 1;
      vertices_.push_back(v);
    }
  }
}

LatticeRegion LatticeRegion::full(std::shared_ptr<const Lattice> lattice) {
  std::vector<std::uint8_t> mask(lattice->size(), 1);
  return LatticeRegion(std::move(lattice), std::move(mask));
}

LatticeRegion LatticeRegion::empty(std::shared_ptr<const Lattice> lattice) {
  std::vector<std::uint8_t> mask(lattice->size(), 0);
  return LatticeRegion(std::move(lattice), std::move(mask));
}

LatticeRegion LatticeRegion::box(std::shared_ptr<const Lattice> lattice, const Point& lo,
                                 const std::vector<int>& extent) {
  const int d = lattice->dim();
  if (lo.size() != static_cast<std::size_t>(d) || extent.size() != lo.size())
    throw InvalidParameter("region box: dimension mismatch");
  return where(std::move(lattice), [&](const Point& p) {
    for (int k = 0; k < d; ++k)
      if (p[k] < lo[k] || p[k] >= lo[k] + extent[k]) return false;
    return true;
  });
}

std::vector<std::size_t> LatticeRegion::internal_edges() const {
  std::vector<std::size_t> out;
  const int d = lattice_->dim();
  for (auto v : vertices_)
    for (int k = 0; k < d; ++k) {
      auto u = lattice_->neighbor(v, 2 * k + 1);
      if (u != npos && mask_[u]) out.push_back(v * static_cast<std::size_t>(d) + k);
    }
  return out;
}

std::vector<std::size_t> LatticeRegion::boundary_edges() const {
  std::vector<std::size_t> out;
  for (auto v : vertices_)
    for (int dir = 0; dir < lattice_->degree(); ++dir) {
      auto u = lattice_->neighbor(v, dir);
      if (u != npos && !mask_[u]) out.push_back(lattice_->edge_between(v, dir));
    }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> LatticeRegion::outer_boundary() const {
  std::vector<std::size_t> out;
  for (auto v : vertices_)
    for (int dir = 0; dir < lattice_->degree(); ++dir) {
      auto u = lattice_->neighbor(v, dir);
      if (u != npos && !mask_[u]) out.push_back(u);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {
template <class Op>
LatticeRegion combine(const LatticeRegion& a, const LatticeRegion& b, Op op) {
  if (!(a.lattice() == b.lattice())) throw InvalidParameter("region: lattices differ");
  std::vector<std::uint8_t> mask(a.mask().size());
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = op(a.mask()[v], b.mask()[v]) ? 1 : 0;
  return LatticeRegion(a.lattice_ptr(), std::move(mask));
}
}  // namespace

LatticeRegion LatticeRegion::unite(const LatticeRegion& other) const {
  return combine(*this, other, [](auto x, auto y) { return x || y; });
}
LatticeRegion LatticeRegion::subtract(const LatticeRegion& other) const {
  return combine(*this, other, [](auto x, auto y) { return x && !y; });
}
LatticeRegion LatticeRegion::intersect(const LatticeRegion& other) const {
  return combine(*this, other, [](auto x, auto y) { return x && y; });
}
bool LatticeRegion::subset_of(const LatticeRegion& other) const {
  if (!(lattice() == other.lattice())) throw InvalidParameter("region: lattices differ");
  return std::all_of(vertices_.begin(), vertices_.end(), [&](auto v) { return other.contains(v); });
}

// ---------------------------------------------------------------------------

Environment gen_environment(const LatticeRegion& region, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("gen_environment: p must lie in (0, 1]");
  const Lattice& lat = region.lattice();
  std::vector<std::uint8_t> J(lat.edge_slots(), 0);
  for (std::size_t e = 0; e < J.size(); ++e) {
    if (!lat.edge_valid(e)) continue;
    J[e] = p >= 1.0 || to_unit(mix64(hash_words({seed, lat.edge_key(e)}))) < p ? 1 : 0;
  }
  return Environment{region, std::move(J), p, seed, {}};
}

Environment uniform_environment(const LatticeRegion& region) {
  return gen_environment(region, 1.0, 0);
}

Scales Scales::from_field(double h, int dim) {
  if (!(h > 0.0 && h <= 1.0)) throw InvalidParameter("scales: h must lie in (0, 1]");
  if (dim < 1) throw InvalidParameter("scales: dimension must be positive");
  constexpr double slack = 1e-9;
  int K = std::max(1, static_cast<int>(std::floor(std::pow(h, -1.0 / (2.0 * dim)) + slack)));
  int N = K * static_cast<int>(std::floor(1.0 / h / K + slack));
  if (N < K) throw InvalidParameter("scales: h too large for one mesoscopic box");
  return Scales{h, N, K};
}

Scales Scales::fixed(int N, int K, double h) {
  if (K < 1 || N < 1 || N % K != 0) throw InvalidParameter("scales: need K >= 1 dividing N");
  return Scales{h > 0.0 ? h : 1.0 / N, N, K};
}

BoundaryKind parse_boundary_kind(const std::string& name) {
  if (name == "plus" || name == "+") return BoundaryKind::plus;
  if (name == "minus" || name == "-") return BoundaryKind::minus;
  if (name == "free" || name == "0") return BoundaryKind::free;
  if (name == "wired" || name == "w") return BoundaryKind::wired;
  throw InvalidParameter("unknown boundary kind '" + name + "'");
}

std::string to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::plus: return "plus";
    case BoundaryKind::minus: return "minus";
    case BoundaryKind::free: return "free";
    case BoundaryKind::wired: return "wired";
  }
  return "?";
}

std::int8_t boundary_spin(BoundaryKind kind) noexcept {
  switch (kind) {
    case BoundaryKind::plus:
    case BoundaryKind::wired: return 1;
    case BoundaryKind::minus: return -1;
    case BoundaryKind::free: return 0;
  }
  return 0;
}

BoundaryCondition BoundaryCondition::uniform(const Lattice& lattice, BoundaryKind kind) {
  return BoundaryCondition{std::vector<std::int8_t>(lattice.size(), boundary_spin(kind))};
}

BoundaryCondition BoundaryCondition::interface(const Lattice& lattice,
                                               std::span<const double> normal) {
  if (normal.size() != static_cast<std::size_t>(lattice.dim()))
    throw InvalidParameter("interface boundary: normal has wrong dimension");
  std::vector<std::int8_t> z(lattice.size());
  for (std::size_t v = 0; v < z.size(); ++v) {
    double dot = 0.0;
    for (int k = 0; k < lattice.dim(); ++k) dot += lattice.coord(v, k) * normal[k];
    z[v] = dot >= 0.0 ? 1 : -1;
  }
  return BoundaryCondition{std::move(z)};
}

BoundaryCondition BoundaryCondition::annulus(const LatticeRegion& inner, const LatticeRegion& cone,
                                             BoundaryKind inner_kind, BoundaryKind outer_kind) {
  if (!(inner.lattice() == cone.lattice())) throw InvalidParameter("annulus: lattices differ");
  std::vector<std::int8_t> z(inner.lattice().size(), 0);
  for (std::size_t v = 0; v < z.size(); ++v) {
    if (inner.contains(v)) z[v] = boundary_spin(inner_kind);
    else if (cone.contains(v)) z[v] = boundary_spin(outer_kind);
  }
  return BoundaryCondition{std::move(z)};
}

bool CubeBody::contains(std::span<const double> x) const {
  return std::all_of(x.begin(), x.end(), [&](double c) { return std::abs(c) <= r_; });
}

// ---------------------------------------------------------------------------

Point box_index_of(std::span<const int> x, int K) {
  Point i(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) i[k] = floor_div(x[k] + K / 2, K);
  return i;
}

std::vector<Point> box_sites(std::span<const int> index, int K) {
  const std::size_t d = index.size();
  Point lo(d), hi(d);
  for (std::size_t k = 0; k < d; ++k) {
    lo[k] = K * index[k] - K / 2;
    hi[k] = lo[k] + K - 1;
  }
  std::vector<Point> out;
  for_each_index(lo, hi, [&](const Point& p) { out.push_back(p); });
  return out;
}


std::vector<MesoBox> box_decomposition(const LatticeRegion& region, int K) {
  if (K < 1) throw InvalidParameter("box_decomposition: K must be >= 1");
  const Lattice& lat = region.lattice();
  const int d = lat.dim();
  Point lo(d), hi(d), last(d);
  for (int k = 0; k < d; ++k) last[k] = lat.lo()[k] + lat.extent()[k] - 1;
  lo = box_index_of(lat.lo(), K);
  hi = box_index_of(last, K);
  std::vector<MesoBox> out;
  for_each_index(lo, hi, [&](const Point& i) {
    MesoBox box{i, {}, true};
    for (const auto& p : box_sites(i, K)) {
      auto v = lat.index(p);
      if (v == npos) {
        box.interior = false;
        continue;
      }
      box.sites.push_back(v);
      if (!region.contains(v)) box.interior = false;
    }
    if (!box.sites.empty()) out.push_back(std::move(box));
  });
  return out;
}

namespace {

bool macro_cube_inside(const ConvexBody& body, const Point& i, const Scales& s) {
  const int d = static_cast<int>(i.size());
  const double half = 0.5 * s.K / s.N;
  std::vector<double> x(d);
  for (unsigned mask = 0; mask < (1u << d); ++mask) {
    for (int k = 0; k < d; ++k)
      x[k] = static_cast<double>(s.K) * i[k] / s.N + ((mask >> k) & 1u ? half : -half);
    if (!body.contains(x)) return false;
  }
  return true;
}

}  // namespace

LatticeRegion discretize(const ConvexBody& body, const Scales& scales,
                         std::shared_ptr<const Lattice> lattice, const Point& anchor) {
  const int d = lattice->dim();
  if (body.dim() != d || anchor.size() != static_cast<std::size_t>(d))
    throw InvalidParameter("discretize: dimension mismatch");
  // Box index range: boxes meeting the lattice, further clipped by the body's bound.
  Point lo(d), hi(d);
  for (int k = 0; k < d; ++k) {
    Point a(1, lattice->lo()[k] - anchor[k]);
    Point b(1, lattice->lo()[k] + lattice->extent()[k] - 1 - anchor[k]);
    lo[k] = box_index_of(a, scales.K)[0];
    hi[k] = box_index_of(b, scales.K)[0];
  }
  const double R = body.bounding_radius();
  if (std::isfinite(R)) {
    const int reach = static_cast<int>(std::ceil(R * scales.N / scales.K)) + 1;
    for (int k = 0; k < d; ++k) {
      lo[k] = std::max(lo[k], -reach);
      hi[k] = std::min(hi[k], reach);
    }
  }
  std::vector<std::uint8_t> mask(lattice->size(), 0);
  for_each_index(lo, hi, [&](const Point& i) {
    if (!macro_cube_inside(body, i, scales)) return;
    for (auto p : box_sites(i, scales.K)) {
      for (int k = 0; k < d; ++k) p[k] += anchor[k];
      auto v = lattice->index(p);
      if (v != npos) mask[v] = 1;
    }
  });
  return LatticeRegion(std::move(lattice), std::move(mask));
}

LatticeRegion discretize(const ConvexBody& body, const Scales& scales) {
  const double R = body.bounding_radius();
  if (!std::isfinite(R)) throw InvalidParameter("discretize: body must be bounded");
  const int half = static_cast<int>(std::ceil(R * scales.N)) + scales.K + 1;
  return discretize(body, scales, Lattice::cube(body.dim(), -half, 2 * half),
                    Point(body.dim(), 0));
}

CarveResult carve_catalyst(const Environment& env, const ConvexBody& shape,
                           const ConvexBody& cone, const Point& anchor, const Scales& scales) {
  const auto& lat = env.lattice_ptr();
  LatticeRegion inside = discretize(shape, scales, lat, anchor);
  // Boxes of the shape that stick out of the lattice are lost by discretize;
  // detect them by discretizing on an enlarged lattice of the same anchor.
  {
    const int d = lat->dim();
    const int grow = static_cast<int>(std::ceil(shape.bounding_radius() * scales.N)) + scales.K + 1;
    Point lo(d);
    std::vector<int> ext(d);
    for (int k = 0; k < d; ++k) {
      lo[k] = std::min(lat->lo()[k], anchor[k] - grow);
      ext[k] = std::max(lat->lo()[k] + lat->extent()[k], anchor[k] + grow + 1) - lo[k];
    }
    auto big = std::make_shared<const Lattice>(lo, ext);
    if (discretize(shape, scales, big, anchor).size() != inside.size())
      throw OutOfBounds("carve_catalyst: shape leaves the lattice");
  }
  if (!inside.subset_of(env.region)) throw OutOfBounds("carve_catalyst: shape leaves the region");
  LatticeRegion cone_region = discretize(cone, scales, lat, anchor);

  CarveResult result{env, 0};
  std::vector<std::size_t> fresh;
  for (auto x : inside.vertices())
    for (int dir = 0; dir < lat->degree(); ++dir) {
      auto y = lat->neighbor(x, dir);
      if (y == npos || cone_region.contains(y)) continue;
      fresh.push_back(lat->edge_between(x, dir));
    }
  std::sort(fresh.begin(), fresh.end());
  fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
  for (auto e : fresh) result.env.coupling[e] = 0;
  result.carved_count = fresh.size();
  auto& carved = result.env.carved;
  std::vector<std::size_t> merged;
  std::set_union(carved.begin(), carved.end(), fresh.begin(), fresh.end(),
                 std::back_inserter(merged));
  carved = std::move(merged);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'D', 'I', 'L', 'U', 'T', 'E', 'V', '1'};

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw InvalidParameter("snapshot: truncated input");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

void put_bits(std::ostream& out, const std::vector<bool>& bits) {
  std::vector<char> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) bytes[i / 8] = static_cast<char>(bytes[i / 8] | (1 << (i % 8)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<bool> get_bits(std::istream& in, std::size_t n) {
  std::vector<char> bytes((n + 7) / 8);
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw InvalidParameter("snapshot: truncated bitmap");
  std::vector<bool> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1;
  return bits;
}

}  // namespace

void write_snapshot(const Environment& env, std::ostream& out) {
  const Lattice& lat = env.lattice();
  out.write(kMagic.data(), kMagic.size());
  put<std::int32_t>(out, lat.dim());
  for (int c : lat.lo()) put<std::int32_t>(out, c);
  for (int c : lat.extent()) put<std::int32_t>(out, c);
  put<double>(out, env.p);
  put<std::uint64_t>(out, env.seed);
  put<std::uint64_t>(out, env.carved.size());
  std::vector<bool> J;
  for (std::size_t e = 0; e < lat.edge_slots(); ++e)
    if (lat.edge_valid(e)) J.push_back(env.coupling[e] != 0);
  put_bits(out, J);
  std::vector<bool> region(lat.size());
  for (std::size_t v = 0; v < lat.size(); ++v) region[v] = env.region.contains(v);
  put_bits(out, region);
  for (auto e : env.carved) put<std::uint64_t>(out, e);
}

Environment read_snapshot(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw InvalidParameter("snapshot: bad magic");
  const int d = get<std::int32_t>(in);
  if (d < 1 || d > 8) throw InvalidParameter("snapshot: bad dimension");
  Point lo(d);
  std::vector<int> ext(d);
  for (auto& c : lo) c = get<std::int32_t>(in);
  for (auto& c : ext) c = get<std::int32_t>(in);
  auto lat = std::make_shared<const Lattice>(lo, ext);
  const double p = get<double>(in);
  const auto seed = get<std::uint64_t>(in);
  const auto ncarved = get<std::uint64_t>(in);
  std::vector<std::size_t> valid;
  for (std::size_t e = 0; e < lat->edge_slots(); ++e)
    if (lat->edge_valid(e)) valid.push_back(e);
  auto Jbits = get_bits(in, valid.size());
  std::vector<std::uint8_t> J(lat->edge_slots(), 0);
  for (std::size_t i = 0; i < valid.size(); ++i) J[valid[i]] = Jbits[i] ? 1 : 0;
  auto rbits = get_bits(in, lat->size());
  std::vector<std::uint8_t> mask(rbits.begin(), rbits.end());
  std::vector<std::size_t> carved(ncarved);
  for (auto& e : carved) {
    e = get<std::uint64_t>(in);
    if (!lat->edge_valid(e)) throw InvalidParameter("snapshot: carved edge out of range");
  }
  return Environment{LatticeRegion(lat, std::move(mask)), std::move(J), p, seed, std::move(carved)};
}

std::vector<std::uint8_t> snapshot_bytes(const Environment& env) {
  std::ostringstream os(std::ios::binary);
  write_snapshot(env, os);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

}  // namespace dilute
