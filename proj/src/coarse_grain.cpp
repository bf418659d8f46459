#include "dilute/coarse_grain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include "dilute/error.hpp"
#include "dilute/glauber.hpp"
#include "dilute/union_find.hpp"

namespace dilute {

const char* to_string(BoxFault fault) noexcept {
  switch (fault) {
    case BoxFault::none: return "good";
    case BoxFault::outside: return "outside";
    case BoxFault::no_crossing: return "no_crossing";
    case BoxFault::not_unique: return "not_unique";
    case BoxFault::neighbor: return "neighbor";
    case BoxFault::diameter: return "diameter";
    case BoxFault::density: return "density";
  }
  return "?";
}

const BoxInfo* BoxClassification::find(const Point& index) const {
  auto it = position.find(index);
  return it == position.end() ? nullptr : &boxes[it->second];
}

std::size_t BoxClassification::good_count() const {
  return static_cast<std::size_t>(std::count_if(boxes.begin(), boxes.end(), [](const BoxInfo& b) { return b.good; }));
}

namespace {

bool open_edge(const EdgeConfig& omega, const GibbsSpec& spec, std::size_t e) {
  return e != npos && omega.real[e] && spec.env->J(e);
}

// Crossing clusters of one box under ω restricted to the box.
std::vector<std::vector<std::size_t>> crossing_clusters(const BoxInfo& box, const EdgeConfig& omega,
                                                        const GibbsSpec& spec,
                                                        std::vector<std::size_t>& slot) {
  const Lattice& lat = spec.lattice();
  const int d = lat.dim();
  const std::size_t n = box.sites.size();
  for (std::size_t k = 0; k < n; ++k) slot[box.sites[k]] = k;
  std::vector<int> lo(d, std::numeric_limits<int>::max()), hi(d, std::numeric_limits<int>::min());
  for (auto v : box.sites)
    for (int a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], lat.coord(v, a));
      hi[a] = std::max(hi[a], lat.coord(v, a));
    }
  UnionFind uf(n);
  for (std::size_t k = 0; k < n; ++k)
    for (int a = 0; a < d; ++a) {
      const std::size_t u = lat.neighbor(box.sites[k], 2 * a + 1);
      if (u == npos || slot[u] == npos) continue;
      if (open_edge(omega, spec, lat.edge_between(box.sites[k], 2 * a + 1))) uf.unite(k, slot[u]);
    }
  std::vector<unsigned> faces(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    unsigned bits = 0;
    for (int a = 0; a < d; ++a) {
      const int c = lat.coord(box.sites[k], a);
      if (c == lo[a]) bits |= 1u << (2 * a);
      if (c == hi[a]) bits |= 1u << (2 * a + 1);
    }
    faces[uf.find(k)] |= bits;
  }
  const unsigned all = (1u << (2 * d)) - 1;
  std::vector<std::vector<std::size_t>> out;
  std::map<std::size_t, std::size_t> which;
  for (std::size_t k = 0; k < n; ++k) {
    const auto root = uf.find(k);
    if (faces[root] != all) continue;
    auto [it, fresh] = which.emplace(root, out.size());
    if (fresh) out.emplace_back();
    out[it->second].push_back(box.sites[k]);
  }
  for (auto v : box.sites) slot[v] = npos;
  for (auto& c : out) std::sort(c.begin(), c.end());
  return out;
}

}  // namespace

BoxClassification classify_boxes(const EdgeConfig& omega, const GibbsSpec& spec, int K, double eps,
                                 double m_star) {
  if (K < 1) throw InvalidParameter("classify_boxes: K must be >= 1");
  if (!(eps > 0.0)) throw InvalidParameter("classify_boxes: eps must be positive");
  if (!(m_star > 0.0 && m_star <= 1.0)) throw InvalidParameter("classify_boxes: m* must lie in (0, 1]");
  const Lattice& lat = spec.lattice();
  if (omega.real.size() != lat.edge_slots()) throw InvalidParameter("classify_boxes: edge configuration of wrong size");
  const int d = lat.dim();

  BoxClassification out;
  out.K = K;
  out.eps = eps;
  out.m_star = m_star;
  out.real_label = real_clusters(omega, spec);
  for (auto& mb : box_decomposition(spec.region, K)) {
    BoxInfo b;
    b.index = std::move(mb.index);
    b.sites = std::move(mb.sites);
    b.interior = mb.interior;
    out.position.emplace(b.index, out.boxes.size());
    out.boxes.push_back(std::move(b));
  }

  std::vector<std::size_t> slot(lat.size(), npos);
  for (auto& b : out.boxes) {
    if (!b.interior) continue;
    auto cross = crossing_clusters(b, omega, spec, slot);
    if (cross.empty()) {
      b.fault = BoxFault::no_crossing;
    } else if (cross.size() > 1) {
      b.fault = BoxFault::not_unique;
    } else {
      b.crossing = std::move(cross.front());
      b.cluster = out.real_label[b.crossing.front()];
      b.fault = BoxFault::none;
      const auto in_cluster = std::count_if(b.sites.begin(), b.sites.end(),
                                            [&](std::size_t v) { return out.real_label[v] == b.cluster; });
      b.density = static_cast<double>(in_cluster) / std::pow(static_cast<double>(K), d);
    }
  }

  // Which box owns each crossing site, for the neighbour condition.
  std::vector<std::size_t> owner(lat.size(), npos);
  for (std::size_t k = 0; k < out.boxes.size(); ++k)
    for (auto v : out.boxes[k].crossing) owner[v] = k;

  // Residual clusters: Λ minus every crossing cluster, with L∞ extents.
  UnionFind uf(lat.size());
  for (auto e : spec.region.internal_edges()) {
    if (!open_edge(omega, spec, e)) continue;
    auto [a, c] = lat.edge_ends(e);
    if (owner[a] == npos && owner[c] == npos) uf.unite(a, c);
  }
  std::vector<int> ext_lo(lat.size() * static_cast<std::size_t>(d), std::numeric_limits<int>::max());
  std::vector<int> ext_hi(lat.size() * static_cast<std::size_t>(d), std::numeric_limits<int>::min());
  for (auto v : spec.region.vertices()) {
    if (owner[v] != npos) continue;
    const auto r = uf.find(v) * static_cast<std::size_t>(d);
    for (int a = 0; a < d; ++a) {
      ext_lo[r + a] = std::min(ext_lo[r + a], lat.coord(v, a));
      ext_hi[r + a] = std::max(ext_hi[r + a], lat.coord(v, a));
    }
  }
  auto residual_diameter = [&](std::size_t v) {
    const auto r = uf.find(v) * static_cast<std::size_t>(d);
    int diam = 0;
    for (int a = 0; a < d; ++a) diam = std::max(diam, ext_hi[r + a] - ext_lo[r + a]);
    return diam;
  };

  const double target = std::pow(static_cast<double>(K), d) * m_star;
  for (std::size_t k = 0; k < out.boxes.size(); ++k) {
    auto& b = out.boxes[k];
    if (b.fault != BoxFault::none) continue;
    // (i) an open edge to the crossing cluster of every interior neighbour.
    bool joined = true;
    for (int dir = 0; dir < 2 * d && joined; ++dir) {
      Point j = b.index;
      j[dir / 2] += (dir % 2 == 0) ? -1 : 1;
      const BoxInfo* nb = out.find(j);
      if (!nb || !nb->interior) continue;
      if (nb->crossing.empty()) {
        joined = false;
        break;
      }
      const auto nk = out.position.at(j);
      bool edge = false;
      for (auto v : b.crossing) {
        const std::size_t u = lat.neighbor(v, dir);
        if (u != npos && owner[u] == nk && open_edge(omega, spec, lat.edge_between(v, dir))) {
          edge = true;
          break;
        }
      }
      joined = edge;
    }
    if (!joined) {
      b.fault = BoxFault::neighbor;
      continue;
    }
    // (ii) residual clusters meeting the box.
    bool narrow = true;
    for (auto v : b.sites)
      if (owner[v] == npos && 2 * residual_diameter(v) > K) {
        narrow = false;
        break;
      }
    if (!narrow) {
      b.fault = BoxFault::diameter;
      continue;
    }
    // (iii) density of B‡ in the box.
    const double c = b.density * std::pow(static_cast<double>(K), d);
    if (c < target * (1.0 - eps) - 1e-9 || c > target * (1.0 + eps) + 1e-9) {
      b.fault = BoxFault::density;
      continue;
    }
    b.good = true;
  }
  return out;
}

int PhaseLabeling::at(const Point& index) const {
  auto it = label.find(index);
  return it == label.end() ? 0 : it->second;
}

std::size_t PhaseLabeling::count(int value) const {
  return static_cast<std::size_t>(
      std::count_if(label.begin(), label.end(), [value](const auto& kv) { return kv.second == value; }));
}

PhaseLabeling phase_labels(const BoxClassification& classification, const Spins& spins) {
  PhaseLabeling out;
  for (const auto& b : classification.boxes) {
    int value = 0;
    if (b.good) {
      value = spins.at(b.crossing.front());
      for (auto v : b.crossing)
        if (spins[v] != value) throw InvariantViolation("phase_labels: crossing cluster carries both spins");
    }
    out.label.emplace(b.index, value);
  }
  return out;
}

Layers wulff_layers(const WulffShape& shape, const std::vector<double>& radii, const Scales& scales,
                    const Point& anchor) {
  if (radii.size() < 2) throw InvalidParameter("wulff_layers: need at least two radii");
  for (std::size_t k = 1; k < radii.size(); ++k)
    if (!(radii[k] > radii[k - 1]) || radii[k - 1] < 0.0) throw InvalidParameter("wulff_layers: radii must increase");
  const int d = shape.dim();
  Point offset = anchor.empty() ? Point(static_cast<std::size_t>(d), 0) : anchor;
  if (static_cast<int>(offset.size()) != d) throw InvalidParameter("wulff_layers: anchor of wrong dimension");
  const double cell = static_cast<double>(scales.K) / scales.N;
  const auto outer = shape.resized(radii.back());
  const int reach = static_cast<int>(std::ceil(outer.bounding_radius() / cell)) + 1;

  auto cube_inside = [&](const WulffShape& w, const Point& i) {
    std::vector<double> x(static_cast<std::size_t>(d));
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      for (int a = 0; a < d; ++a) x[a] = cell * (i[a] + ((mask >> a) & 1u ? 0.5 : -0.5));
      if (!w.contains(x)) return false;
    }
    return true;
  };

  std::vector<WulffShape> shells;
  for (double r : radii) shells.push_back(shape.resized(r));
  Layers layers(radii.size() - 1);
  Point i(static_cast<std::size_t>(d), -reach);
  while (true) {
    int inner = -1;  // largest shell index not containing the cube
    for (int s = static_cast<int>(shells.size()) - 1; s >= 0; --s)
      if (!cube_inside(shells[static_cast<std::size_t>(s)], i)) {
        inner = s;
        break;
      }
    if (inner >= 0 && inner + 1 < static_cast<int>(shells.size())) {
      Point box(i);
      for (int a = 0; a < d; ++a) box[a] += offset[a];
      layers[static_cast<std::size_t>(inner)].push_back(box);
    }
    int a = d - 1;
    while (a >= 0 && i[a] == reach) i[a--] = -reach;
    if (a < 0) break;
    ++i[a];
  }
  for (const auto& l : layers)
    if (l.empty()) throw InvalidParameter("wulff_layers: a shell holds no whole box; widen the radii or refine K/N");
  return layers;
}

std::vector<std::array<std::size_t, 3>> layer_profile(const PhaseLabeling& labels, const Layers& layers) {
  std::vector<std::array<std::size_t, 3>> out;
  for (const auto& layer : layers) {
    std::array<std::size_t, 3> f{0, 0, 0};
    for (const auto& i : layer) ++f[static_cast<std::size_t>(labels.at(i) + 1)];
    out.push_back(f);
  }
  return out;
}

namespace {

class Dinic {
 public:
  explicit Dinic(std::size_t n) : adj_(n), level_(n), it_(n) {}

  void add(std::size_t a, std::size_t b, int cap) {
    adj_[a].push_back({b, adj_[b].size(), cap, cap});
    adj_[b].push_back({a, adj_[a].size() - 1, 0, 0});
  }

  std::size_t run(std::size_t s, std::size_t t) {
    std::size_t total = 0;
    while (bfs(s, t)) {
      std::fill(it_.begin(), it_.end(), 0);
      while (int f = dfs(s, t, std::numeric_limits<int>::max())) total += static_cast<std::size_t>(f);
    }
    return total;
  }

  struct Arc {
    std::size_t to, rev;
    int cap;
    int original;
  };
  std::vector<std::vector<Arc>> adj_;

 private:
  bool bfs(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      for (const auto& a : adj_[v])
        if (a.cap > 0 && level_[a.to] < 0) {
          level_[a.to] = level_[v] + 1;
          q.push(a.to);
        }
    }
    return level_[t] >= 0;
  }

  int dfs(std::size_t v, std::size_t t, int f) {
    if (v == t) return f;
    for (auto& i = it_[v]; i < adj_[v].size(); ++i) {
      auto& a = adj_[v][i];
      if (a.cap <= 0 || level_[a.to] != level_[v] + 1) continue;
      if (int got = dfs(a.to, t, std::min(f, a.cap))) {
        a.cap -= got;
        adj_[a.to][a.rev].cap += got;
        return got;
      }
    }
    return 0;
  }

  std::vector<int> level_;
  std::vector<std::size_t> it_;
};

}  // namespace

FlowResult max_box_flow(const PhaseLabeling& labels, const std::vector<Point>& boxes) {
  FlowResult out;
  if (boxes.empty()) return out;
  std::map<Point, std::size_t> id;
  for (const auto& b : boxes)
    if (!id.emplace(b, id.size()).second) throw InvalidParameter("max_box_flow: repeated box");
  const std::size_t n = boxes.size();
  const std::size_t source = 2 * n, sink = 2 * n + 1;
  Dinic g(2 * n + 2);
  for (std::size_t k = 0; k < n; ++k) {
    g.add(2 * k, 2 * k + 1, 1);
    const int l = labels.at(boxes[k]);
    if (l == 1) g.add(source, 2 * k, 1);
    if (l == -1) g.add(2 * k + 1, sink, 1);
    Point nb = boxes[k];
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (int step : {-1, 1}) {
        nb[a] += step;
        auto it = id.find(nb);
        if (it != id.end()) g.add(2 * k + 1, 2 * it->second, 1);
        nb[a] -= step;
      }
  }
  out.flow = g.run(source, sink);
  // Peel the unit paths off the residual flow.
  auto used = [](const Dinic::Arc& a) { return a.original > 0 && a.cap == 0; };
  for (auto& first : g.adj_[source]) {
    if (!used(first)) continue;
    std::vector<Point> path;
    std::size_t v = first.to;
    while (v != sink) {
      const std::size_t box = v / 2;
      path.push_back(boxes[box]);
      bool moved = false;
      for (auto& a : g.adj_[2 * box + 1]) {
        if (!used(a)) continue;
        a.original = 0;  // consumed
        v = a.to;
        moved = true;
        break;
      }
      if (!moved) throw InvariantViolation("max_box_flow: broken flow path");
    }
    out.paths.push_back(std::move(path));
  }
  return out;
}

FlowResult spanning_and_flow(const PhaseLabeling& labels, const Layers& layers, std::size_t leading) {
  if (layers.empty()) throw InvalidParameter("spanning_and_flow: no layers");
  std::set<Point> seen;
  std::vector<Point> all;
  std::size_t dim = 0;
  for (const auto& layer : layers) {
    if (layer.empty()) throw InvalidParameter("spanning_and_flow: empty layer");
    for (const auto& i : layer) {
      if (dim == 0) dim = i.size();
      if (i.size() != dim || dim == 0) throw InvalidParameter("spanning_and_flow: mixed box dimensions");
      if (!seen.insert(i).second) throw InvalidParameter("spanning_and_flow: layers overlap");
      all.push_back(i);
    }
  }
  if (leading == 0 || leading > layers.size()) leading = layers.size();
  const auto profile = layer_profile(labels, layers);
  bool spanning = true;
  for (std::size_t l = 0; l < leading; ++l) spanning = spanning && profile[l][0] + profile[l][1] > 0;
  auto out = max_box_flow(labels, all);
  out.spanning = spanning;
  return out;
}

double profile_integral(const Spins& spins, const GibbsSpec& spec, const Scales& scales, double m_star,
                        const LatticeRegion& window) {
  if (!window.subset_of(spec.region)) throw InvalidParameter("profile_integral: window must lie in the region");
  ProfileThreshold tracker(spec, window, scales, m_star, 0.0);
  tracker.reset(spins);
  return tracker.integral();
}

}  // namespace dilute
