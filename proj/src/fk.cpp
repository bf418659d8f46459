#include "dilute/fk.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "dilute/error.hpp"
#include "dilute/union_find.hpp"

namespace dilute {

EdgeConfig EdgeConfig::closed(const Lattice& lattice, bool ghost_sampled) {
  return EdgeConfig{std::vector<std::uint8_t>(lattice.edge_slots(), 0),
                    std::vector<std::uint8_t>(lattice.size(), 0), ghost_sampled};
}

std::vector<std::size_t> active_edges(const GibbsSpec& spec) {
  const Lattice& lat = spec.lattice();
  std::vector<std::size_t> out;
  for (auto x : spec.region.vertices())
    for (int dir = 0; dir < lat.degree(); ++dir) {
      auto y = lat.neighbor(x, dir);
      if (y == npos) continue;
      if (spec.region.contains(y)) {
        if (y < x) continue;
      } else if (spec.boundary.zeta[y] == 0) {
        continue;
      }
      auto e = lat.edge_between(x, dir);
      if (spec.env->J(e)) out.push_back(e);
    }
  std::sort(out.begin(), out.end());
  return out;
}

double edge_open_prob(const GibbsSpec& spec) noexcept { return -std::expm1(-spec.beta); }
double ghost_open_prob(const GibbsSpec& spec) noexcept { return -std::expm1(-spec.beta * spec.h); }

namespace {

struct Specials {
  std::size_t ghost, plus, minus;
};

// Unions the open edges of ω; the caller supplies the active edge list.
Specials merge_open(UnionFind& uf, const EdgeConfig& omega, const GibbsSpec& spec,
                    const std::vector<std::size_t>& edges) {
  const Lattice& lat = spec.lattice();
  const std::size_t n = lat.size();
  Specials sp{n, n + 1, n + 2};
  uf.unite(sp.ghost, sp.plus);
  for (auto e : edges) {
    if (!omega.real[e]) continue;
    auto [a, b] = lat.edge_ends(e);
    const bool ia = spec.region.contains(a), ib = spec.region.contains(b);
    if (ia && ib) {
      uf.unite(a, b);
    } else {
      const auto in = ia ? a : b, out = ia ? b : a;
      uf.unite(in, spec.boundary.zeta[out] > 0 ? sp.plus : sp.minus);
    }
  }
  if (omega.ghost_sampled)
    for (auto x : spec.region.vertices())
      if (omega.ghost[x]) uf.unite(x, sp.ghost);
  return sp;
}

ClusterPartition partition_from(UnionFind& uf, const Specials& sp, const GibbsSpec& spec,
                                bool ghost_sampled) {
  ClusterPartition out;
  out.ghost_sampled = ghost_sampled;
  out.label.assign(spec.lattice().size(), ClusterPartition::none);
  out.admissible = !uf.same(sp.plus, sp.minus);
  const std::size_t plus_root = uf.find(sp.plus), minus_root = uf.find(sp.minus);
  std::unordered_map<std::size_t, std::size_t> id_of;
  for (auto x : spec.region.vertices()) {
    const auto r = uf.find(x);
    auto [it, fresh] = id_of.try_emplace(r, out.members.size());
    if (fresh) {
      out.members.emplace_back();
      if (r == plus_root) out.plus_id = it->second;
      if (r == minus_root) out.minus_id = it->second;
      if (r != plus_root && r != minus_root) out.free_ids.push_back(it->second);
    }
    out.label[x] = it->second;
    out.members[it->second].push_back(x);
  }
  return out;
}

}  // namespace

ClusterPartition clusters(const EdgeConfig& omega, const GibbsSpec& spec) {
  UnionFind uf(spec.lattice().size() + 3);
  auto sp = merge_open(uf, omega, spec, active_edges(spec));
  return partition_from(uf, sp, spec, omega.ghost_sampled);
}

std::vector<std::size_t> real_clusters(const EdgeConfig& omega, const GibbsSpec& spec) {
  const Lattice& lat = spec.lattice();
  UnionFind uf(lat.size());
  for (auto e : spec.region.internal_edges())
    if (omega.real[e] && spec.env->J(e)) {
      auto [a, b] = lat.edge_ends(e);
      uf.unite(a, b);
    }
  std::vector<std::size_t> label(lat.size(), ClusterPartition::none);
  for (auto x : spec.region.vertices()) label[x] = uf.find(x);
  return label;
}

Spins assign_spins(const ClusterPartition& partition, const GibbsSpec& spec, CounterRng& rng) {
  if (!partition.admissible) throw InvalidParameter("assign_spins: configuration outside the support");
  std::vector<std::int8_t> value(partition.members.size(), 0);
  if (partition.plus_id != ClusterPartition::none) value[partition.plus_id] = 1;
  if (partition.minus_id != ClusterPartition::none) value[partition.minus_id] = -1;
  for (auto id : partition.free_ids) {
    double p_plus = 0.5;
    if (!partition.ghost_sampled) {
      const double a = spec.beta * spec.h * static_cast<double>(partition.members[id].size());
      p_plus = 1.0 / (1.0 + std::exp(-a));
    }
    value[id] = rng.uniform() < p_plus ? 1 : -1;
  }
  Spins s = spec.boundary.zeta;
  for (auto x : spec.region.vertices()) s[x] = value[partition.label[x]];
  return s;
}

std::pair<EdgeConfig, Spins> sw_step(const Spins& spins, const GibbsSpec& spec, CounterRng& rng,
                                     bool sample_ghost) {
  const Lattice& lat = spec.lattice();
  EdgeConfig omega = EdgeConfig::closed(lat, sample_ghost);
  const double p = edge_open_prob(spec), pg = ghost_open_prob(spec);
  const auto edges = active_edges(spec);
  for (auto e : edges) {
    auto [a, b] = lat.edge_ends(e);
    if (spins[a] == spins[b] && rng.uniform() < p) omega.real[e] = 1;
  }
  if (sample_ghost)
    for (auto x : spec.region.vertices())
      if (spins[x] > 0 && rng.uniform() < pg) omega.ghost[x] = 1;
  UnionFind uf(lat.size() + 3);
  auto sp = merge_open(uf, omega, spec, edges);
  auto part = partition_from(uf, sp, spec, sample_ghost);
  Spins next = assign_spins(part, spec, rng);
  return {std::move(omega), std::move(next)};
}

namespace {

struct BitLayout {
  std::vector<std::size_t> edges;
  std::vector<double> edge_p;
  bool ghosts = false;
  std::size_t bits() const { return edges.size(); }
};

// Decodes bitmask `w` into ω over the layout; ghost bits follow edge bits.
void decode(std::uint64_t w, const BitLayout& layout, const GibbsSpec& spec, EdgeConfig& omega) {
  std::fill(omega.real.begin(), omega.real.end(), 0);
  std::fill(omega.ghost.begin(), omega.ghost.end(), 0);
  for (std::size_t i = 0; i < layout.edges.size(); ++i) omega.real[layout.edges[i]] = (w >> i) & 1u;
  if (layout.ghosts) {
    const auto& vs = spec.region.vertices();
    for (std::size_t i = 0; i < vs.size(); ++i) omega.ghost[vs[i]] = (w >> (layout.edges.size() + i)) & 1u;
  }
}

// Spin constraints implied by ω, as bitmasks over the vertices of Λ: bit
// pairs that must agree, bits forced to plus or minus, or none satisfiable.
struct Constraints {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> equal;
  std::uint64_t plus = 0;
  std::uint64_t minus = 0;
  bool impossible = false;

  bool satisfied(std::uint64_t s) const {
    if (impossible || (s & plus) != plus || (s & minus) != 0) return false;
    for (const auto& [a, b] : equal)
      if (((s & a) != 0) != ((s & b) != 0)) return false;
    return true;
  }
};

Constraints constraints(const EdgeConfig& omega, const GibbsSpec& spec, const std::vector<std::size_t>& edges,
                        const std::vector<std::size_t>& pos) {
  const Lattice& lat = spec.lattice();
  Constraints c;
  auto pin = [&](std::size_t inside, int value) {
    const std::uint64_t bit = std::uint64_t{1} << pos[inside];
    if (value > 0) c.plus |= bit;
    else if (value < 0) c.minus |= bit;
    else c.impossible = true;
  };
  for (auto e : edges) {
    if (!omega.real[e]) continue;
    auto [a, b] = lat.edge_ends(e);
    const bool ia = spec.region.contains(a), ib = spec.region.contains(b);
    if (ia && ib) c.equal.emplace_back(std::uint64_t{1} << pos[a], std::uint64_t{1} << pos[b]);
    else if (ia) pin(a, spec.boundary.at(b));
    else if (ib) pin(b, spec.boundary.at(a));
    else if (spec.boundary.at(a) != spec.boundary.at(b)) c.impossible = true;
  }
  if (omega.ghost_sampled)
    for (auto x : spec.region.vertices())
      if (omega.ghost[x]) pin(x, 1);
  return c;
}

}  // namespace

EsReport es_equivalence_check(const GibbsSpec& spec) {
  const std::size_t n = spec.region.size();
  const auto edges = active_edges(spec);
  if (n > kEsSiteCap || edges.size() > kEsEdgeCap)
    throw ResourceLimit("es_equivalence_check: instance above the enumeration caps");
  const bool ghosts = spec.h > 0.0;
  const std::size_t ebits = edges.size();
  const std::size_t bits = ebits + (ghosts ? n : 0);
  const double p = edge_open_prob(spec), pg = ghost_open_prob(spec);
  const bool brute_count = bits + n <= 22;

  const auto& vs = spec.region.vertices();
  std::vector<std::size_t> pos(spec.lattice().size(), 0);
  for (std::size_t i = 0; i < n; ++i) pos[vs[i]] = i;

  EsReport rep;
  rep.spin_marginal.assign(std::size_t{1} << n, 0.0);
  EdgeConfig omega = EdgeConfig::closed(spec.lattice(), true);
  BitLayout layout{edges, {}, ghosts};
  // weight[k] for k open edges (ghost bonds) out of ebits (n).
  auto binomial_weights = [](double q, std::size_t trials) {
    std::vector<double> w(trials + 1);
    for (std::size_t k = 0; k <= trials; ++k)
      w[k] = std::pow(q, static_cast<double>(k)) * std::pow(1.0 - q, static_cast<double>(trials - k));
    return w;
  };
  const auto edge_weight = binomial_weights(p, ebits);
  const auto ghost_weight = binomial_weights(ghosts ? pg : 0.0, ghosts ? n : 0);
  std::vector<std::pair<std::size_t, std::uint64_t>> masks;  // cluster root, vertex bits
  double total = 0.0;
  for (std::uint64_t w = 0; w < (std::uint64_t{1} << bits); ++w) {
    decode(w, layout, spec, omega);
    const double weight = edge_weight[std::popcount(w & ((std::uint64_t{1} << ebits) - 1))] *
                          ghost_weight[std::popcount(w >> ebits)];
    ++rep.omega_states;
    UnionFind uf(spec.lattice().size() + 3);
    const auto sp = merge_open(uf, omega, spec, edges);
    std::size_t generated = 0;
    if (!uf.same(sp.plus, sp.minus)) {
      ++rep.support_size;
      const auto plus_root = uf.find(sp.plus), minus_root = uf.find(sp.minus);
      std::uint64_t fixed = 0;
      masks.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = uf.find(vs[i]);
        const std::uint64_t bit = std::uint64_t{1} << i;
        if (r == plus_root) {
          fixed |= bit;
        } else if (r != minus_root) {
          auto it = std::find_if(masks.begin(), masks.end(), [r](const auto& m) { return m.first == r; });
          if (it == masks.end()) masks.emplace_back(r, bit);
          else it->second |= bit;
        }
      }
      for (std::uint64_t c = 0; c < (std::uint64_t{1} << masks.size()); ++c) {
        std::uint64_t s = fixed;
        for (std::size_t k = 0; k < masks.size(); ++k)
          if ((c >> k) & 1u) s |= masks[k].second;
        rep.spin_marginal[s] += weight;
        total += weight;
        ++generated;
      }
      if (generated != (std::size_t{1} << masks.size())) rep.count_formula_holds = false;
    } else {
      ++rep.excluded;
    }
    if (brute_count) {
      const auto c = constraints(omega, spec, edges, pos);
      std::size_t direct = 0;
      for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) direct += c.satisfied(s);
      if (direct != generated) rep.count_formula_holds = false;
    }
  }
  const ExactGibbs gibbs = exact_gibbs(spec);
  for (auto& m : rep.spin_marginal) m /= total;
  for (std::size_t s = 0; s < rep.spin_marginal.size(); ++s)
    rep.max_marginal_error = std::max(rep.max_marginal_error, std::abs(rep.spin_marginal[s] - gibbs.prob[s]));
  return rep;
}

FkDistribution fk_distribution(const GibbsSpec& spec, const std::vector<std::size_t>& edges) {
  const std::size_t n = spec.region.size();
  const std::size_t bits = edges.size() + n;
  if (bits > 20) throw ResourceLimit("fk_distribution: too many bits");
  const auto active = active_edges(spec);
  std::vector<double> pe(edges.size(), 0.0);
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (std::binary_search(active.begin(), active.end(), edges[i])) pe[i] = edge_open_prob(spec);
  const double pg = ghost_open_prob(spec);

  FkDistribution out{edges, std::vector<double>(std::size_t{1} << bits, 0.0)};
  EdgeConfig omega = EdgeConfig::closed(spec.lattice(), true);
  BitLayout layout{edges, pe, true};
  double total = 0.0;
  for (std::uint64_t w = 0; w < (std::uint64_t{1} << bits); ++w) {
    double weight = 1.0;
    for (std::size_t i = 0; i < edges.size(); ++i) weight *= (w >> i) & 1u ? pe[i] : 1.0 - pe[i];
    for (std::size_t i = 0; i < n; ++i) weight *= (w >> (edges.size() + i)) & 1u ? pg : 1.0 - pg;
    if (weight == 0.0) continue;
    decode(w, layout, spec, omega);
    auto part = clusters(omega, spec);
    if (!part.admissible) continue;
    weight *= std::ldexp(1.0, static_cast<int>(part.free_count()));
    out.prob[w] = weight;
    total += weight;
  }
  for (auto& v : out.prob) v /= total;
  return out;
}

TauStrip make_tau_strip(const std::vector<int>& lo, const std::vector<int>& extent,
                        std::span<const double> normal, double beta, double p, std::uint64_t seed,
                        int width) {
  const std::size_t d = lo.size();
  if (extent.size() != d || normal.size() != d) throw InvalidParameter("tau strip: dimension mismatch");
  if (width < 1) throw InvalidParameter("tau strip: width must be positive");
  Point llo(d);
  std::vector<int> lext(d);
  for (std::size_t k = 0; k < d; ++k) {
    llo[k] = lo[k] - 1;
    lext[k] = extent[k] + 2;
  }
  auto lat = std::make_shared<const Lattice>(llo, lext);
  auto env = std::make_shared<const Environment>(gen_environment(LatticeRegion::box(lat, lo, extent), p, seed));
  auto plus = make_spec(env, beta, 0.0, BoundaryCondition::uniform(*lat, BoundaryKind::plus));
  auto iface = make_spec(env, beta, 0.0, BoundaryCondition::interface(*lat, normal));
  return TauStrip{std::move(plus), std::move(iface), width};
}

double tau_exact(const TauStrip& strip) {
  const double norm = std::pow(strip.width, strip.plus.lattice().dim() - 1);
  return (exact_gibbs(strip.plus).log_Z - exact_gibbs(strip.interface).log_Z) / norm;
}

TauEstimate tau_mc(const TauStrip& strip, std::size_t sweeps, std::uint64_t seed, std::size_t burn_in) {
  if (sweeps < 100) throw InvalidParameter("tau_mc: need at least 100 sweeps");
  CounterRng rng(hash_words({seed, 0x7a75ULL}));
  Spins s = make_spins(strip.plus, 1);
  for (std::size_t i = 0; i < burn_in; ++i) s = sw_step(s, strip.plus, rng).second;

  const auto edges = active_edges(strip.plus);
  constexpr std::size_t batches = 50;
  const std::size_t per_batch = sweeps / batches;
  std::vector<double> batch_mean(batches, 0.0);
  std::size_t hits = 0, used = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    std::size_t bh = 0;
    for (std::size_t i = 0; i < per_batch; ++i) {
      auto [omega, next] = sw_step(s, strip.plus, rng);
      s = std::move(next);
      UnionFind uf(strip.interface.lattice().size() + 3);
      auto sp = merge_open(uf, omega, strip.interface, edges);
      if (!uf.same(sp.plus, sp.minus)) ++bh;
    }
    batch_mean[b] = static_cast<double>(bh) / static_cast<double>(per_batch);
    hits += bh;
    used += per_batch;
  }
  TauEstimate est;
  est.samples = used;
  const double norm = std::pow(strip.width, strip.plus.lattice().dim() - 1);
  const double P = static_cast<double>(hits) / static_cast<double>(used);
  est.disconnect_fraction = P;
  if (hits == 0) {
    est.no_event = true;
    est.tau = std::log(static_cast<double>(used) + 1.0) / norm;
    return est;
  }
  double var = 0.0;
  for (double m : batch_mean) var += (m - P) * (m - P);
  var /= static_cast<double>(batches - 1);
  const double se_P = std::sqrt(var / static_cast<double>(batches));
  est.tau = -std::log(P) / norm;
  est.std_error = se_P / P / norm;
  return est;
}

}  // namespace dilute
