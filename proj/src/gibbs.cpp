#include "dilute/gibbs.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

#include "dilute/error.hpp"

namespace dilute {

GibbsSpec GibbsSpec::on(LatticeRegion sub) const {
  if (!(sub.lattice() == lattice())) throw InvalidParameter("spec: sub-region on another lattice");
  GibbsSpec out = *this;
  out.region = std::move(sub);
  return out;
}

GibbsSpec GibbsSpec::with_boundary(BoundaryCondition bc) const {
  GibbsSpec out = *this;
  out.boundary = std::move(bc);
  return out;
}

GibbsSpec GibbsSpec::with_field(double field) const {
  GibbsSpec out = *this;
  out.h = field;
  return out;
}

GibbsSpec make_spec(std::shared_ptr<const Environment> env, double beta, double h,
                    BoundaryCondition boundary) {
  if (!env) throw InvalidParameter("spec: null environment");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidParameter("spec: beta must be >= 0");
  if (!(h >= 0.0) || !std::isfinite(h)) throw InvalidParameter("spec: h must be >= 0");
  if (boundary.zeta.size() != env->lattice().size())
    throw InvalidParameter("spec: boundary does not match the lattice");
  LatticeRegion region = env->region;
  return GibbsSpec{std::move(env), std::move(region), beta, h, std::move(boundary)};
}

GibbsSpec make_spec(Environment env, double beta, double h, BoundaryCondition boundary) {
  return make_spec(std::make_shared<const Environment>(std::move(env)), beta, h,
                   std::move(boundary));
}

Spins make_spins(const GibbsSpec& spec, std::int8_t fill) {
  Spins s = spec.boundary.zeta;
  for (auto v : spec.region.vertices()) s[v] = fill;
  return s;
}

Spins spins_from_bits(const GibbsSpec& spec, std::uint64_t bits) {
  Spins s = spec.boundary.zeta;
  const auto& vs = spec.region.vertices();
  for (std::size_t i = 0; i < vs.size(); ++i) s[vs[i]] = (bits >> i) & 1u ? 1 : -1;
  return s;
}

std::uint64_t bits_of(const GibbsSpec& spec, const Spins& spins) {
  std::uint64_t bits = 0;
  const auto& vs = spec.region.vertices();
  for (std::size_t i = 0; i < vs.size() && i < 64; ++i)
    if (spins[vs[i]] > 0) bits |= std::uint64_t{1} << i;
  return bits;
}

void impose_boundary(const GibbsSpec& spec, Spins& spins) {
  for (std::size_t v = 0; v < spins.size(); ++v)
    if (!spec.region.contains(v)) spins[v] = spec.boundary.zeta[v];
}

double hamiltonian(const Spins& spins, const GibbsSpec& spec) {
  const Lattice& lat = spec.lattice();
  const Environment& env = *spec.env;
  double H = 0.0;
  for (auto x : spec.region.vertices()) {
    if (spins[x] < 0) H += spec.h;
    for (int dir = 0; dir < lat.degree(); ++dir) {
      auto y = lat.neighbor(x, dir);
      if (y == npos) continue;
      // Count internal edges once, from their lower endpoint.
      if (spec.region.contains(y) && y < x) continue;
      if (spins[y] == 0) continue;
      if (spins[x] != spins[y]) H += env.J_dir(x, dir);
    }
  }
  return H;
}

double local_field(const Spins& spins, const GibbsSpec& spec, std::size_t x) {
  const Lattice& lat = spec.lattice();
  double f = 0.0;
  for (int dir = 0; dir < lat.degree(); ++dir) {
    auto y = lat.neighbor(x, dir);
    if (y != npos) f += spec.env->J_dir(x, dir) * spins[y];
  }
  return f;
}

ExactGibbs exact_gibbs(const GibbsSpec& spec) {
  const std::size_t n = spec.region.size();
  if (n > kExactGibbsCap) throw ResourceLimit("exact_gibbs: region above the enumeration cap");
  const std::size_t states = std::size_t{1} << n;
  std::vector<double> logw(states);
  for (std::size_t b = 0; b < states; ++b)
    logw[b] = -spec.beta * hamiltonian(spins_from_bits(spec, b), spec);
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (double lw : logw) sum += std::exp(lw - top);
  ExactGibbs out;
  out.log_Z = top + std::log(sum);
  out.prob.resize(states);
  for (std::size_t b = 0; b < states; ++b) out.prob[b] = std::exp(logw[b] - out.log_Z);
  return out;
}

double exact_conditional(const GibbsSpec& spec, const Spins& spins, std::size_t x) {
  Spins s = spins;
  s[x] = 1;
  const double hp = hamiltonian(s, spec);
  s[x] = -1;
  const double hm = hamiltonian(s, spec);
  return 1.0 / (1.0 + std::exp(-spec.beta * (hm - hp)));
}

namespace {

// Smallest eigenvalue of a symmetric operator by Lanczos with full
// reorthogonalization.
double lanczos_min(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& shift_dir,
                   double shift) {
  const Eigen::Index N = A.rows();
  auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd w = A * v;
    w += shift * shift_dir * shift_dir.dot(v);
    return w;
  };
  const Eigen::Index m_max = std::min<Eigen::Index>(N, 600);
  Eigen::MatrixXd Q(N, m_max);
  std::vector<double> alpha, beta;
  Eigen::VectorXd q = Eigen::VectorXd::Ones(N);
  for (Eigen::Index i = 0; i < N; ++i) q[i] += 0.01 * std::sin(1.7 * static_cast<double>(i));
  q.normalize();
  double last = INFINITY;
  for (Eigen::Index j = 0; j < m_max; ++j) {
    Q.col(j) = q;
    Eigen::VectorXd w = apply(q);
    alpha.push_back(q.dot(w));
    for (int pass = 0; pass < 2; ++pass)
      w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();
    if ((j + 1) % 10 == 0 || b < 1e-12 || j + 1 == m_max) {
      const auto k = static_cast<Eigen::Index>(alpha.size());
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
      const double now = es.eigenvalues()[0];
      if (b < 1e-12 || std::abs(now - last) < 1e-14 * std::max(1.0, std::abs(now))) return now;
      last = now;
    }
    beta.push_back(b);
    q = w / b;
  }
  return last;
}

}  // namespace

GeneratorReport exact_generator_gap(const GibbsSpec& spec) {
  const std::size_t n = spec.region.size();
  if (n > kExactGapCap) throw ResourceLimit("exact_generator_gap: region above the cap");
  if (n == 0) throw InvalidParameter("exact_generator_gap: empty region");
  const auto N = static_cast<Eigen::Index>(std::size_t{1} << n);
  const auto& vs = spec.region.vertices();
  const ExactGibbs gibbs = exact_gibbs(spec);

  std::vector<Eigen::Triplet<double>> trip;
  GeneratorReport rep;
  for (Eigen::Index s = 0; s < N; ++s) {
    Spins spins = spins_from_bits(spec, static_cast<std::uint64_t>(s));
    double out_rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = local_field(spins, spec, vs[i]);
      const double q = 1.0 / (1.0 + std::exp(-spec.beta * (f + spec.h)));
      const double rate = spins[vs[i]] > 0 ? 1.0 - q : q;
      const Eigen::Index t = s ^ (Eigen::Index{1} << i);
      trip.emplace_back(s, t, rate);
      out_rate += rate;
    }
    trip.emplace_back(s, s, -out_rate);
  }
  Eigen::SparseMatrix<double> L(N, N);
  L.setFromTriplets(trip.begin(), trip.end());

  Eigen::VectorXd rows = L * Eigen::VectorXd::Ones(N);
  rep.row_sum_error = rows.cwiseAbs().maxCoeff();
  for (Eigen::Index c = 0; c < L.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(L, c); it; ++it) {
      const auto i = it.row(), j = it.col();
      if (i == j) continue;
      const double lhs = gibbs.prob[i] * it.value();
      const double rhs = gibbs.prob[j] * L.coeff(j, i);
      rep.detailed_balance_error = std::max(rep.detailed_balance_error, std::abs(lhs - rhs));
    }

  // Stationary vector: solve L^T pi = 0 with one equation swapped for sum(pi) = 1.
  {
    Eigen::SparseMatrix<double> A = L.transpose();
    std::vector<Eigen::Triplet<double>> at;
    for (Eigen::Index c = 0; c < A.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it)
        if (it.row() != N - 1) at.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index j = 0; j < N; ++j) at.emplace_back(N - 1, j, 1.0);
    Eigen::SparseMatrix<double> M(N, N);
    M.setFromTriplets(at.begin(), at.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw InvariantViolation("generator: singular system");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    rhs[N - 1] = 1.0;
    Eigen::VectorXd pi = lu.solve(rhs);
    rep.stationary.assign(pi.data(), pi.data() + N);
  }

  // Symmetrize with the Gibbs weights: S = D^{1/2} (-L) D^{-1/2}.
  Eigen::VectorXd sq(N);
  for (Eigen::Index s = 0; s < N; ++s) sq[s] = std::sqrt(gibbs.prob[s]);
  std::vector<Eigen::Triplet<double>> st;
  for (Eigen::Index c = 0; c < L.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(L, c); it; ++it) {
      const auto i = it.row(), j = it.col();
      double v = -it.value();
      if (i != j) v = -std::sqrt(it.value() * L.coeff(j, i));
      st.emplace_back(i, j, v);
    }
  Eigen::SparseMatrix<double> S(N, N);
  S.setFromTriplets(st.begin(), st.end());
  const double shift = 2.0 * static_cast<double>(n) + 1.0;  // exceeds every eigenvalue of S
  if (N <= 512) {
    Eigen::MatrixXd D = Eigen::MatrixXd(S) + shift * sq * sq.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D, Eigen::EigenvaluesOnly);
    rep.gap = es.eigenvalues()[0];
  } else {
    rep.gap = lanczos_min(S, sq, shift);
  }
  return rep;
}

std::vector<ProfileBox> magnetization_profile(const Spins& spins, const GibbsSpec& spec,
                                              const Scales& scales, double m_star) {
  if (!(m_star > 0.0)) throw InvalidParameter("magnetization_profile: m_star must be positive");
  std::vector<ProfileBox> out;
  for (auto& box : box_decomposition(spec.region, scales.K)) {
    double sum = 0.0;
    for (auto v : box.sites) sum += spins[v];
    const double mean = sum / static_cast<double>(box.sites.size());
    const double value = box.interior ? 0.5 * (1.0 + mean / m_star) : 0.5 * (1.0 + mean);
    out.push_back(ProfileBox{std::move(box.index), value, box.interior});
  }
  return out;
}

}  // namespace dilute
