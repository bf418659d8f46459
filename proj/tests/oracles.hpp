#pragma once

// Brute-force helpers shared by the test programs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

/// All increasing events on {0,1}^n as indicator tables of length 2^n.
/// An up-set splits on the top coordinate into a pair f0 <= f1 of up-sets
/// on n - 1 coordinates.
inline std::vector<std::vector<bool>> up_sets(int n) {
  if (n == 0) return {{false}, {true}};
  auto lower = up_sets(n - 1);
  std::vector<std::vector<bool>> out;
  for (const auto& f0 : lower)
    for (const auto& f1 : lower) {
      bool below = true;
      for (std::size_t a = 0; a < f0.size() && below; ++a)
        if (f0[a] && !f1[a]) below = false;
      if (!below) continue;
      std::vector<bool> f(f0);
      f.insert(f.end(), f1.begin(), f1.end());
      out.push_back(std::move(f));
    }
  return out;
}

/// Largest amount by which P_low(A) exceeds P_high(A) over increasing A.
inline double dominance_violation(const std::vector<double>& low, const std::vector<double>& high,
                                  const std::vector<std::vector<bool>>& events) {
  double worst = 0.0;
  for (const auto& ev : events) {
    double pl = 0.0, ph = 0.0;
    for (std::size_t a = 0; a < ev.size(); ++a)
      if (ev[a]) {
        pl += low[a];
        ph += high[a];
      }
    worst = std::max(worst, pl - ph);
  }
  return worst;
}

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double critical = 0.0;  // 99% quantile
  bool pass() const { return statistic <= critical; }
};

/// Pearson test of observed counts against probabilities; cells with an
/// expected count below 5 are pooled. The 99% quantile uses the
/// Wilson-Hilferty approximation.
inline ChiSquare chi_square(const std::vector<double>& counts, const std::vector<double>& prob) {
  double n = 0.0;
  for (double c : counts) n += c;
  ChiSquare out;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  int cells = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double e = n * prob[i];
    if (e < 5.0) {
      pooled_obs += counts[i];
      pooled_exp += e;
      continue;
    }
    out.statistic += (counts[i] - e) * (counts[i] - e) / e;
    ++cells;
  }
  if (pooled_exp > 0.0) {
    out.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  }
  out.dof = cells - 1;
  const double k = out.dof, z = 2.3263478740408408;
  out.critical = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
  return out;
}

}  // namespace oracle
