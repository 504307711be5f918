#ifndef PERSMED_TESTS_SUPPORT_HPP
#define PERSMED_TESTS_SUPPORT_HPP

// Test-only helpers: random instance generation and a brute-force optimum
// that shares no code with the library solvers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "persmed/core.hpp"

namespace persmed::testing {

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

/// n <= max_patients patients over 1-3 illnesses, z <= max_treatments
/// treatments with 2-decimal costs, realized CSR uniform in [0,1] and a
/// budget between the cheapest cover and the most expensive cover.
inline ScenarioInstance random_instance(std::mt19937_64& rng, std::size_t max_patients = 8,
                                        std::size_t max_treatments = 5) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t illnesses = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  const std::size_t z =
      std::uniform_int_distribution<std::size_t>(illnesses, std::max(illnesses, max_treatments))(rng);
  ScenarioInstance inst;
  for (std::size_t j = 0; j < z; ++j) {
    // first `illnesses` treatments cover each illness once
    const std::size_t ill = j < illnesses ? j : std::uniform_int_distribution<std::size_t>(0, illnesses - 1)(rng);
    inst.treatments.push_back({IllnessId{ill}, "t" + std::to_string(j), round2(unit(rng)), 0.05,
                               round2(0.5 + 1.5 * unit(rng))});
  }
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_patients)(rng);
  for (std::size_t i = 0; i < n; ++i)
    inst.patients.push_back({IllnessId{std::uniform_int_distribution<std::size_t>(0, illnesses - 1)(rng)}});
  inst.realized_csr = CsrMatrix(n, z);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double cheapest = std::numeric_limits<double>::infinity(), dearest = 0.0;
    for (std::size_t j = 0; j < z; ++j) {
      if (inst.treatments[j].illness != inst.patients[i].illness) continue;
      inst.realized_csr(i, j) = unit(rng);
      cheapest = std::min(cheapest, inst.treatments[j].oeb);
      dearest = std::max(dearest, inst.treatments[j].oeb);
    }
    lo += cheapest;
    hi += dearest;
  }
  inst.budget = round2(lo + (hi - lo) * unit(rng));
  if (inst.budget < lo) inst.budget = lo;
  return inst;
}

struct BruteForce {
  double objective = -std::numeric_limits<double>::infinity();
  long long cost_cents = 0;
  std::vector<std::size_t> chosen;
  bool feasible = false;
};

/// Plain recursive enumeration with costs in whole cents (exact for the
/// 2-decimal costs produced above).
inline BruteForce brute_force(const ScenarioInstance& inst) {
  BruteForce best;
  const std::size_t n = inst.patients.size();
  const long long budget = std::llround(std::floor(inst.budget * 100.0 + 1e-6));
  std::vector<std::size_t> cur(n);
  auto rec = [&](auto&& self, std::size_t i, double value, long long cents) -> void {
    if (cents > budget) return;
    if (i == n) {
      const bool better = !best.feasible || value > best.objective + 1e-9 ||
                          (std::abs(value - best.objective) <= 1e-9 && cents < best.cost_cents);
      if (better) best = {value, cents, cur, true};
      return;
    }
    for (std::size_t j = 0; j < inst.treatments.size(); ++j) {
      if (inst.treatments[j].illness != inst.patients[i].illness) continue;
      cur[i] = j;
      self(self, i + 1, value + inst.realized_csr(i, j), cents + std::llround(inst.treatments[j].oeb * 100.0));
    }
  };
  rec(rec, 0, 0.0, 0);
  return best;
}

}  // namespace persmed::testing

#endif  // PERSMED_TESTS_SUPPORT_HPP
