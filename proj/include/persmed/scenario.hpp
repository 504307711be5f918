#ifndef PERSMED_SCENARIO_HPP
#define PERSMED_SCENARIO_HPP

// Instance construction: the bladder-cancer treatment catalog, population
// and CSR sampling, budget computation and the abstract catalog generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "persmed/core.hpp"

namespace persmed {

// Seeds ---------------------------------------------------------------------

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a parent seed and an index.
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Bladder-cancer catalog ------------------------------------------------------

inline constexpr IllnessId kNonInvasive{0};
inline constexpr IllnessId kInvasive{1};

inline std::vector<std::string> bc_illness_names() { return {"non-invasive", "invasive"}; }

/// Mean ± std CSR and normalized OEB of the five bladder-cancer treatments.
inline std::vector<TreatmentConfig> bc_table1_catalog() {
  return {
      {kNonInvasive, "global", 0.64, 0.08, 1.00},
      {kNonInvasive, "initial-personalization", 0.71, 0.07, 1.07},
      {kNonInvasive, "during-treatment-personalization", 0.75, 0.04, 1.18},
      {kInvasive, "global", 0.32, 0.03, 1.32},
      {kInvasive, "initial-personalization", 0.36, 0.03, 1.38},
  };
}

// Population ------------------------------------------------------------------

struct PopulationDraw {
  std::size_t n1 = 0;  // non-invasive patients
  std::size_t n2 = 0;  // invasive patients
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinNonInvasive = 20;
inline constexpr std::size_t kMaxNonInvasive = 200;

/// Invasive count for a given non-invasive count: uniform on
/// [round(0.06 n1), round(0.1 n1)], at least 1.
inline std::size_t sample_invasive_count(std::size_t n1, std::mt19937_64& rng) {
  const auto lo = std::max<long>(1, std::lround(0.06 * static_cast<double>(n1)));
  const auto hi = std::max<long>(lo, std::lround(0.1 * static_cast<double>(n1)));
  return static_cast<std::size_t>(std::uniform_int_distribution<long>(lo, hi)(rng));
}

inline PopulationDraw sample_population(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PopulationDraw d;
  d.seed = seed;
  d.n1 = std::uniform_int_distribution<std::size_t>(kMinNonInvasive, kMaxNonInvasive)(rng);
  d.n2 = sample_invasive_count(d.n1, rng);
  return d;
}

/// (1 + f) (n1 b1 + n2 b2): global cover plus the personalization overhead.
inline double compute_budget(double n1, double n2, double f, double b1, double b2) {
  return (1.0 + f) * (n1 * b1 + n2 * b2);
}

// CSR realization -------------------------------------------------------------

enum class CsrSampling {
  // Every (illness, treatment) draws its own truncated normal.
  Independent,
  // Draws as above, then within each illness the sorted draws are handed out
  // in ascending mean-CSR order, so the realized values keep the catalog's
  // personalization order.
  RankPreserving,
};

/// Normal(mean, std) truncated to [0,1] by rejection.
inline double truncated_normal(double mean, double std, std::mt19937_64& rng) {
  if (std == 0.0) return std::clamp(mean, 0.0, 1.0);
  std::normal_distribution<double> dist(mean, std);
  for (;;) {
    const double v = dist(rng);
    if (v >= 0.0 && v <= 1.0) return v;
  }
}

/// One realized CSR per treatment, drawn in catalog order.
inline std::vector<double> realize_csr(std::span<const TreatmentConfig> catalog, std::uint64_t seed,
                                       CsrSampling sampling) {
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  out.reserve(catalog.size());
  for (const auto& t : catalog) out.push_back(truncated_normal(t.csr_mean, t.csr_std, rng));
  if (sampling == CsrSampling::RankPreserving) {
    std::set<IllnessId> illnesses;
    for (const auto& t : catalog) illnesses.insert(t.illness);
    for (auto ill : illnesses) {
      auto idx = treatments_for(catalog, ill);
      std::vector<double> draws;
      for (auto j : idx) draws.push_back(out[j]);
      std::sort(draws.begin(), draws.end());
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return catalog[a].csr_mean < catalog[b].csr_mean;
      });
      for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = draws[k];
    }
  }
  return out;
}

/// Builds an instance with `counts[k]` patients of illness k (grouped in
/// illness order) and budget (1 + f) Σ_k counts[k] · global_oeb(k).
inline ScenarioInstance realize_instance(std::vector<TreatmentConfig> catalog,
                                         std::span<const std::size_t> counts, double f,
                                         std::uint64_t seed,
                                         CsrSampling sampling = CsrSampling::RankPreserving) {
  if (f < 0.0) throw std::invalid_argument("overhead fraction f must be non-negative");
  ScenarioInstance inst;
  double cover = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const IllnessId ill{k};
    if (counts[k] == 0) continue;
    const auto g = global_treatment(catalog, ill);
    if (!g) throw std::invalid_argument("illness " + std::to_string(k) + " has no treatment");
    cover += static_cast<double>(counts[k]) * catalog[*g].oeb;
    inst.patients.insert(inst.patients.end(), counts[k], Patient{ill});
  }
  const auto realized = realize_csr(catalog, seed, sampling);
  inst.realized_csr = CsrMatrix(inst.patients.size(), catalog.size());
  for (std::size_t i = 0; i < inst.patients.size(); ++i)
    for (std::size_t j = 0; j < catalog.size(); ++j)
      if (catalog[j].illness == inst.patients[i].illness) inst.realized_csr(i, j) = realized[j];
  inst.treatments = std::move(catalog);
  inst.budget = (1.0 + f) * cover;
  return inst;
}

inline ScenarioInstance realize_bc_instance(const PopulationDraw& draw, double f, std::uint64_t seed,
                                            CsrSampling sampling = CsrSampling::RankPreserving) {
  const std::size_t counts[] = {draw.n1, draw.n2};
  return realize_instance(bc_table1_catalog(), counts, f, seed, sampling);
}

// Abstract catalogs -------------------------------------------------------------

/// Range of a treatment-parameter uplift over the global treatment, in
/// absolute units. Draws are uniform over the multiples of `step` in [lo, hi].
struct UpliftRange {
  double lo = 0.0;  // exclusive when 0
  double hi = 0.0;
};

inline constexpr double kAbstractGlobalCsr = 0.5;
inline constexpr double kAbstractGlobalOeb = 1.0;
inline constexpr double kAbstractStep = 0.001;

struct AbstractCatalogSpec {
  int k = 1;                      // personalized treatments, 1..4
  double max_oeb_uplift = 0.25;   // relative to the global OEB
  double max_csr_uplift = 0.20;   // relative to the global CSR
  // Explicit absolute ranges override the relative maxima (sensitivity sweeps).
  std::optional<UpliftRange> oeb_range;
  std::optional<UpliftRange> csr_range;

  UpliftRange oeb() const {
    return oeb_range.value_or(UpliftRange{0.0, max_oeb_uplift * kAbstractGlobalOeb});
  }
  UpliftRange csr() const {
    return csr_range.value_or(UpliftRange{0.0, max_csr_uplift * kAbstractGlobalCsr});
  }
};

namespace detail {

// k distinct grid steps from [lo, hi] (lo exclusive at 0), ascending. Returns
// fewer when the range holds fewer than k steps.
inline std::vector<long> distinct_steps(UpliftRange r, int k, std::mt19937_64& rng) {
  const long lo = std::max(1L, std::lround(std::ceil(r.lo / kAbstractStep - 1e-9)));
  const long hi = std::lround(std::floor(r.hi / kAbstractStep + 1e-9));
  if (hi < lo) throw std::invalid_argument("uplift range holds no grid value");
  const auto want = static_cast<std::size_t>(std::min<long>(k, hi - lo + 1));
  std::uniform_int_distribution<long> dist(lo, hi);
  std::set<long> picked;
  while (picked.size() < want) picked.insert(dist(rng));
  return {picked.begin(), picked.end()};
}

}  // namespace detail

/// Global treatment (CSR 0.5, OEB 1.0) plus k personalized ones for one
/// illness. Uplifts are drawn independently for OEB and CSR, sorted and
/// paired, so a more expensive option always has a strictly higher CSR.
inline std::vector<TreatmentConfig> generate_abstract_treatments(const AbstractCatalogSpec& spec,
                                                                 std::uint64_t seed,
                                                                 IllnessId illness = IllnessId{0}) {
  if (spec.k < 1 || spec.k > 4) throw std::invalid_argument("abstract catalog: k must be in [1,4]");
  std::mt19937_64 rng(seed);
  const auto oeb_steps = detail::distinct_steps(spec.oeb(), spec.k, rng);
  const auto csr_steps = detail::distinct_steps(spec.csr(), spec.k, rng);
  const std::size_t count = std::min(oeb_steps.size(), csr_steps.size());

  std::vector<TreatmentConfig> out;
  out.push_back({illness, "global", kAbstractGlobalCsr, 0.0, kAbstractGlobalOeb});
  for (std::size_t m = 0; m < count; ++m) {
    out.push_back({illness, "personalized-" + std::to_string(m + 1),
                   kAbstractGlobalCsr + static_cast<double>(csr_steps[m]) * kAbstractStep, 0.0,
                   kAbstractGlobalOeb + static_cast<double>(oeb_steps[m]) * kAbstractStep});
  }
  return out;
}

}  // namespace persmed

#endif  // PERSMED_SCENARIO_HPP
