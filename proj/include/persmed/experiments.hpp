#ifndef PERSMED_EXPERIMENTS_HPP
#define PERSMED_EXPERIMENTS_HPP

// Monte-Carlo studies over the allocation model:
//   Q1  overhead fraction f -> personalization level (bladder-cancer catalog)
//   Q2  which personalized options get chosen, as a (ΔOEB, ΔCSR) heatmap
//   Q3  sensitivity of the personalization level to patient count, average
//       ΔOEB and average ΔCSR (abstract catalogs)
//
// Repetition r of every study uses seed mix64(root_seed, r), so results are
// independent of the thread count and the same repetition sees the same
// population and catalog at every grid value.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "persmed/core.hpp"
#include "persmed/metrics.hpp"
#include "persmed/scenario.hpp"
#include "persmed/solver.hpp"

namespace persmed {

struct SweepSpec {
  std::size_t repetitions = 1000;
  std::uint64_t root_seed = 0;
  SolverKind solver = SolverKind::DynamicProgram;
  std::vector<double> grid;
  double f = 0.075;  // overhead fraction where it is not the swept parameter
  double cost_resolution = 1e-4;
  unsigned threads = 1;  // 0 = hardware concurrency
  CsrSampling sampling = CsrSampling::RankPreserving;
};

struct AggregatePoint {
  double x = 0.0;
  double mean_rho = 0.0;
  double std_rho = 0.0;
  std::size_t repetitions_used = 0;
};

struct RepetitionResult {
  double x = 0.0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double rho = 0.0;
  double objective = 0.0;
  double total_cost = 0.0;
  double budget = 0.0;
  // (ΔOEB, ΔCSR) of every patient's chosen treatment versus their global one
  std::vector<std::pair<double, double>> deltas;
};

/// Validates a sweep: at least one repetition, non-empty strictly increasing grid.
inline void check_sweep(const SweepSpec& spec) {
  if (spec.repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  if (spec.grid.empty()) throw std::invalid_argument("grid must not be empty");
  for (std::size_t k = 1; k < spec.grid.size(); ++k)
    if (!(spec.grid[k] > spec.grid[k - 1])) throw std::invalid_argument("grid must be strictly increasing");
  if (spec.f < 0.0) throw std::invalid_argument("f must be non-negative");
}

/// Runs body(k) for k in [0, count) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers finish.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= count) return;
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

namespace detail {

enum Stream : std::uint64_t { kPopulation = 1, kCsr = 2, kCatalog = 10, kCatalogSize = 20 };

inline std::vector<std::pair<double, double>> chosen_deltas(const ScenarioInstance& inst,
                                                            const Assignment& asg) {
  std::vector<std::pair<double, double>> out;
  out.reserve(asg.chosen.size());
  for (std::size_t i = 0; i < asg.chosen.size(); ++i) {
    const auto g = *global_treatment(inst.treatments, inst.patients[i].illness);
    const auto& c = inst.treatments[asg.chosen[i]];
    const auto& b = inst.treatments[g];
    out.emplace_back(c.oeb - b.oeb, c.csr_mean - b.csr_mean);
  }
  return out;
}

inline RepetitionResult solve_repetition(const ScenarioInstance& inst, const SweepSpec& spec, double x,
                                         std::size_t rep, std::uint64_t seed, std::size_t n1,
                                         std::size_t n2, bool keep_deltas) {
  const auto report = solve(inst, spec.solver, spec.cost_resolution);
  RepetitionResult r;
  r.x = x;
  r.repetition = rep;
  r.seed = seed;
  r.n1 = n1;
  r.n2 = n2;
  r.rho = personalization_level(inst, report.assignment);
  r.objective = report.assignment.objective;
  r.total_cost = report.assignment.total_cost;
  r.budget = inst.budget;
  if (keep_deltas) r.deltas = chosen_deltas(inst, report.assignment);
  return r;
}

inline std::vector<AggregatePoint> aggregate(const std::vector<double>& grid,
                                             const std::vector<RepetitionResult>& results,
                                             std::size_t repetitions) {
  std::vector<AggregatePoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> rhos;
    rhos.reserve(repetitions);
    for (std::size_t r = 0; r < repetitions; ++r) rhos.push_back(results[g * repetitions + r].rho);
    out.push_back({grid[g], mean(rhos), sample_std(rhos), rhos.size()});
  }
  return out;
}

// Two illnesses, each with its own abstract catalog of 1..4 personalized
// options, and a population drawn like the bladder-cancer one.
struct AbstractSetup {
  std::optional<std::size_t> fixed_n1;
  std::optional<UpliftRange> oeb_range;
  std::optional<UpliftRange> csr_range;
};

inline ScenarioInstance abstract_instance(std::uint64_t seed, double f, const AbstractSetup& setup,
                                          std::size_t& n1, std::size_t& n2) {
  std::vector<TreatmentConfig> catalog;
  for (std::size_t ill = 0; ill < 2; ++ill) {
    std::mt19937_64 size_rng(mix64(seed, kCatalogSize + ill));
    AbstractCatalogSpec cs;
    cs.k = std::uniform_int_distribution<int>(1, 4)(size_rng);
    cs.oeb_range = setup.oeb_range;
    cs.csr_range = setup.csr_range;
    auto part = generate_abstract_treatments(cs, mix64(seed, kCatalog + ill), IllnessId{ill});
    catalog.insert(catalog.end(), part.begin(), part.end());
  }
  if (setup.fixed_n1) {
    std::mt19937_64 rng(mix64(seed, kPopulation));
    n1 = *setup.fixed_n1;
    n2 = sample_invasive_count(n1, rng);
  } else {
    const auto draw = sample_population(mix64(seed, kPopulation));
    n1 = draw.n1;
    n2 = draw.n2;
  }
  const std::size_t counts[] = {n1, n2};
  return realize_instance(std::move(catalog), counts, f, mix64(seed, kCsr));
}

}  // namespace detail

// Q1 ---------------------------------------------------------------------------

struct Q1Result {
  std::vector<AggregatePoint> points;
  std::vector<RepetitionResult> repetitions;  // grid-major
  FitResult fit;                              // rho ~ f over all repetitions
};

inline Q1Result run_q1(const SweepSpec& spec) {
  check_sweep(spec);
  const std::size_t reps = spec.repetitions;
  std::vector<RepetitionResult> results(spec.grid.size() * reps);
  parallel_for(results.size(), spec.threads, [&](std::size_t task) {
    const std::size_t g = task / reps;
    const std::size_t r = task % reps;
    const std::uint64_t seed = mix64(spec.root_seed, r);
    const auto draw = sample_population(mix64(seed, detail::kPopulation));
    const auto inst = realize_bc_instance(draw, spec.grid[g], mix64(seed, detail::kCsr), spec.sampling);
    results[task] = detail::solve_repetition(inst, spec, spec.grid[g], r, seed, draw.n1, draw.n2, false);
  });

  Q1Result out;
  out.points = detail::aggregate(spec.grid, results, reps);
  std::vector<double> xs, ys;
  for (const auto& r : results) {
    xs.push_back(r.x);
    ys.push_back(r.rho);
  }
  if (spec.grid.size() >= 2) out.fit = linear_fit(xs, ys);
  out.repetitions = std::move(results);
  return out;
}

// Q2 ---------------------------------------------------------------------------

inline constexpr double kHeatmapBinWidth = 0.01;
inline constexpr double kSurfaceFitMaxDeltaOeb = 0.07;

struct Q2Result {
  HeatmapGrid heatmap;
  FitResult fit;                         // empty coefficients if too few cells
  std::vector<SurfacePoint> fit_points;  // cells with ΔOEB <= 0.07
  std::size_t personalized_selections = 0;
  std::size_t total_patients = 0;
};

/// Heatmap cells whose ΔOEB lower edge is at most `max_delta_oeb`, as fit points
/// located at the cell's lower edges.
inline std::vector<SurfacePoint> surface_points(const HeatmapGrid& grid, double max_delta_oeb) {
  std::vector<SurfacePoint> pts;
  const auto max_bin = detail::bin_index(max_delta_oeb, grid.bin_width);
  for (const auto& [key, v] : grid.cells) {
    if (key.first > max_bin) continue;
    pts.push_back({static_cast<double>(key.first) * grid.bin_width,
                   static_cast<double>(key.second) * grid.bin_width, v});
  }
  return pts;
}

inline Q2Result run_q2(std::size_t repetitions, double f, std::uint64_t root_seed, unsigned threads = 1,
                       SolverKind solver = SolverKind::DynamicProgram, double cost_resolution = 1e-4) {
  SweepSpec spec;
  spec.repetitions = repetitions;
  spec.root_seed = root_seed;
  spec.solver = solver;
  spec.grid = {f};
  spec.f = f;
  spec.cost_resolution = cost_resolution;
  spec.threads = threads;
  check_sweep(spec);

  std::vector<RepetitionResult> results(repetitions);
  parallel_for(repetitions, threads, [&](std::size_t r) {
    const std::uint64_t seed = mix64(root_seed, r);
    std::size_t n1 = 0, n2 = 0;
    const auto inst = detail::abstract_instance(seed, f, {}, n1, n2);
    results[r] = detail::solve_repetition(inst, spec, f, r, seed, n1, n2, true);
  });

  Q2Result out;
  std::vector<std::pair<double, double>> personalized;
  for (const auto& r : results) {
    out.total_patients += r.deltas.size();
    for (const auto& d : r.deltas)
      if (d.first > 0.0) personalized.push_back(d);
  }
  out.personalized_selections = personalized.size();
  out.heatmap = bin_selections(personalized, kHeatmapBinWidth);
  out.fit_points = surface_points(out.heatmap, kSurfaceFitMaxDeltaOeb);
  try {
    out.fit = poly_surface_fit(out.fit_points);
  } catch (const DegenerateInput&) {
    out.fit = FitResult{{}, 0.0, 0.0, kSurfaceBasis};
  }
  return out;
}

// Q3 ---------------------------------------------------------------------------

enum class SensitivityAxis { PatientCount, AvgDeltaOeb, AvgDeltaCsr };

inline std::string_view to_string(SensitivityAxis axis) {
  switch (axis) {
    case SensitivityAxis::PatientCount: return "n";
    case SensitivityAxis::AvgDeltaOeb: return "oeb";
    case SensitivityAxis::AvgDeltaCsr: return "csr";
  }
  return "unknown";
}

inline std::optional<SensitivityAxis> parse_axis(std::string_view name) {
  if (name == "n") return SensitivityAxis::PatientCount;
  if (name == "oeb") return SensitivityAxis::AvgDeltaOeb;
  if (name == "csr") return SensitivityAxis::AvgDeltaCsr;
  return std::nullopt;
}

/// Uplift range with mean x used for the average-ΔOEB sweep: uniform on
/// [0.5x, 1.5x].
inline UpliftRange oeb_range_for_average(double x) { return {0.5 * x, 1.5 * x}; }

/// Uplift range with mean x used for the average-ΔCSR sweep: the default
/// ΔCSR range (0, 0.1] shifted to mean x, i.e. [x - 0.05, x + 0.05], clipped
/// to keep the CSR within [0,1].
inline UpliftRange csr_range_for_average(double x) {
  const double half = 0.5 * AbstractCatalogSpec{}.csr().hi;
  return {std::max(0.0, x - half), std::min(1.0 - kAbstractGlobalCsr, x + half)};
}

struct Q3Result {
  std::vector<AggregatePoint> points;
  std::vector<RepetitionResult> repetitions;  // grid-major
};

inline Q3Result run_q3(const SweepSpec& spec, SensitivityAxis axis) {
  check_sweep(spec);
  const std::size_t reps = spec.repetitions;
  std::vector<RepetitionResult> results(spec.grid.size() * reps);
  parallel_for(results.size(), spec.threads, [&](std::size_t task) {
    const std::size_t g = task / reps;
    const std::size_t r = task % reps;
    const double x = spec.grid[g];
    const std::uint64_t seed = mix64(spec.root_seed, r);
    detail::AbstractSetup setup;
    switch (axis) {
      case SensitivityAxis::PatientCount:
        if (x < 1.0) throw std::invalid_argument("patient-count grid values must be >= 1");
        setup.fixed_n1 = static_cast<std::size_t>(std::llround(x));
        break;
      case SensitivityAxis::AvgDeltaOeb: setup.oeb_range = oeb_range_for_average(x); break;
      case SensitivityAxis::AvgDeltaCsr: setup.csr_range = csr_range_for_average(x); break;
    }
    std::size_t n1 = 0, n2 = 0;
    const auto inst = detail::abstract_instance(seed, spec.f, setup, n1, n2);
    results[task] = detail::solve_repetition(inst, spec, x, r, seed, n1, n2, false);
  });
  Q3Result out;
  out.points = detail::aggregate(spec.grid, results, reps);
  out.repetitions = std::move(results);
  return out;
}

}  // namespace persmed

#endif  // PERSMED_EXPERIMENTS_HPP
