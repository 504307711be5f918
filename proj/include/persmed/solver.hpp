#ifndef PERSMED_SOLVER_HPP
#define PERSMED_SOLVER_HPP

// Exact solvers for the treatment allocation problem
//
//   max  Σ_i Σ_j csr[i][j] x[i][j]
//   s.t. Σ_i Σ_j oeb[j] x[i][j] <= budget
//        Σ_j x[i][j] = 1                  for every patient i
//        x[i][j] in {0,1}, x[i][j] = 0 if treatment j does not match patient i
//
// which is a multiple-choice knapsack: every patient is a class and must take
// exactly one of its illness's treatments. All solvers work on costs rounded
// up to multiples of `cost_resolution` and on the budget rounded down, so any
// returned assignment also fits the unrounded budget.
//
// Among equal-objective optima (within kObjectiveTolerance) the exhaustive and
// dynamic-programming solvers prefer the lower total cost, then the
// lexicographically smallest choice vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "persmed/core.hpp"

namespace persmed {

enum class SolverKind { Exhaustive, DynamicProgram, BranchAndBound };

inline std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Exhaustive: return "exhaustive";
    case SolverKind::DynamicProgram: return "dp";
    case SolverKind::BranchAndBound: return "bnb";
  }
  return "unknown";
}

inline std::optional<SolverKind> parse_solver_kind(std::string_view name) {
  if (name == "exhaustive") return SolverKind::Exhaustive;
  if (name == "dp") return SolverKind::DynamicProgram;
  if (name == "bnb") return SolverKind::BranchAndBound;
  return std::nullopt;
}

class SolveError : public std::runtime_error {
 public:
  enum class Kind {
    Infeasible,          // no assignment fits the budget
    ResolutionOverflow,  // the DP table would exceed its size bound
    SearchLimit,         // enumeration or node limit exceeded
    InvalidInput,        // instance or options fail their preconditions
  };

  SolveError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct SolveOptions {
  double cost_resolution = 1e-4;
  // Upper bound on patients x budget states of the DP choice table.
  std::uint64_t max_dp_cells = std::uint64_t{1} << 28;
  std::uint64_t max_exhaustive_points = 50'000'000;
  std::uint64_t max_bnb_nodes = 20'000'000;
};

struct SolveReport {
  Assignment assignment;
  SolverKind kind = SolverKind::DynamicProgram;
  std::uint64_t nodes_or_states = 0;
  std::optional<double> lp_bound;  // branch and bound only
};

namespace detail {

// Rounds x / resolution up (costs) or down (budget), snapping values that are
// integral up to floating-point noise.
inline std::int64_t scale_cost_up(double x, double resolution) {
  const double q = x / resolution;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-7 * std::max(1.0, std::abs(q))) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(q));
}

inline std::int64_t scale_budget_down(double x, double resolution) {
  const double q = x / resolution;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-7 * std::max(1.0, std::abs(q))) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::floor(q));
}

struct Option {
  std::size_t treatment = 0;
  double value = 0.0;
  std::int64_t delta = 0;  // scaled cost above the patient's cheapest option
};

// The instance with costs in integer units. `deltas` are expressed in units of
// `unit` resolution steps (the gcd of every delta), `slack` likewise.
struct ScaledProblem {
  std::vector<std::vector<Option>> options;  // per patient, ascending treatment index
  std::vector<std::int64_t> base_cost;       // per patient, cheapest scaled cost
  std::vector<std::int64_t> scaled_oeb;      // per treatment, in resolution steps
  std::int64_t unit = 1;
  std::int64_t slack = 0;  // (budget - Σ base_cost) / unit, floored
  std::int64_t budget_steps = 0;
};

inline ScaledProblem scale_problem(const ScenarioInstance& inst, double resolution) {
  if (!(resolution > 0.0))
    throw SolveError(SolveError::Kind::InvalidInput, "cost_resolution must be positive");
  if (auto problems = validate_instance(inst); !problems.empty()) {
    // A budget shortfall is the only violation callers can reasonably hit at
    // solve time; report it as infeasibility.
    if (problems.size() == 1 && problems.front().find("cheapest cover") != std::string::npos)
      throw SolveError(SolveError::Kind::Infeasible, problems.front());
    throw SolveError(SolveError::Kind::InvalidInput, "invalid instance: " + problems.front());
  }

  ScaledProblem sp;
  const std::size_t n = inst.patients.size();
  sp.scaled_oeb.reserve(inst.treatments.size());
  for (const auto& t : inst.treatments) sp.scaled_oeb.push_back(scale_cost_up(t.oeb, resolution));
  sp.budget_steps = scale_budget_down(inst.budget, resolution);

  sp.options.resize(n);
  sp.base_cost.resize(n);
  std::int64_t base_total = 0;
  std::int64_t g = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = treatments_for(inst.treatments, inst.patients[i].illness);
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    for (auto j : idx) lo = std::min(lo, sp.scaled_oeb[j]);
    sp.base_cost[i] = lo;
    base_total += lo;
    for (auto j : idx) {
      const std::int64_t d = sp.scaled_oeb[j] - lo;
      sp.options[i].push_back(Option{j, inst.realized_csr(i, j), d});
      g = std::gcd(g, d);
    }
  }
  if (base_total > sp.budget_steps) {
    throw SolveError(SolveError::Kind::Infeasible,
                     "budget " + std::to_string(inst.budget) +
                         " cannot cover the cheapest treatment of every patient");
  }
  sp.unit = g > 0 ? g : 1;
  for (auto& opts : sp.options)
    for (auto& o : opts) o.delta /= sp.unit;
  sp.slack = (sp.budget_steps - base_total) / sp.unit;
  return sp;
}

// Drops options that cost at least as much as a cheaper kept option without a
// larger value. Survivors are returned in ascending treatment index.
inline std::vector<Option> undominated(std::vector<Option> opts) {
  std::sort(opts.begin(), opts.end(), [](const Option& a, const Option& b) {
    if (a.delta != b.delta) return a.delta < b.delta;
    if (a.value != b.value) return a.value > b.value;
    return a.treatment < b.treatment;
  });
  std::vector<Option> kept;
  for (const auto& o : opts) {
    if (kept.empty() || o.value > kept.back().value + kObjectiveTolerance) kept.push_back(o);
  }
  std::sort(kept.begin(), kept.end(),
            [](const Option& a, const Option& b) { return a.treatment < b.treatment; });
  return kept;
}

// Incremental segments of the upper concave hull of one class's (cost, value)
// points, starting at its cheapest point.
struct HullSegment {
  std::size_t patient = 0;
  double dcost = 0.0;
  double dvalue = 0.0;
};

struct ClassHull {
  double base_cost = 0.0;
  double base_value = 0.0;
  std::vector<HullSegment> segments;  // decreasing slope, all positive
};

inline ClassHull concave_hull(std::size_t patient, std::vector<std::pair<double, double>> pts) {
  // pts: (cost, value)
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  });
  std::vector<std::pair<double, double>> frontier;
  for (const auto& p : pts) {
    if (!frontier.empty() && p.first == frontier.back().first) continue;
    if (!frontier.empty() && p.second <= frontier.back().second) continue;
    frontier.push_back(p);
  }
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : frontier) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      // drop b if it lies on or below segment a -> p
      const double cross = (b.first - a.first) * (p.second - a.second) -
                           (b.second - a.second) * (p.first - a.first);
      if (cross >= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }
  ClassHull out;
  out.base_cost = hull.front().first;
  out.base_value = hull.front().second;
  for (std::size_t k = 1; k < hull.size(); ++k) {
    out.segments.push_back(HullSegment{patient, hull[k].first - hull[k - 1].first,
                                       hull[k].second - hull[k - 1].second});
  }
  return out;
}

// Segments of every class merged in decreasing slope order. Ties go to the
// lower patient index so the order is deterministic.
inline std::vector<HullSegment> merge_segments(const std::vector<ClassHull>& hulls) {
  std::vector<HullSegment> all;
  for (const auto& h : hulls) all.insert(all.end(), h.segments.begin(), h.segments.end());
  std::stable_sort(all.begin(), all.end(), [](const HullSegment& a, const HullSegment& b) {
    const double lhs = a.dvalue * b.dcost;
    const double rhs = b.dvalue * a.dcost;
    if (lhs != rhs) return lhs > rhs;
    return a.patient < b.patient;
  });
  return all;
}

// Greedy fill of the merged segments for classes with index >= first_patient.
inline double greedy_fill(const std::vector<HullSegment>& segments, std::size_t first_patient,
                          double budget) {
  double value = 0.0;
  double left = budget;
  for (const auto& s : segments) {
    if (s.patient < first_patient) continue;
    if (left <= 0.0) break;
    if (s.dcost <= left) {
      value += s.dvalue;
      left -= s.dcost;
    } else {
      value += s.dvalue * (left / s.dcost);
      left = 0.0;
    }
  }
  return value;
}

// Strict ordering used to pick between two complete assignments.
inline bool preferred(double obj_a, std::int64_t cost_a, const std::vector<std::size_t>& a,
                      double obj_b, std::int64_t cost_b, const std::vector<std::size_t>& b) {
  if (obj_a > obj_b + kObjectiveTolerance) return true;
  if (obj_b > obj_a + kObjectiveTolerance) return false;
  if (cost_a != cost_b) return cost_a < cost_b;
  return a < b;
}

inline SolveReport solve_exhaustive(const ScenarioInstance& inst, const ScaledProblem& sp,
                                    const SolveOptions& opts) {
  const std::size_t n = sp.options.size();
  double points = 1.0;
  for (const auto& o : sp.options) points *= static_cast<double>(o.size());
  if (points > static_cast<double>(opts.max_exhaustive_points))
    throw SolveError(SolveError::Kind::SearchLimit,
                     "exhaustive search over " + std::to_string(points) + " assignments refused");

  const std::int64_t budget = sp.budget_steps;
  std::vector<std::size_t> pos(n, 0);
  std::vector<std::size_t> chosen(n), best_chosen;
  double best_obj = -std::numeric_limits<double>::infinity();
  std::int64_t best_cost = 0;
  std::uint64_t visited = 0;
  bool found = false;
  while (true) {
    double obj = 0.0;
    std::int64_t cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& o = sp.options[i][pos[i]];
      chosen[i] = o.treatment;
      obj += o.value;
      cost += sp.scaled_oeb[o.treatment];
    }
    ++visited;
    if (cost <= budget &&
        (!found || preferred(obj, cost, chosen, best_obj, best_cost, best_chosen))) {
      found = true;
      best_obj = obj;
      best_cost = cost;
      best_chosen = chosen;
    }
    // odometer, last patient fastest so visiting order is lexicographic
    std::size_t k = n;
    while (k > 0 && ++pos[k - 1] == sp.options[k - 1].size()) {
      pos[k - 1] = 0;
      --k;
    }
    if (k == 0) break;
  }
  if (!found) throw SolveError(SolveError::Kind::Infeasible, "no assignment fits the budget");
  return SolveReport{make_assignment(inst, std::move(best_chosen)), SolverKind::Exhaustive,
                     visited, std::nullopt};
}

inline SolveReport solve_dp(const ScenarioInstance& inst, const ScaledProblem& sp,
                            const SolveOptions& opts) {
  const std::size_t n = sp.options.size();
  std::vector<std::vector<Option>> options(n);
  std::vector<std::int64_t> suffix_reach(n + 1, 0);
  for (std::size_t i = n; i-- > 0;) {
    options[i] = undominated(sp.options[i]);
    std::int64_t top = 0;
    for (const auto& o : options[i]) top = std::max(top, o.delta);
    suffix_reach[i] = suffix_reach[i + 1] + top;
  }
  const std::int64_t states = std::min(sp.slack, suffix_reach[0]);
  const auto width = static_cast<std::uint64_t>(states) + 1;
  if (width * std::max<std::uint64_t>(n, 1) > opts.max_dp_cells) {
    throw SolveError(SolveError::Kind::ResolutionOverflow,
                     "DP table of " + std::to_string(n) + " x " + std::to_string(width) +
                         " states exceeds the bound; use a coarser cost_resolution or bnb");
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // best[d]: max value of patients i..n-1 spending exactly d units above base
  std::vector<double> next(width, kNegInf), cur(width, kNegInf);
  next[0] = 0.0;
  std::vector<std::uint16_t> choice(width * n, 0);
  std::uint64_t touched = 0;

  for (std::size_t i = n; i-- > 0;) {
    const auto reach = static_cast<std::size_t>(std::min(states, suffix_reach[i]));
    const auto prev_reach = static_cast<std::size_t>(std::min(states, suffix_reach[i + 1]));
    std::fill(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(reach) + 1, kNegInf);
    std::uint16_t* row = choice.data() + i * width;
    for (std::size_t k = 0; k < options[i].size(); ++k) {
      const auto& o = options[i][k];
      const auto d0 = static_cast<std::size_t>(o.delta);
      if (d0 > reach) continue;
      const std::size_t hi = std::min(reach, prev_reach + d0);
      for (std::size_t d = d0; d <= hi; ++d) {
        const double tail = next[d - d0];
        if (tail == kNegInf) continue;
        const double v = o.value + tail;
        // options are visited in ascending treatment index, so only a strict
        // improvement displaces an earlier option
        if (cur[d] == kNegInf || v > cur[d] + kObjectiveTolerance) {
          cur[d] = v;
          row[d] = static_cast<std::uint16_t>(k);
        }
      }
    }
    touched += reach + 1;
    std::swap(cur, next);
  }

  // next now holds the full-problem table
  const auto top = static_cast<std::size_t>(states);
  double best = kNegInf;
  for (std::size_t d = 0; d <= top; ++d) best = std::max(best, next[d]);
  if (best == kNegInf) throw SolveError(SolveError::Kind::Infeasible, "no assignment fits the budget");
  std::size_t d = 0;
  while (next[d] < best - kObjectiveTolerance) ++d;

  std::vector<std::size_t> chosen(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = options[i][choice[i * width + d]];
    chosen[i] = o.treatment;
    d -= static_cast<std::size_t>(o.delta);
  }
  return SolveReport{make_assignment(inst, std::move(chosen)), SolverKind::DynamicProgram, touched,
                     std::nullopt};
}

inline SolveReport solve_bnb(const ScenarioInstance& inst, const ScaledProblem& sp,
                             const SolveOptions& opts) {
  const std::size_t n = sp.options.size();
  std::vector<std::vector<Option>> options(n);
  std::vector<ClassHull> hulls;
  hulls.reserve(n);
  std::vector<double> suffix_base(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    options[i] = undominated(sp.options[i]);
    std::vector<std::pair<double, double>> pts;
    for (const auto& o : options[i]) pts.emplace_back(static_cast<double>(o.delta), o.value);
    hulls.push_back(concave_hull(i, std::move(pts)));
  }
  for (std::size_t i = n; i-- > 0;) suffix_base[i] = suffix_base[i + 1] + hulls[i].base_value;
  const auto segments = merge_segments(hulls);
  const double slack = static_cast<double>(sp.slack);
  auto bound_from = [&](std::size_t depth, double left) {
    return suffix_base[depth] + greedy_fill(segments, depth, left);
  };

  // Patients with identical option lists are interchangeable; forcing their
  // choices to be non-decreasing in patient order removes symmetric subtrees.
  std::vector<std::ptrdiff_t> prev_same(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i; k-- > 0;) {
      const auto& a = options[i];
      const auto& b = options[k];
      const bool same = a.size() == b.size() &&
                        std::equal(a.begin(), a.end(), b.begin(), [](const Option& x, const Option& y) {
                          return x.treatment == y.treatment && x.value == y.value && x.delta == y.delta;
                        });
      if (same) {
        prev_same[i] = static_cast<std::ptrdiff_t>(k);
        break;
      }
    }
  }

  struct Node {
    std::ptrdiff_t parent = -1;
    std::size_t depth = 0;
    std::uint16_t option = 0;  // position in options[depth - 1]
    std::int64_t spent = 0;
    double value = 0.0;
    double bound = 0.0;
  };
  std::vector<Node> arena;
  auto option_at = [&](std::ptrdiff_t node, std::size_t patient) {
    // walk up to the node that fixed `patient`
    while (arena[static_cast<std::size_t>(node)].depth > patient + 1)
      node = arena[static_cast<std::size_t>(node)].parent;
    return arena[static_cast<std::size_t>(node)].option;
  };

  const double root_bound = bound_from(0, slack);

  // Incumbent: per patient, the best option that fits inside the hull cost
  // the greedy LP fill fully paid for.
  std::vector<std::size_t> inc_chosen(n, 0);
  double inc_value = 0.0;
  std::int64_t inc_spent = 0;
  {
    std::vector<double> paid(n, 0.0);
    double left = slack;
    for (const auto& s : segments) {
      if (s.dcost <= left) {
        paid[s.patient] += s.dcost;
        left -= s.dcost;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      // start from the zero-delta option, which is not necessarily first
      for (std::size_t k = 0; k < options[i].size(); ++k)
        if (options[i][k].delta == 0) inc_chosen[i] = k;
      for (std::size_t k = 0; k < options[i].size(); ++k) {
        const auto& o = options[i][k];
        if (static_cast<double>(o.delta) <= paid[i] && o.value > options[i][inc_chosen[i]].value)
          inc_chosen[i] = k;
      }
      inc_value += options[i][inc_chosen[i]].value;
      inc_spent += options[i][inc_chosen[i]].delta;
    }
  }
  auto to_treatments = [&](const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = options[i][positions[i]].treatment;
    return t;
  };
  std::vector<std::size_t> best_treatments = to_treatments(inc_chosen);
  double best_value = inc_value;
  std::int64_t best_spent = inc_spent;

  constexpr double kPruneSlack = 1e-10;
  auto cmp = [&arena](std::size_t a, std::size_t b) {
    const auto& x = arena[a];
    const auto& y = arena[b];
    if (x.bound != y.bound) return x.bound < y.bound;
    if (x.depth != y.depth) return x.depth < y.depth;
    return a > b;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> open(cmp);
  arena.push_back(Node{-1, 0, 0, 0, 0.0, root_bound});
  open.push(0);
  std::uint64_t expanded = 0;

  while (!open.empty()) {
    const std::size_t id = open.top();
    open.pop();
    const Node node = arena[id];
    if (node.bound <= best_value + kPruneSlack) break;  // best-first: nothing left can improve
    if (++expanded > opts.max_bnb_nodes)
      throw SolveError(SolveError::Kind::SearchLimit, "branch and bound node limit reached");
    const std::size_t i = node.depth;
    std::size_t min_pos = 0;
    if (prev_same[i] >= 0) {
      min_pos = option_at(static_cast<std::ptrdiff_t>(id), static_cast<std::size_t>(prev_same[i]));
    }
    for (std::size_t k = min_pos; k < options[i].size(); ++k) {
      const auto& o = options[i][k];
      const std::int64_t spent = node.spent + o.delta;
      if (spent > sp.slack) continue;
      const double value = node.value + o.value;
      if (i + 1 == n) {
        std::vector<std::size_t> positions(n);
        positions[i] = k;
        for (std::size_t p = 0; p < i; ++p)
          positions[p] = option_at(static_cast<std::ptrdiff_t>(id), p);
        auto treatments = to_treatments(positions);
        if (preferred(value, spent, treatments, best_value, best_spent, best_treatments)) {
          best_value = value;
          best_spent = spent;
          best_treatments = std::move(treatments);
        }
        continue;
      }
      const double bound = value + bound_from(i + 1, slack - static_cast<double>(spent));
      if (bound <= best_value + kPruneSlack) continue;
      arena.push_back(Node{static_cast<std::ptrdiff_t>(id), i + 1, static_cast<std::uint16_t>(k),
                           spent, value, bound});
      open.push(arena.size() - 1);
    }
  }

  return SolveReport{make_assignment(inst, std::move(best_treatments)), SolverKind::BranchAndBound,
                     expanded, root_bound};
}

}  // namespace detail

/// Solves the allocation exactly with the chosen algorithm.
///
/// Throws SolveError: Infeasible when even the cheapest cover exceeds the
/// budget, ResolutionOverflow when the DP table would be too large.
inline SolveReport solve(const ScenarioInstance& inst, SolverKind kind,
                         const SolveOptions& opts = {}) {
  const auto sp = detail::scale_problem(inst, opts.cost_resolution);
  switch (kind) {
    case SolverKind::Exhaustive: return detail::solve_exhaustive(inst, sp, opts);
    case SolverKind::DynamicProgram: return detail::solve_dp(inst, sp, opts);
    case SolverKind::BranchAndBound: return detail::solve_bnb(inst, sp, opts);
  }
  throw SolveError(SolveError::Kind::InvalidInput, "unknown solver kind");
}

inline SolveReport solve(const ScenarioInstance& inst, SolverKind kind, double cost_resolution) {
  SolveOptions opts;
  opts.cost_resolution = cost_resolution;
  return solve(inst, kind, opts);
}

/// Optimum of the continuous relaxation (x in [0,1], one unit per patient)
/// with unrounded costs. Never below the integer optimum.
inline double lp_relaxation_bound(const ScenarioInstance& inst) {
  if (auto problems = validate_instance(inst); !problems.empty()) {
    const bool budget_only =
        problems.size() == 1 && problems.front().find("cheapest cover") != std::string::npos;
    throw SolveError(budget_only ? SolveError::Kind::Infeasible : SolveError::Kind::InvalidInput,
                     problems.front());
  }
  std::vector<detail::ClassHull> hulls;
  double base_cost = 0.0;
  double base_value = 0.0;
  for (std::size_t i = 0; i < inst.patients.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (auto j : treatments_for(inst.treatments, inst.patients[i].illness))
      pts.emplace_back(inst.treatments[j].oeb, inst.realized_csr(i, j));
    hulls.push_back(detail::concave_hull(i, std::move(pts)));
    base_cost += hulls.back().base_cost;
    base_value += hulls.back().base_value;
  }
  const auto segments = detail::merge_segments(hulls);
  return base_value + detail::greedy_fill(segments, 0, std::max(0.0, inst.budget - base_cost));
}

}  // namespace persmed

#endif  // PERSMED_SOLVER_HPP
