#include <gtest/gtest.h>

#include <random>

#include "persmed/solver.hpp"
#include "support.hpp"

namespace persmed {
namespace {

constexpr SolverKind kAll[] = {SolverKind::Exhaustive, SolverKind::DynamicProgram,
                               SolverKind::BranchAndBound};

ScenarioInstance two_non_invasive(double budget) {
  ScenarioInstance inst;
  inst.treatments = {{IllnessId{0}, "global", 0.64, 0.0, 1.00},
                     {IllnessId{0}, "personalized", 0.75, 0.0, 1.07}};
  inst.patients = {Patient{IllnessId{0}}, Patient{IllnessId{0}}};
  inst.realized_csr = CsrMatrix(2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    inst.realized_csr(i, 0) = 0.64;
    inst.realized_csr(i, 1) = 0.75;
  }
  inst.budget = budget;
  return inst;
}

TEST(Solve, SinglePatientSingleTreatment) {
  ScenarioInstance inst;
  inst.treatments = {{IllnessId{0}, "global", 0.64, 0.0, 1.0}};
  inst.patients = {Patient{IllnessId{0}}};
  inst.realized_csr = CsrMatrix(1, 1, 0.64);
  inst.budget = 1.0;
  for (auto kind : kAll) {
    const auto r = solve(inst, kind);
    EXPECT_EQ(r.assignment.chosen, std::vector<std::size_t>{0}) << to_string(kind);
    EXPECT_NEAR(r.assignment.objective, 0.64, 1e-12);
  }
}

TEST(Solve, TwoPatientsOneUpgrade) {
  // Four assignments: 1.28 @ 2.00, 1.39 @ 2.07 (twice), 1.50 @ 2.14 > 2.07.
  const auto inst = two_non_invasive(2.07);
  for (auto kind : kAll) {
    const auto r = solve(inst, kind);
    EXPECT_NEAR(r.assignment.objective, 1.39, 1e-9) << to_string(kind);
    EXPECT_EQ(r.assignment.chosen[0] + r.assignment.chosen[1], 1u) << to_string(kind);
    EXPECT_TRUE(within_budget(r.assignment.total_cost, inst.budget));
  }
  // tie-breaking: lexicographically smallest choice vector
  EXPECT_EQ(solve(inst, SolverKind::DynamicProgram).assignment.chosen, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(solve(inst, SolverKind::Exhaustive).assignment.chosen, (std::vector<std::size_t>{0, 1}));
}

TEST(Solve, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = testing::random_instance(rng);
    ASSERT_TRUE(validate_instance(inst).empty());
    const auto oracle = testing::brute_force(inst);
    ASSERT_TRUE(oracle.feasible);
    for (auto kind : kAll) {
      const auto r = solve(inst, kind);
      EXPECT_NEAR(r.assignment.objective, oracle.objective, 1e-9) << "trial " << trial << " " << to_string(kind);
      EXPECT_TRUE(validate_assignment(inst, r.assignment).empty()) << "trial " << trial;
    }
  }
}

TEST(Solve, MinimumCostAmongOptimaForDpAndExhaustive) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = testing::random_instance(rng);
    const auto oracle = testing::brute_force(inst);
    for (auto kind : {SolverKind::Exhaustive, SolverKind::DynamicProgram}) {
      const auto r = solve(inst, kind);
      EXPECT_NEAR(r.assignment.total_cost, static_cast<double>(oracle.cost_cents) / 100.0, 1e-9)
          << "trial " << trial;
    }
  }
}

TEST(Solve, MonotoneInBudget) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    auto inst = testing::random_instance(rng);
    double prev = -1.0;
    const double cover = cheapest_cover_cost(inst);
    for (int step = 0; step <= 10; ++step) {
      inst.budget = cover + 0.1 * step;
      const double obj = solve(inst, SolverKind::DynamicProgram).assignment.objective;
      EXPECT_GE(obj, prev - 1e-12);
      prev = obj;
    }
  }
}

TEST(Solve, ArgmaxInvariantUnderCsrScaling) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = testing::random_instance(rng);
    auto scaled = inst;
    for (std::size_t i = 0; i < inst.patient_count(); ++i)
      for (std::size_t j = 0; j < inst.treatment_count(); ++j) scaled.realized_csr(i, j) *= 0.5;
    for (auto kind : {SolverKind::Exhaustive, SolverKind::DynamicProgram}) {
      const auto a = solve(inst, kind).assignment;
      const auto b = solve(scaled, kind).assignment;
      EXPECT_EQ(a.chosen, b.chosen) << "trial " << trial;
      EXPECT_NEAR(b.objective, 0.5 * a.objective, 1e-9);
    }
  }
}

ScenarioInstance off_grid_costs(double budget) {
  // 1.00004 and 1.00016 round up to 1.0001 and 1.0002
  ScenarioInstance inst;
  inst.treatments = {{IllnessId{0}, "g", 0.5, 0.0, 1.00004}, {IllnessId{0}, "p", 0.9, 0.0, 1.00016}};
  inst.patients = {Patient{IllnessId{0}}, Patient{IllnessId{0}}};
  inst.realized_csr = CsrMatrix(2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    inst.realized_csr(i, 0) = 0.5;
    inst.realized_csr(i, 1) = 0.9;
  }
  inst.budget = budget;
  return inst;
}

TEST(Solve, RoundedCostsNeverExceedTrueBudget) {
  // One upgrade truly costs 2.0002 <= 2.00025 but 2.0003 after rounding.
  const auto inst = off_grid_costs(2.00025);
  for (auto kind : kAll) {
    const auto r = solve(inst, kind, 1e-4);
    EXPECT_EQ(r.assignment.chosen, (std::vector<std::size_t>{0, 0})) << to_string(kind);
    EXPECT_LE(r.assignment.total_cost, inst.budget);
  }
  EXPECT_EQ(solve(inst, SolverKind::DynamicProgram, 1e-5).assignment.chosen, (std::vector<std::size_t>{0, 1}));
}

TEST(Solve, RoundingCanMakeATightCoverInfeasible) {
  // True cover 2.00008 fits 2.0001, the rounded cover 2.0002 does not.
  try {
    solve(off_grid_costs(2.0001), SolverKind::DynamicProgram, 1e-4);
    FAIL() << "expected SolveError";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.kind(), SolveError::Kind::Infeasible);
  }
  EXPECT_NO_THROW(solve(off_grid_costs(2.0001), SolverKind::DynamicProgram, 1e-5));
}

TEST(Solve, InfeasibleBudget) {
  auto inst = two_non_invasive(1.5);
  for (auto kind : kAll) {
    try {
      solve(inst, kind);
      FAIL() << "expected SolveError";
    } catch (const SolveError& e) {
      EXPECT_EQ(e.kind(), SolveError::Kind::Infeasible);
    }
  }
}

TEST(Solve, InvalidInstanceIsRejected) {
  auto inst = two_non_invasive(2.07);
  inst.realized_csr(0, 1) = 2.0;
  try {
    solve(inst, SolverKind::DynamicProgram);
    FAIL() << "expected SolveError";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.kind(), SolveError::Kind::InvalidInput);
  }
}

TEST(Solve, ResolutionOverflow) {
  // slack 0.14 is two 0.07 units: a 2 x 3 table
  const auto inst = two_non_invasive(2.14);
  SolveOptions opts;
  opts.max_dp_cells = 5;
  try {
    solve(inst, SolverKind::DynamicProgram, opts);
    FAIL() << "expected SolveError";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.kind(), SolveError::Kind::ResolutionOverflow);
  }
  // branch and bound is unaffected by the table bound
  EXPECT_NEAR(solve(inst, SolverKind::BranchAndBound, opts).assignment.objective, 1.50, 1e-9);
  opts.max_dp_cells = 6;
  EXPECT_NEAR(solve(inst, SolverKind::DynamicProgram, opts).assignment.objective, 1.50, 1e-9);
}

TEST(LpBound, TwoPatientExample) {
  // Slack 0.07 buys exactly one full upgrade at slope 0.11/0.07.
  EXPECT_NEAR(lp_relaxation_bound(two_non_invasive(2.07)), 1.39, 1e-12);
}

TEST(LpBound, FractionalUpgrade) {
  // Slack 0.25 against an upgrade of cost 0.5 and gain 0.4: bound 1.0 + 0.2,
  // while no integer upgrade fits.
  ScenarioInstance inst;
  inst.treatments = {{IllnessId{0}, "g", 0.5, 0.0, 1.0}, {IllnessId{0}, "p", 0.9, 0.0, 1.5}};
  inst.patients = {Patient{IllnessId{0}}, Patient{IllnessId{0}}};
  inst.realized_csr = CsrMatrix(2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    inst.realized_csr(i, 0) = 0.5;
    inst.realized_csr(i, 1) = 0.9;
  }
  inst.budget = 2.25;
  EXPECT_NEAR(lp_relaxation_bound(inst), 1.2, 1e-12);
  EXPECT_NEAR(solve(inst, SolverKind::BranchAndBound).assignment.objective, 1.0, 1e-12);
}

TEST(LpBound, UnconstrainedBudgetGivesRowMaxima) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = testing::random_instance(rng);
    inst.budget = 1e3;
    double expected = 0.0;
    for (std::size_t i = 0; i < inst.patient_count(); ++i) {
      double best = 0.0;
      for (auto j : treatments_for(inst.treatments, inst.patients[i].illness))
        best = std::max(best, inst.realized_csr(i, j));
      expected += best;
    }
    EXPECT_NEAR(lp_relaxation_bound(inst), expected, 1e-9);
  }
}

TEST(LpBound, DominatesIntegerOptimum) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = testing::random_instance(rng);
    EXPECT_GE(lp_relaxation_bound(inst), testing::brute_force(inst).objective - 1e-9) << "trial " << trial;
  }
}

TEST(SolverKindNames, RoundTrip) {
  for (auto kind : kAll) EXPECT_EQ(parse_solver_kind(to_string(kind)), kind);
  EXPECT_FALSE(parse_solver_kind("simplex").has_value());
}

}  // namespace
}  // namespace persmed
