#ifndef PERSMED_CORE_HPP
#define PERSMED_CORE_HPP

// Domain types for budget-constrained treatment allocation: illnesses,
// treatment configurations, patients, solvable instances and assignments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace persmed {

/// Index into the illness catalog of a scenario.
struct IllnessId {
  std::size_t value = 0;

  friend bool operator==(IllnessId, IllnessId) = default;
  friend auto operator<=>(IllnessId, IllnessId) = default;
};

/// One treatment option for one illness. `oeb` is the normalized cost.
struct TreatmentConfig {
  IllnessId illness;
  std::string label;
  double csr_mean = 0.0;
  double csr_std = 0.0;
  double oeb = 1.0;

  friend bool operator==(const TreatmentConfig&, const TreatmentConfig&) = default;
};

struct Patient {
  IllnessId illness;

  friend bool operator==(const Patient&, const Patient&) = default;
};

/// Row-major n x z matrix of realized clinical success rates.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A single solvable allocation problem.
struct ScenarioInstance {
  std::vector<Patient> patients;
  std::vector<TreatmentConfig> treatments;
  CsrMatrix realized_csr;
  double budget = 0.0;

  std::size_t patient_count() const { return patients.size(); }
  std::size_t treatment_count() const { return treatments.size(); }

  friend bool operator==(const ScenarioInstance&, const ScenarioInstance&) = default;
};

/// The solved policy: one treatment index per patient.
struct Assignment {
  std::vector<std::size_t> chosen;
  double objective = 0.0;
  double total_cost = 0.0;
};

// Absolute tolerance used when comparing summed CSR values and costs.
inline constexpr double kObjectiveTolerance = 1e-9;

/// Budget check with a small relative slack for floating-point summation order.
inline bool within_budget(double cost, double budget) {
  return cost <= budget + kObjectiveTolerance * std::max(1.0, std::abs(budget));
}

/// Treatment indices applicable to `illness`, ascending.
inline std::vector<std::size_t> treatments_for(std::span<const TreatmentConfig> treatments,
                                               IllnessId illness) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < treatments.size(); ++j) {
    if (treatments[j].illness == illness) out.push_back(j);
  }
  return out;
}

/// The cheapest treatment of an illness (lowest index on ties), if any.
inline std::optional<std::size_t> global_treatment(std::span<const TreatmentConfig> treatments,
                                                   IllnessId illness) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < treatments.size(); ++j) {
    if (treatments[j].illness != illness) continue;
    if (!best || treatments[j].oeb < treatments[*best].oeb) best = j;
  }
  return best;
}

/// Cost of giving every patient the global treatment of their illness.
/// Patients whose illness has no treatment contribute nothing.
inline double cheapest_cover_cost(const ScenarioInstance& inst) {
  double total = 0.0;
  for (const auto& p : inst.patients) {
    if (auto g = global_treatment(inst.treatments, p.illness)) total += inst.treatments[*g].oeb;
  }
  return total;
}

/// Σ realized CSR and Σ oeb of a choice vector.
inline std::pair<double, double> evaluate(const ScenarioInstance& inst,
                                          std::span<const std::size_t> chosen) {
  double objective = 0.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    objective += inst.realized_csr(i, chosen[i]);
    cost += inst.treatments[chosen[i]].oeb;
  }
  return {objective, cost};
}

inline Assignment make_assignment(const ScenarioInstance& inst, std::vector<std::size_t> chosen) {
  auto [objective, cost] = evaluate(inst, chosen);
  return Assignment{std::move(chosen), objective, cost};
}

/// Lists every violated instance invariant, one human-readable entry each.
///
/// Ordering is by invariant, then by patient/treatment index:
///   1. treatment field ranges (csr_mean in [0,1], csr_std >= 0, oeb > 0)
///   2. realized CSR matrix shape
///   3. patient illness has a treatment
///   4. realized CSR in [0,1], and zero for non-matching treatments
///   5. budget > 0 and budget covers the cheapest cover
inline std::vector<std::string> validate_instance(const ScenarioInstance& inst) {
  std::vector<std::string> out;
  auto note = [&out](auto&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    out.push_back(os.str());
  };

  for (std::size_t j = 0; j < inst.treatments.size(); ++j) {
    const auto& t = inst.treatments[j];
    if (!(t.csr_mean >= 0.0 && t.csr_mean <= 1.0))
      note("treatment ", j, " (", t.label, "): csr_mean ", t.csr_mean, " outside [0,1]");
    if (!(t.csr_std >= 0.0))
      note("treatment ", j, " (", t.label, "): csr_std ", t.csr_std, " is negative");
    if (!(t.oeb > 0.0)) note("treatment ", j, " (", t.label, "): oeb ", t.oeb, " is not positive");
  }

  const std::size_t n = inst.patients.size();
  const std::size_t z = inst.treatments.size();
  const bool shape_ok = inst.realized_csr.rows() == n && inst.realized_csr.cols() == z;
  if (!shape_ok) {
    note("realized_csr is ", inst.realized_csr.rows(), "x", inst.realized_csr.cols(),
         ", expected ", n, "x", z);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!global_treatment(inst.treatments, inst.patients[i].illness))
      note("patient ", i, ": illness ", inst.patients[i].illness.value, " has no treatment");
  }

  if (shape_ok) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < z; ++j) {
        const double v = inst.realized_csr(i, j);
        if (inst.treatments[j].illness != inst.patients[i].illness) {
          if (v != 0.0)
            note("patient ", i, ", treatment ", j, ": realized CSR ", v,
                 " must be 0 for a treatment of another illness");
        } else if (!(v >= 0.0 && v <= 1.0)) {
          note("patient ", i, ", treatment ", j, ": realized CSR ", v, " outside [0,1]");
        }
      }
    }
  }

  if (!(inst.budget > 0.0)) note("budget ", inst.budget, " is not positive");
  const double cover = cheapest_cover_cost(inst);
  if (!within_budget(cover, inst.budget))
    note("budget ", inst.budget, " is below the cheapest cover cost ", cover);
  return out;
}

/// Assignment invariants against its originating instance (empty = valid).
inline std::vector<std::string> validate_assignment(const ScenarioInstance& inst,
                                                    const Assignment& asg) {
  std::vector<std::string> out;
  if (asg.chosen.size() != inst.patients.size()) {
    out.push_back("assignment covers " + std::to_string(asg.chosen.size()) + " patients, expected " +
                  std::to_string(inst.patients.size()));
    return out;
  }
  for (std::size_t i = 0; i < asg.chosen.size(); ++i) {
    const auto j = asg.chosen[i];
    if (j >= inst.treatments.size() || inst.treatments[j].illness != inst.patients[i].illness)
      out.push_back("patient " + std::to_string(i) + ": treatment " + std::to_string(j) +
                    " does not match the patient's illness");
  }
  if (!out.empty()) return out;
  auto [objective, cost] = evaluate(inst, asg.chosen);
  if (std::abs(objective - asg.objective) > kObjectiveTolerance)
    out.push_back("stored objective differs from recomputed value");
  if (std::abs(cost - asg.total_cost) > kObjectiveTolerance * std::max(1.0, cost))
    out.push_back("stored total cost differs from recomputed value");
  if (!within_budget(cost, inst.budget)) out.push_back("total cost exceeds budget");
  return out;
}

}  // namespace persmed

#endif  // PERSMED_CORE_HPP
