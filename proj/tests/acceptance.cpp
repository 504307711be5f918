// Acceptance suite: one PASS/FAIL line per criterion, with the measured values
// behind each verdict on the indented lines above it. Exit status is the
// number of failed criteria (capped at 1).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "persmed/cli.hpp"
#include "support.hpp"

namespace {

using namespace persmed;
using Clock = std::chrono::steady_clock;

struct Verdict {
  std::vector<std::string> details;
  bool pass = true;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok   " : "MISS ") + what);
    pass = pass && ok;
  }
};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Verdict oracle_equivalence() {
  Verdict v;
  std::mt19937_64 rng(500);
  int mismatches = 0, infeasible = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = testing::random_instance(rng);
    const auto ref = solve(inst, SolverKind::Exhaustive);
    for (auto kind : {SolverKind::DynamicProgram, SolverKind::BranchAndBound}) {
      const auto r = solve(inst, kind);
      if (std::abs(r.assignment.objective - ref.assignment.objective) > 1e-9) ++mismatches;
      if (!validate_assignment(inst, r.assignment).empty()) ++infeasible;
    }
    if (!validate_assignment(inst, ref.assignment).empty()) ++infeasible;
  }
  const double secs = seconds_since(t0);
  v.check(mismatches == 0, "objective mismatches vs exhaustive: " + std::to_string(mismatches));
  v.check(infeasible == 0, "infeasible assignments: " + std::to_string(infeasible));
  v.check(secs < 10.0, "runtime " + num(secs) + " s < 10 s");
  return v;
}

Verdict rho_edges() {
  Verdict v;
  ScenarioInstance inst;
  inst.treatments = bc_table1_catalog();
  for (int k = 0; k < 5; ++k) inst.patients.push_back(Patient{kNonInvasive});
  for (int k = 0; k < 2; ++k) inst.patients.push_back(Patient{kInvasive});
  inst.realized_csr = CsrMatrix(inst.patients.size(), inst.treatments.size());
  inst.budget = 100.0;
  std::vector<std::size_t> global, top;
  for (const auto& p : inst.patients) {
    global.push_back(p.illness == kNonInvasive ? 0 : 3);
    top.push_back(p.illness == kNonInvasive ? 2 : 4);
  }
  const double lo = personalization_level(inst, make_assignment(inst, global));
  const double hi = personalization_level(inst, make_assignment(inst, top));
  v.check(lo == 0.0, "all-global rho = " + num(lo) + " (exactly 0)");
  v.check(hi == 1.0, "all-most-personalized rho = " + num(hi) + " (exactly 1)");
  return v;
}

// Interior grid points k with std[k-1] < std[k] >= std[k+1].
std::vector<double> local_maxima(const std::vector<AggregatePoint>& pts) {
  std::vector<double> out;
  for (std::size_t k = 1; k + 1 < pts.size(); ++k)
    if (pts[k].std_rho > pts[k - 1].std_rho && pts[k].std_rho >= pts[k + 1].std_rho) out.push_back(pts[k].x);
  return out;
}

Verdict q1_reproduction() {
  Verdict v;
  SweepSpec spec;
  spec.repetitions = 1000;
  spec.root_seed = 2024;
  spec.grid = parse_grid("0:0.25:0.01");
  const auto t0 = Clock::now();
  const auto res = run_q1(spec);
  const double secs = seconds_since(t0);

  const double b0 = res.fit.coefficients[0], b1 = res.fit.coefficients[1];
  v.check(b1 >= 0.38 && b1 <= 0.68, "slope " + num(b1) + " in [0.38, 0.68]");
  v.check(b0 >= -0.10 && b0 <= 0.04, "intercept " + num(b0) + " in [-0.10, 0.04]");
  v.check(res.fit.r_squared >= 0.80, "R^2 " + num(res.fit.r_squared) + " >= 0.80");

  bool monotone = true;
  for (std::size_t g = 1; g < res.points.size(); ++g)
    monotone = monotone && res.points[g].mean_rho >= res.points[g - 1].mean_rho - 1e-12;
  v.check(monotone, "mean rho non-decreasing in f");

  bool all_one = true;
  for (const auto& r : res.repetitions)
    if (r.x == 0.25) all_one = all_one && r.rho == 1.0;
  v.check(all_one, "rho = 1 for every repetition at f = 0.25");

  const auto peaks = local_maxima(res.points);
  std::string listed;
  for (double x : peaks) listed += (listed.empty() ? "" : ", ") + num(x);
  auto peak_in = [&](double lo, double hi) {
    for (double x : peaks)
      if (x >= lo - 1e-12 && x <= hi + 1e-12) return true;
    return false;
  };
  v.check(peak_in(0.05, 0.10), "std local maximum in [0.05, 0.10] (maxima at: " + listed + ")");
  v.check(peak_in(0.14, 0.19), "std local maximum in [0.14, 0.19] (maxima at: " + listed + ")");
  std::string curve;
  for (const auto& p : res.points) curve += " " + num(p.std_rho);
  v.details.push_back("     std curve:" + curve);
  v.check(secs < 300.0, "runtime " + num(secs) + " s < 300 s");
  return v;
}

Verdict q2_transition() {
  Verdict v;
  const auto res = run_q2(1000, 0.075, 2024);
  double low = 0.0, band = 0.0;
  const auto edge = detail::bin_index(0.07, res.heatmap.bin_width);
  for (const auto& [key, mass] : res.heatmap.cells) {
    if (key.first <= edge) low += mass;
    else if (key.first == edge + 1) band += mass;
  }
  const double ratio = band > 0.0 ? low / band : std::numeric_limits<double>::infinity();
  v.check(ratio >= 2.0, "mass dOEB<=0.07: " + num(low) + ", (0.07,0.08]: " + num(band) + ", ratio " + num(ratio) +
                            " >= 2");
  const auto& c = res.fit.coefficients;
  if (c.size() != 5) {
    v.check(false, "surface fit available (" + std::to_string(res.fit_points.size()) + " cells)");
    return v;
  }
  v.check(res.fit.r_squared >= 0.6, "surface fit R^2 " + num(res.fit.r_squared) + " >= 0.6 on " +
                                        std::to_string(res.fit_points.size()) + " cells");
  v.check(c[0] > 0.0, "const " + num(c[0]) + " > 0");
  v.check(c[1] < 0.0, "d_oeb " + num(c[1]) + " < 0");
  v.check(c[3] > 0.0, "d_csr " + num(c[3]) + " > 0");
  v.details.push_back("     d_oeb_sq " + num(c[2]) + ", d_oeb_x_d_csr " + num(c[4]) + " (unconstrained)");
  return v;
}

std::vector<double> column(const std::vector<AggregatePoint>& pts, double AggregatePoint::*field) {
  std::vector<double> out;
  for (const auto& p : pts) out.push_back(p.*field);
  return out;
}

Verdict q3_sensitivity() {
  Verdict v;
  SweepSpec spec;
  spec.root_seed = 2024;

  spec.repetitions = 1000;
  spec.grid = {20, 60, 100, 140, 180};
  const auto n = run_q3(spec, SensitivityAxis::PatientCount).points;
  bool weak = true;
  std::string curve;
  for (std::size_t g = 0; g < n.size(); ++g) {
    if (g > 0) weak = weak && n[g].mean_rho >= n[g - 1].mean_rho - 1e-12;
    curve += " " + num(n[g].mean_rho);
  }
  v.check(weak, "(a) mean rho weakly increasing in n:" + curve);

  spec.repetitions = 300;
  spec.grid = parse_grid("0.01:0.25:0.01");
  const auto oeb = run_q3(spec, SensitivityAxis::AvgDeltaOeb).points;
  bool flat = true, strict = true;
  std::vector<double> xs, ys;
  for (std::size_t g = 0; g < oeb.size(); ++g) {
    // the costliest option fits the per-patient overhead
    const bool covered = oeb_range_for_average(oeb[g].x).hi <= spec.f * kAbstractGlobalOeb + 1e-12;
    if (covered) {
      flat = flat && oeb[g].mean_rho == 1.0;
    } else {
      if (!xs.empty()) strict = strict && oeb[g].mean_rho < ys.back();
      xs.push_back(oeb[g].x);
      ys.push_back(oeb[g].mean_rho);
    }
  }
  const double rho_oeb = spearman(xs, ys);
  v.check(flat, "(b) mean rho = 1 where the full uplift fits the overhead");
  v.check(strict, "(b) strictly decreasing beyond (" + std::to_string(xs.size()) + " points)");
  v.check(rho_oeb <= -0.9, "(b) Spearman " + num(rho_oeb) + " <= -0.9");

  spec.grid = parse_grid("0.01:0.2:0.01");
  const auto csr = run_q3(spec, SensitivityAxis::AvgDeltaCsr).points;
  const auto x = column(csr, &AggregatePoint::x);
  const double s_mean = spearman(x, column(csr, &AggregatePoint::mean_rho));
  const double s_std = spearman(x, column(csr, &AggregatePoint::std_rho));
  v.check(s_mean >= 0.8, "(c) Spearman(x, mean rho) " + num(s_mean) + " >= 0.8");
  v.check(s_std >= 0.8, "(c) Spearman(x, std rho) " + num(s_std) + " >= 0.8");
  v.details.push_back("     std rho: " + num(csr.front().std_rho) + " at x=" + num(csr.front().x) + " .. " +
                      num(csr.back().std_rho) + " at x=" + num(csr.back().x));
  return v;
}

Verdict fit_exactness() {
  Verdict v;
  const double target[] = {0.32, -1.95, -0.09, 4.07, 0.56};
  std::vector<SurfacePoint> pts;
  for (int a = 0; a <= 7; ++a) {
    for (int c = 0; c <= 20; ++c) {
      const double o = 0.01 * a, s = 0.01 * c;
      pts.push_back({o, s, target[0] + target[1] * o + target[2] * o * o + target[3] * s + target[4] * o * s});
    }
  }
  const auto surf = poly_surface_fit(pts);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) worst = std::max(worst, std::abs(surf.coefficients[k] - target[k]));
  v.check(worst <= 1e-6, "surface coefficients max error " + num(worst) + " <= 1e-6");

  std::vector<double> xs, ys;
  for (int k = 0; k <= 25; ++k) {
    xs.push_back(0.01 * k);
    ys.push_back(0.53 * xs.back() - 0.03);
  }
  const auto line = linear_fit(xs, ys);
  const double err = std::max(std::abs(line.coefficients[1] - 0.53), std::abs(line.coefficients[0] + 0.03));
  v.check(err <= 1e-6, "linear coefficients max error " + num(err) + " <= 1e-6");
  return v;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict cli_determinism() {
  Verdict v;
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "persmed_acceptance";
  fs::remove_all(root);
  struct Run {
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::vector<Run> runs = {
      {{"q1", "--seed", "42", "--repetitions", "100", "--grid", "0:0.25:0.01"},
       {"q1_repetitions.csv", "q1_aggregate.csv", "q1_fit.csv"}},
      {{"q2", "--seed", "42", "--repetitions", "300", "--f", "0.075"}, {"heatmap.csv", "q2_fit.csv"}},
      {{"q3", "--seed", "42", "--repetitions", "40", "--axis", "csr"}, {"q3_csr.csv"}},
  };
  std::ostringstream sink;
  for (const auto& run : runs) {
    std::string outputs[2];
    bool ok = true;
    for (int t = 0; t < 2; ++t) {
      const auto dir = root / (run.args[0] + (t == 0 ? "_t1" : "_t8"));
      auto args = run.args;
      args.insert(args.end(), {"--threads", t == 0 ? "1" : "8", "--out", dir.string()});
      std::vector<const char*> argv = {"persmed"};
      for (const auto& a : args) argv.push_back(a.c_str());
      ok = ok && run_cli(static_cast<int>(argv.size()), argv.data(), sink, sink) == kExitOk;
      for (const auto& f : run.files) outputs[t] += slurp(dir / f);
    }
    v.check(ok && !outputs[0].empty() && outputs[0] == outputs[1],
            run.args[0] + ": " + std::to_string(outputs[0].size()) + " bytes identical at --threads 1 and 8");
  }
  fs::remove_all(root);
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "solver oracle equivalence", oracle_equivalence},
      {2, "rho edge cases", rho_edges},
      {3, "Q1 reproduction", q1_reproduction},
      {4, "Q2 phase transition", q2_transition},
      {5, "Q3 sensitivity properties", q3_sensitivity},
      {6, "fit machinery exactness", fit_exactness},
      {7, "determinism across thread counts", cli_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    for (const auto& d : v.details) std::printf("    %s\n", d.c_str());
    std::printf("%s criterion %d: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, seconds_since(t0));
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
