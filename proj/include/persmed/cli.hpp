#ifndef PERSMED_CLI_HPP
#define PERSMED_CLI_HPP

// Command-line front end. Exit codes: 0 success, 1 configuration error,
// 2 infeasible instance or solver failure, 3 I/O error.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "persmed/experiments.hpp"
#include "persmed/io.hpp"

#ifndef PERSMED_VERSION
#define PERSMED_VERSION "0.0.0"
#endif

namespace persmed {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitSolver = 2, kExitIo = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::optional<std::string> scenario_file;
  std::uint64_t root_seed = 0;
  std::size_t repetitions = 1000;
  SolverKind solver = SolverKind::DynamicProgram;
  std::string output_dir = ".";
  double f = 0.075;
  std::vector<double> grid;
  unsigned threads = 1;
  double cost_resolution = 1e-4;
  SensitivityAxis axis = SensitivityAxis::PatientCount;
  CsrSampling sampling = CsrSampling::RankPreserving;
};

/// Parses "lo:hi:step" into lo, lo+step, ... <= hi, or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("--grid: '" + s + "' is not a number");
    }
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("--grid: expected lo:hi:step");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || hi < lo) throw ConfigError("--grid: need step > 0 and hi >= lo");
    const auto count = static_cast<long long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (long long k = 0; k < count; ++k) {
      // round away accumulated drift so 0.07 prints as 0.07
      out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  if (out.empty()) throw ConfigError("--grid: no values");
  for (std::size_t k = 1; k < out.size(); ++k)
    if (!(out[k] > out[k - 1])) throw ConfigError("--grid: values must be strictly increasing");
  return out;
}

inline std::string_view to_string(CsrSampling s) {
  return s == CsrSampling::Independent ? "independent" : "rank-preserving";
}

/// The result-affecting part of a configuration, recorded in output headers.
/// Thread count and output directory are deliberately absent: they never
/// change the bytes written.
inline nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["command"] = c.command;
  j["seed"] = c.root_seed;
  j["solver"] = std::string(to_string(c.solver));
  j["cost_resolution"] = c.cost_resolution;
  j["csr_sampling"] = std::string(to_string(c.sampling));
  if (c.command != "solve" && c.command != "validate") j["repetitions"] = c.repetitions;
  if (c.command == "q1" || c.command == "q3") j["grid"] = c.grid;
  if (c.command != "q1") j["f"] = c.f;
  if (c.command == "q3") j["axis"] = std::string(to_string(c.axis));
  if (c.scenario_file) j["scenario"] = *c.scenario_file;
  return j;
}

inline std::vector<std::string> output_header(const RunConfig& c) {
  return {std::string("persmed ") + PERSMED_VERSION, "config: " + config_json(c).dump(),
          "root_seed: " + std::to_string(c.root_seed)};
}

namespace detail {

inline std::filesystem::path ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir + "'");
  return dir;
}

inline SweepSpec sweep_from(const RunConfig& c) {
  SweepSpec s;
  s.repetitions = c.repetitions;
  s.root_seed = c.root_seed;
  s.solver = c.solver;
  s.grid = c.grid;
  s.f = c.f;
  s.cost_resolution = c.cost_resolution;
  s.threads = c.threads;
  s.sampling = c.sampling;
  return s;
}

inline std::string fit_csv(const RunConfig& c, const FitResult& fit,
                           const std::vector<std::string>& names) {
  CsvBuilder csv(output_header(c));
  csv.columns({"coef_name", "value"});
  for (std::size_t k = 0; k < fit.coefficients.size() && k < names.size(); ++k)
    csv.row(names[k], fit.coefficients[k]);
  csv.row("r_squared", fit.r_squared);
  return csv.str();
}

inline int run_solve(const RunConfig& c, std::ostream& out) {
  const auto scenario = load_scenario(c.scenario_file.value_or(kBuiltinBcScenario));
  const auto inst = build_instance(scenario, c.root_seed, c.sampling);
  // a budget shortfall alone is left to the solver, which reports it as infeasible
  auto problems = validate_instance(inst);
  const bool budget_only = problems.size() == 1 && problems[0].find("cheapest cover") != std::string::npos;
  if (!problems.empty() && !budget_only) throw ValidationError(problems);
  const auto report = solve(inst, c.solver, c.cost_resolution);
  const double rho = personalization_level(inst, report.assignment);

  nlohmann::json doc;
  doc["meta"] = {{"tool", std::string("persmed ") + PERSMED_VERSION},
                 {"config", config_json(c)},
                 {"root_seed", c.root_seed}};
  doc["solver"] = std::string(to_string(report.kind));
  doc["chosen"] = report.assignment.chosen;
  doc["objective"] = report.assignment.objective;
  doc["total_cost"] = report.assignment.total_cost;
  doc["budget"] = inst.budget;
  doc["rho"] = rho;
  doc["nodes_or_states"] = report.nodes_or_states;
  if (report.lp_bound) doc["lp_bound"] = *report.lp_bound;
  doc["instance"] = instance_to_json(inst, scenario.illnesses, scenario.f);

  const auto dir = ensure_output_dir(c.output_dir);
  write_text(dir / "assignment.json", doc.dump(2) + "\n");
  out << "patients " << inst.patient_count() << ", objective " << fmt_num(report.assignment.objective)
      << ", cost " << fmt_num(report.assignment.total_cost) << " / " << fmt_num(inst.budget) << ", rho "
      << fmt_num(rho) << "\n";
  return kExitOk;
}

inline int run_validate(const RunConfig& c, std::ostream& out) {
  const auto scenario = load_scenario(c.scenario_file.value_or(kBuiltinBcScenario));
  const auto inst = build_instance(scenario, c.root_seed, c.sampling);
  const auto problems = validate_instance(inst);
  for (const auto& p : problems) out << p << "\n";
  if (!problems.empty()) return kExitConfig;
  out << "ok: " << inst.patient_count() << " patients, " << inst.treatment_count() << " treatments\n";
  return kExitOk;
}

inline int run_q1_cmd(const RunConfig& c, std::ostream& out) {
  const auto result = run_q1(sweep_from(c));
  const auto dir = ensure_output_dir(c.output_dir);

  CsvBuilder reps(output_header(c));
  reps.columns({"f", "repetition", "rho", "objective", "total_cost"});
  for (const auto& r : result.repetitions) reps.row(r.x, r.repetition, r.rho, r.objective, r.total_cost);
  write_text(dir / "q1_repetitions.csv", reps.str());

  CsvBuilder agg(output_header(c));
  agg.columns({"f", "mean_rho", "std_rho"});
  for (const auto& p : result.points) agg.row(p.x, p.mean_rho, p.std_rho);
  write_text(dir / "q1_aggregate.csv", agg.str());

  write_text(dir / "q1_fit.csv", fit_csv(c, result.fit, {"intercept", "slope"}));
  if (!result.fit.coefficients.empty())
    out << "rho = " << fmt_num(result.fit.coefficients[1]) << " f + " << fmt_num(result.fit.coefficients[0])
        << " (R^2 " << fmt_num(result.fit.r_squared) << ")\n";
  return kExitOk;
}

inline int run_q2_cmd(const RunConfig& c, std::ostream& out) {
  const auto result = run_q2(c.repetitions, c.f, c.root_seed, c.threads, c.solver, c.cost_resolution);
  const auto dir = ensure_output_dir(c.output_dir);

  CsvBuilder heat(output_header(c));
  heat.columns({"delta_oeb_bin", "delta_csr_bin", "normalized_count"});
  const double w = result.heatmap.bin_width;
  for (const auto& [key, v] : result.heatmap.cells)
    heat.row(static_cast<double>(key.first) * w, static_cast<double>(key.second) * w, v);
  write_text(dir / "heatmap.csv", heat.str());

  write_text(dir / "q2_fit.csv",
             fit_csv(c, result.fit, {kSurfaceCoefNames.begin(), kSurfaceCoefNames.end()}));
  out << result.personalized_selections << " personalized selections out of " << result.total_patients
      << " patients; surface fit R^2 " << fmt_num(result.fit.r_squared) << "\n";
  return kExitOk;
}

inline int run_q3_cmd(const RunConfig& c, std::ostream& out) {
  const auto result = run_q3(sweep_from(c), c.axis);
  const auto dir = ensure_output_dir(c.output_dir);
  CsvBuilder csv(output_header(c));
  csv.columns({"axis", "x", "mean_rho", "std_rho"});
  for (const auto& p : result.points) csv.row(to_string(c.axis), p.x, p.mean_rho, p.std_rho);
  write_text(dir / ("q3_" + std::string(to_string(c.axis)) + ".csv"), csv.str());
  out << result.points.size() << " grid points written\n";
  return kExitOk;
}

inline std::string default_grid(const RunConfig& c) {
  if (c.command == "q1") return "0:0.25:0.01";
  switch (c.axis) {
    case SensitivityAxis::PatientCount: return "20:200:20";
    case SensitivityAxis::AvgDeltaOeb: return "0.01:0.25:0.01";
    case SensitivityAxis::AvgDeltaCsr: return "0.01:0.2:0.01";
  }
  return "";
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Budget-constrained personalized treatment allocation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", PERSMED_VERSION);

  RunConfig cfg;
  std::string solver_name = "dp";
  std::string grid_text;
  std::string axis_name = "n";
  std::string sampling_name = "rank-preserving";
  std::string scenario;
  app.add_option("--seed", cfg.root_seed, "Root random seed");
  app.add_option("--repetitions", cfg.repetitions, "Monte-Carlo repetitions per grid value");
  app.add_option("--grid", grid_text, "Swept values, lo:hi:step or a comma list");
  app.add_option("--f", cfg.f, "Overhead budget fraction");
  app.add_option("--solver", solver_name, "exhaustive | dp | bnb");
  app.add_option("--cost-resolution", cfg.cost_resolution, "Cost rounding step");
  app.add_option("--out", cfg.output_dir, "Output directory");
  app.add_option("--threads", cfg.threads, "Worker threads, 0 = all cores");
  app.add_option("--scenario", scenario, "Scenario JSON file or 'bc-table1'");
  app.add_option("--axis", axis_name, "q3 axis: n | oeb | csr");
  app.add_option("--csr-sampling", sampling_name, "rank-preserving | independent");

  app.add_subcommand("solve", "Solve one scenario instance and write assignment.json");
  app.add_subcommand("validate", "Check a scenario instance against the model invariants");
  app.add_subcommand("q1", "Overhead fraction sweep on the bladder-cancer catalog");
  app.add_subcommand("q2", "Selection heatmap over abstract catalogs");
  app.add_subcommand("q3", "Sensitivity sweep over patient count, average dOEB or average dCSR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    cfg.command = app.get_subcommands().front()->get_name();
    if (!scenario.empty()) cfg.scenario_file = scenario;
    auto solver = parse_solver_kind(solver_name);
    if (!solver) throw ConfigError("--solver: unknown solver '" + solver_name + "'");
    cfg.solver = *solver;
    auto axis = parse_axis(axis_name);
    if (!axis) throw ConfigError("--axis: unknown axis '" + axis_name + "'");
    cfg.axis = *axis;
    if (sampling_name == "independent") {
      cfg.sampling = CsrSampling::Independent;
    } else if (sampling_name != "rank-preserving") {
      throw ConfigError("--csr-sampling: unknown mode '" + sampling_name + "'");
    }
    if (cfg.repetitions < 1) throw ConfigError("--repetitions: must be at least 1");
    if (!(cfg.f >= 0.0)) throw ConfigError("--f: must be >= 0");
    if (!(cfg.cost_resolution > 0.0)) throw ConfigError("--cost-resolution: must be > 0");
    if (cfg.command == "q1" || cfg.command == "q3")
      cfg.grid = parse_grid(grid_text.empty() ? detail::default_grid(cfg) : grid_text);

    auto resolved = config_json(cfg);
    resolved["threads"] = cfg.threads;
    resolved["out"] = cfg.output_dir;
    err << "persmed " << PERSMED_VERSION << " config " << resolved.dump() << "\n";

    if (cfg.command == "solve") return detail::run_solve(cfg, out);
    if (cfg.command == "validate") return detail::run_validate(cfg, out);
    if (cfg.command == "q1") return detail::run_q1_cmd(cfg, out);
    if (cfg.command == "q2") return detail::run_q2_cmd(cfg, out);
    if (cfg.command == "q3") return detail::run_q3_cmd(cfg, out);
    throw ConfigError("unknown command '" + cfg.command + "'");
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const SolveError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    // ConfigError, ParseError, ValidationError, invalid_argument from the library
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace persmed

#endif  // PERSMED_CLI_HPP
