#ifndef PERSMED_IO_HPP
#define PERSMED_IO_HPP

// Scenario files and result writers.
//
// Scenario file (JSON):
//   {
//     "illnesses":  ["non-invasive", "invasive"],
//     "treatments": [{"illness": "non-invasive" | 0, "label": "...",
//                     "csr_mean": 0.64, "csr_std": 0.08, "oeb": 1.0}, ...],
//     "population": {"n1": 100, "n2": 8} | {"counts": [...]} | "sample",
//     "f": 0.075,
//     "instance":   {"patients": [0, 0, 1], "realized_csr": [[...], ...],
//                    "budget": 3.5}                       (optional)
//   }
// With "instance" present the file describes one fixed problem; otherwise a
// problem is realized from the catalog, population and f.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "persmed/core.hpp"
#include "persmed/scenario.hpp"

namespace persmed {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string s = "scenario is invalid:";
    for (const auto& p : ps) s += "\n  - " + p;
    return s;
  }
  std::vector<std::string> problems_;
};

struct FixedInstance {
  std::vector<std::size_t> patients;  // illness index per patient
  std::vector<std::vector<double>> realized_csr;
  double budget = 0.0;
};

struct ScenarioFile {
  std::vector<std::string> illnesses;
  std::vector<TreatmentConfig> treatments;
  std::optional<std::vector<std::size_t>> population;  // nullopt: sample n1, n2
  double f = 0.075;
  std::optional<FixedInstance> instance;
};

inline constexpr const char* kBuiltinBcScenario = "bc-table1";

inline ScenarioFile bc_table1_scenario() {
  return ScenarioFile{bc_illness_names(), bc_table1_catalog(), std::nullopt, 0.075, std::nullopt};
}

namespace detail {

using nlohmann::json;

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

inline std::vector<std::string> validate_scenario(const ScenarioFile& s) {
  std::vector<std::string> out;
  if (s.illnesses.empty()) out.push_back("illnesses: list is empty");
  for (std::size_t j = 0; j < s.treatments.size(); ++j) {
    const auto& t = s.treatments[j];
    const std::string where = "treatments[" + std::to_string(j) + "] (" + t.label + ")";
    if (t.illness.value >= s.illnesses.size())
      out.push_back(where + ": illness index " + std::to_string(t.illness.value) + " is unknown");
    if (!(t.csr_mean >= 0.0 && t.csr_mean <= 1.0)) out.push_back(where + ": csr_mean must be in [0,1]");
    if (!(t.csr_std >= 0.0)) out.push_back(where + ": csr_std must be >= 0");
    if (!(t.oeb > 0.0)) out.push_back(where + ": oeb must be > 0");
  }
  if (!(s.f >= 0.0)) out.push_back("f: must be >= 0");
  if (s.population) {
    if (s.population->size() > s.illnesses.size())
      out.push_back("population: more counts than illnesses");
    for (std::size_t k = 0; k < s.population->size() && k < s.illnesses.size(); ++k)
      if ((*s.population)[k] > 0 && !global_treatment(s.treatments, IllnessId{k}))
        out.push_back("population: illness '" + s.illnesses[k] + "' has patients but no treatment");
  } else if (!s.instance && s.illnesses.size() < 2) {
    out.push_back("population: sampling needs two illnesses (n1, n2)");
  }
  if (s.instance) {
    const auto& fi = *s.instance;
    if (fi.realized_csr.size() != fi.patients.size())
      out.push_back("instance.realized_csr: expected one row per patient");
    for (std::size_t i = 0; i < fi.patients.size(); ++i) {
      if (fi.patients[i] >= s.illnesses.size())
        out.push_back("instance.patients[" + std::to_string(i) + "]: illness index is unknown");
      if (i < fi.realized_csr.size() && fi.realized_csr[i].size() != s.treatments.size())
        out.push_back("instance.realized_csr[" + std::to_string(i) + "]: expected one value per treatment");
    }
  }
  return out;
}

}  // namespace detail

/// Parses scenario JSON text. `origin` names the source in error messages.
inline ScenarioFile parse_scenario(const std::string& text, const std::string& origin = "<scenario>") {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(origin + ": top level must be an object");

  ScenarioFile s;
  s.illnesses = detail::field<std::vector<std::string>>(doc, "illnesses", origin);
  auto illness_index = [&](const json& v, const std::string& where) -> std::size_t {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_string()) {
      const auto name = v.get<std::string>();
      for (std::size_t k = 0; k < s.illnesses.size(); ++k)
        if (s.illnesses[k] == name) return k;
      throw ParseError(where + ": unknown illness '" + name + "'");
    }
    throw ParseError(where + ": illness must be a name or an index");
  };

  if (!doc.contains("treatments") || !doc["treatments"].is_array())
    throw ParseError(origin + ": missing array 'treatments'");
  const auto& ts = doc["treatments"];
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const std::string where = origin + ": treatments[" + std::to_string(j) + "]";
    const auto& t = ts[j];
    if (!t.is_object()) throw ParseError(where + ": must be an object");
    if (!t.contains("illness")) throw ParseError(where + ": missing field 'illness'");
    TreatmentConfig tc;
    tc.illness = IllnessId{illness_index(t["illness"], where)};
    tc.label = t.value("label", "treatment-" + std::to_string(j));
    tc.csr_mean = detail::field<double>(t, "csr_mean", where);
    tc.csr_std = t.contains("csr_std") ? detail::field<double>(t, "csr_std", where) : 0.0;
    tc.oeb = detail::field<double>(t, "oeb", where);
    s.treatments.push_back(std::move(tc));
  }

  if (doc.contains("population")) {
    const auto& p = doc["population"];
    const std::string where = origin + ": population";
    if (p.is_string()) {
      if (p.get<std::string>() != "sample") throw ParseError(where + ": expected \"sample\" or an object");
    } else if (p.is_object()) {
      if (p.contains("counts")) {
        s.population = detail::field<std::vector<std::size_t>>(p, "counts", where);
      } else {
        s.population = std::vector<std::size_t>{detail::field<std::size_t>(p, "n1", where),
                                                detail::field<std::size_t>(p, "n2", where)};
      }
    } else {
      throw ParseError(where + ": expected \"sample\" or an object");
    }
  }
  if (doc.contains("f")) s.f = detail::field<double>(doc, "f", origin);

  if (doc.contains("instance")) {
    const auto& in = doc["instance"];
    const std::string where = origin + ": instance";
    FixedInstance fi;
    fi.patients = detail::field<std::vector<std::size_t>>(in, "patients", where);
    fi.realized_csr = detail::field<std::vector<std::vector<double>>>(in, "realized_csr", where);
    fi.budget = detail::field<double>(in, "budget", where);
    s.instance = std::move(fi);
  }

  if (auto problems = detail::validate_scenario(s); !problems.empty()) {
    for (auto& p : problems) p = origin + ": " + p;
    throw ValidationError(std::move(problems));
  }
  return s;
}

/// Loads a scenario file, or the built-in catalog for the keyword "bc-table1".
inline ScenarioFile load_scenario(const std::string& path) {
  if (path == kBuiltinBcScenario) return bc_table1_scenario();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

/// The instance a scenario describes. Fixed instances are returned verbatim;
/// otherwise the population is taken from the file or sampled from `seed`.
inline ScenarioInstance build_instance(const ScenarioFile& s, std::uint64_t seed,
                                       CsrSampling sampling = CsrSampling::RankPreserving) {
  if (s.instance) {
    const auto& fi = *s.instance;
    ScenarioInstance inst;
    inst.treatments = s.treatments;
    for (auto ill : fi.patients) inst.patients.push_back(Patient{IllnessId{ill}});
    inst.realized_csr = CsrMatrix(fi.patients.size(), s.treatments.size());
    for (std::size_t i = 0; i < fi.patients.size(); ++i)
      for (std::size_t j = 0; j < s.treatments.size(); ++j) inst.realized_csr(i, j) = fi.realized_csr[i][j];
    inst.budget = fi.budget;
    return inst;
  }
  std::vector<std::size_t> counts;
  if (s.population) {
    counts = *s.population;
  } else {
    const auto draw = sample_population(mix64(seed, 1));
    counts = {draw.n1, draw.n2};
  }
  return realize_instance(s.treatments, counts, s.f, mix64(seed, 2), sampling);
}

/// Serializes an instance as a fixed-instance scenario document.
inline nlohmann::json instance_to_json(const ScenarioInstance& inst,
                                       const std::vector<std::string>& illnesses, double f) {
  using nlohmann::json;
  json doc;
  doc["illnesses"] = illnesses;
  doc["treatments"] = json::array();
  for (const auto& t : inst.treatments) {
    doc["treatments"].push_back({{"illness", t.illness.value},
                                 {"label", t.label},
                                 {"csr_mean", t.csr_mean},
                                 {"csr_std", t.csr_std},
                                 {"oeb", t.oeb}});
  }
  doc["f"] = f;
  json patients = json::array();
  json rows = json::array();
  for (std::size_t i = 0; i < inst.patients.size(); ++i) {
    patients.push_back(inst.patients[i].illness.value);
    auto r = inst.realized_csr.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  doc["instance"] = {{"patients", patients}, {"realized_csr", rows}, {"budget", inst.budget}};
  return doc;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// CSV -------------------------------------------------------------------------

/// Locale-independent shortest-ish rendering used for every numeric CSV cell.
inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Builds a CSV file body: "# " comment header lines, column row, data rows.
class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header_lines) {
    for (const auto& line : header_lines) text_ += "# " + line + "\n";
  }

  CsvBuilder& columns(std::initializer_list<std::string_view> names) { return row_of(names); }

  template <typename... Cells>
  CsvBuilder& row(const Cells&... cells) {
    bool first = true;
    ((text_ += (first ? "" : ","), text_ += cell(cells), first = false), ...);
    text_ += "\n";
    return *this;
  }

  const std::string& str() const { return text_; }

 private:
  CsvBuilder& row_of(std::initializer_list<std::string_view> names) {
    bool first = true;
    for (auto n : names) {
      if (!first) text_ += ",";
      text_ += n;
      first = false;
    }
    text_ += "\n";
    return *this;
  }

  static std::string cell(double v) { return fmt_num(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(std::string_view v) { return std::string(v); }
  static std::string cell(const char* v) { return v; }

  std::string text_;
};

}  // namespace persmed

#endif  // PERSMED_IO_HPP
