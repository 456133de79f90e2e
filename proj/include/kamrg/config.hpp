#pragma once

// Run configuration shared by the command-line tool and the acceptance
// suite, plus atomic file output.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kamrg/cutoff.hpp"
#include "kamrg/lattice.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/rg_flow.hpp"

namespace kamrg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  int d = 2;
  nlohmann::json omega = "golden";      // "golden" or explicit list
  nlohmann::json potential = "cos_sum"; // "cos_sum", inline document, or file path
  double lambda = 1e-3;
  int box_Q_kernel = 2;
  int box_Q_solver = 8;
  int n_max = 3;
  double alpha = 0.2;
  double beta = 0.25;
  std::string chi = "quintic";
  std::string stepper = "rk4";
  double h = 0.05;
  std::optional<double> t_end;          // empty: auto
  int kappa_count = 0;                  // 0: no kappa family
  std::uint64_t seed = 1;
  std::string output = "out";
  int lindstedt_order = 8;
  int grid = 0;                         // 0: 4Q + 2
  double verify_tol = 1e-4;             // per-mode residual threshold, relative to lambda
  std::vector<double> lambda_sweep{1e-4, 2e-4, 4e-4, 8e-4};

  FrequencyVector frequency() const {
    if (omega.is_string()) {
      if (omega.get<std::string>() != "golden") throw ConfigError("omega must be \"golden\" or a list");
      if (d != 2) throw ConfigError("omega \"golden\" needs d = 2");
      return FrequencyVector::golden();
    }
    if (!omega.is_array()) throw ConfigError("omega must be \"golden\" or a list");
    std::vector<double> w;
    try {
      w = omega.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("omega must be a list of numbers");
    }
    if (int(w.size()) != d) throw ConfigError("omega has the wrong dimension");
    try {
      return FrequencyVector(w);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  AnalyticPotential load_potential() const {
    if (potential.is_object()) return AnalyticPotential::from_json(potential);
    if (!potential.is_string()) throw ConfigError("potential must be an object, \"cos_sum\", or a file path");
    const auto s = potential.get<std::string>();
    if (s == "cos_sum") return AnalyticPotential::cos_sum(d);
    return AnalyticPotential::from_file(s);
  }

  CutoffSchedule schedule() const {
    CutoffSchedule c;
    c.alpha = alpha;
    c.chi_kind = chi;
    c.t_end = t_end;
    return c;
  }

  StepperConfig stepper_config() const {
    StepperConfig s;
    s.method = stepper;
    s.h = h;
    return s;
  }

  TruncationBox kernel_box() const { return TruncationBox(d, box_Q_kernel); }
  TruncationBox solver_box() const { return TruncationBox(d, box_Q_solver); }

  /// Throws ConfigError on any violated invariant.
  void validate() const {
    if (d < 2 || d > 4) throw ConfigError("d must lie in [2, 4]");
    if (!(alpha > 0.0 && alpha < 0.25)) throw ConfigError("alpha must lie in (0, 1/4)");
    if (box_Q_kernel < 1) throw ConfigError("box_Q_kernel must be >= 1");
    if (box_Q_kernel > box_Q_solver) throw ConfigError("box_Q_kernel must not exceed box_Q_solver");
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (!(h > 0.0)) throw ConfigError("h must be positive");
    if (t_end && !(*t_end >= 0.0)) throw ConfigError("t_end must be \"auto\" or >= 0");
    if (kappa_count != 0 && (kappa_count < 5 || kappa_count % 2 == 0))
      throw ConfigError("kappa_grid.count must be 0 or an odd number >= 5");
    if (lindstedt_order < 1) throw ConfigError("lindstedt_order must be >= 1");
    if (grid != 0 && grid < 4 * box_Q_solver) throw ConfigError("grid must be 0 or >= 4 box_Q_solver");
    if (!(verify_tol > 0.0)) throw ConfigError("verify_tol must be positive");
    for (double l : lambda_sweep)
      if (!(l > 0.0)) throw ConfigError("lambda_sweep entries must be positive");
    try {
      schedule().validate();
      stepper_config().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    FrequencyVector w = frequency();
    if (min_abs_divisor(w, solver_box()) <= 0.0) throw ConfigError("omega is resonant inside the solver box");
    try {
      AnalyticPotential v = load_potential();
      if (v.dim() != d) throw ConfigError("potential dimension differs from d");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("potential: ") + e.what());
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["d"] = d;
    j["omega"] = omega;
    j["potential"] = potential;
    j["lambda"] = lambda;
    j["box_Q_kernel"] = box_Q_kernel;
    j["box_Q_solver"] = box_Q_solver;
    j["n_max"] = n_max;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["chi"] = chi;
    j["stepper"] = stepper;
    j["h"] = h;
    j["t_end"] = t_end ? nlohmann::json(*t_end) : nlohmann::json("auto");
    j["kappa_grid"] = {{"count", kappa_count}, {"range", "auto"}};
    j["seed"] = seed;
    j["output"] = output;
    j["lindstedt_order"] = lindstedt_order;
    j["grid"] = grid;
    j["verify_tol"] = verify_tol;
    j["lambda_sweep"] = lambda_sweep;
    return j;
  }

  /// Overlays the keys present in `j`; unknown keys are an error.
  void merge(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "d",     "omega", "potential", "lambda", "box_Q_kernel",    "box_Q_solver", "n_max",
        "alpha", "beta",  "chi",       "stepper", "h",              "t_end",        "kappa_grid",
        "seed",  "output", "lindstedt_order", "grid", "verify_tol", "lambda_sweep"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, _] : j.items())
      if (!known.count(k)) throw ConfigError("unknown config key: " + k);
    try {
      if (j.contains("d")) d = j["d"].get<int>();
      if (j.contains("omega")) omega = j["omega"];
      if (j.contains("potential")) potential = j["potential"];
      if (j.contains("lambda")) lambda = j["lambda"].get<double>();
      if (j.contains("box_Q_kernel")) box_Q_kernel = j["box_Q_kernel"].get<int>();
      if (j.contains("box_Q_solver")) box_Q_solver = j["box_Q_solver"].get<int>();
      if (j.contains("n_max")) n_max = j["n_max"].get<int>();
      if (j.contains("alpha")) alpha = j["alpha"].get<double>();
      if (j.contains("beta")) beta = j["beta"].get<double>();
      if (j.contains("chi")) chi = j["chi"].get<std::string>();
      if (j.contains("stepper")) stepper = j["stepper"].get<std::string>();
      if (j.contains("h")) h = j["h"].get<double>();
      if (j.contains("t_end")) {
        const auto& t = j["t_end"];
        if (t.is_string()) {
          if (t.get<std::string>() != "auto") throw ConfigError("t_end must be \"auto\" or a number");
          t_end.reset();
        } else {
          t_end = t.get<double>();
        }
      }
      if (j.contains("kappa_grid")) {
        const auto& k = j["kappa_grid"];
        if (k.contains("count")) kappa_count = k["count"].get<int>();
        if (k.contains("range") && k["range"] != "auto") throw ConfigError("kappa_grid.range must be \"auto\"");
      }
      if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
      if (j.contains("output")) output = j["output"].get<std::string>();
      if (j.contains("lindstedt_order")) lindstedt_order = j["lindstedt_order"].get<int>();
      if (j.contains("grid")) grid = j["grid"].get<int>();
      if (j.contains("verify_tol")) verify_tol = j["verify_tol"].get<double>();
      if (j.contains("lambda_sweep")) lambda_sweep = j["lambda_sweep"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config type error: ") + e.what());
    }
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    RunConfig c;
    c.merge(j);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Output

/// %.17g, the round-trip format used in every CSV.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes via a temporary file in the same directory, then renames.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_atomic(path, j.dump(2) + "\n");
}

}  // namespace kamrg
