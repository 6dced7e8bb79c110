// latctl — TOML-like config files and the run configuration they populate.
// SPDX-License-Identifier: MIT
//
// Grammar (a deliberately small TOML subset):
//   [section]            current section; keys below are "section.key"
//   key = value          value: number, boolean, bare/quoted string, [list]
//   # comment            to end of line; blank lines ignored
// Precedence: command-line flags > config file > built-in defaults; every
// value that differs from the default is recorded for the emitted metadata.
#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latctl/ctrl/mpc.hpp"
#include "latctl/env/env.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/e2c.hpp"
#include "latctl/model/train.hpp"

namespace latctl::io {

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool valid_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}
}  // namespace detail

// Flat key → raw value text map ("section.key" keys).  Typed accessors parse
// on demand and throw ValidationError naming the key on bad syntax.
struct ConfigMap {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }

  std::string get_string(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ValidationError("config: missing key '" + key + "'");
    std::string v = it->second;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
  }

  double get_number(const std::string& key) const {
    const std::string v = get_string(key);
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size())
      throw ValidationError("config: key '" + key + "' is not a number: '" + v + "'");
    return out;
  }

  long long get_integer(const std::string& key) const {
    const std::string v = get_string(key);
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size())
      throw ValidationError("config: key '" + key + "' is not an integer: '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ValidationError("config: key '" + key + "' is not a boolean: '" + v + "'");
  }

  std::vector<int> get_int_list(const std::string& key) const {
    const std::string v = get_string(key);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
      throw ValidationError("config: key '" + key + "' is not a [list]: '" + v + "'");
    std::vector<int> out;
    std::string inner = v.substr(1, v.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (item.empty()) throw ValidationError("config: key '" + key + "' has an empty list item");
      std::size_t used = 0;
      int n = 0;
      try {
        n = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size())
        throw ValidationError("config: key '" + key + "' has a non-integer item: '" + item + "'");
      out.push_back(n);
    }
    return out;
  }
};

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ValidationError("config line " + std::to_string(lineno) + ": unterminated [section]");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_key(section))
        throw ValidationError("config line " + std::to_string(lineno) + ": bad section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!detail::valid_key(key))
      throw ValidationError("config line " + std::to_string(lineno) + ": bad key name");
    if (value.empty())
      throw ValidationError("config line " + std::to_string(lineno) + ": empty value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values.count(full))
      throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key '" + full +
                            "'");
    cfg.values[full] = value;
  }
  return cfg;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---- run configuration -----------------------------------------------------

// One struct drives every subcommand: environment, model variant and widths,
// training hyperparameters, planner choice and horizons, output housekeeping.
struct RunConfig {
  EnvKind env = EnvKind::Planar;
  Variant variant = Variant::E2C;
  int n_z = 2;
  ArchSizes arch;
  TrainConfig train;
  std::uint64_t seed = 1;
  int data_n = 3000;            // dataset size for gen-data
  PlannerKind planner = PlannerKind::Ilqr;
  int horizon = 40;             // planning horizon T (number of states)
  int steps = 40;               // executed control steps
  bool receding = false;        // true: replan every step (MPC); false: one open-loop plan
  int eval_starts = 5;          // control runs aggregated by eval
  std::string out_dir = ".";
  bool quiet = false;
  // "key=value" for every setting that differs from the environment defaults,
  // in application order; embedded in emitted metadata.
  std::vector<std::string> overrides;
};

// Benchmark defaults for each environment (architecture, optimizer, horizons).
inline RunConfig default_run_config(EnvKind env) {
  RunConfig c;
  c.env = env;
  if (env == EnvKind::Pendulum) {
    c.n_z = 3;
    c.arch = pendulum_arch();
    c.train.learning_rate = 3e-4;
    c.train.epochs = 100;
    c.data_n = 15000;
    c.horizon = 10;
    c.steps = 80;
    c.receding = true;
    c.eval_starts = 30;
  } else if (env == EnvKind::Planar) {
    c.n_z = 2;
    c.arch = planar_arch();
    c.train.learning_rate = 1e-4;
    c.train.epochs = 200;
    c.data_n = 3000;
    c.horizon = 40;
    c.steps = 40;
    c.receding = false;
    c.eval_starts = 5;
  } else {
    throw ValidationError("default_run_config: no defaults for the latent test environment");
  }
  return c;
}

namespace detail {

template <typename T>
void list_to_string(std::string& out, const std::vector<T>& v) {
  out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  out += "]";
}

}  // namespace detail

// Applies `cfg` on top of `run` (which should hold the defaults), recording
// every change in run.overrides.  Unknown keys are rejected so typos fail
// loudly instead of silently training the wrong model.
inline void apply_config(RunConfig& run, const ConfigMap& cfg) {
  static const char* known[] = {
      "run.env",          "run.seed",           "run.out_dir",
      "model.variant",    "model.n_z",          "model.encoder_hidden",
      "model.decoder_hidden", "model.transition_hidden",
      "train.lambda",     "train.slowness_weight", "train.learning_rate",
      "train.beta1",      "train.beta2",        "train.epsilon",
      "train.batch_size", "train.epochs",
      "data.n",
      "control.planner",  "control.horizon",    "control.steps",
      "control.receding",
      "eval.starts",
  };
  for (const auto& [key, value] : cfg.values) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError("config: unknown key '" + key + "'");
    (void)value;
  }

  auto note = [&run](const std::string& key, const std::string& value) {
    run.overrides.push_back(key + "=" + value);
  };

  // run.env must come first: switching environment re-baselines every default,
  // so other keys in the same file apply on top of the new environment.
  if (cfg.has("run.env")) {
    const EnvKind env = parse_env_kind(cfg.get_string("run.env"));
    if (env != run.env) {
      const RunConfig fresh = default_run_config(env);
      const std::uint64_t keep_seed = run.seed;
      const std::string keep_out = run.out_dir;
      const bool keep_quiet = run.quiet;
      run = fresh;
      run.seed = keep_seed;
      run.out_dir = keep_out;
      run.quiet = keep_quiet;
      note("run.env", env_kind_name(env));
    }
  }
  if (cfg.has("run.seed")) {
    run.seed = static_cast<std::uint64_t>(cfg.get_integer("run.seed"));
    note("run.seed", std::to_string(run.seed));
  }
  if (cfg.has("run.out_dir")) {
    run.out_dir = cfg.get_string("run.out_dir");
    note("run.out_dir", run.out_dir);
  }
  if (cfg.has("model.variant")) {
    run.variant = parse_variant(cfg.get_string("model.variant"));
    note("model.variant", variant_name(run.variant));
  }
  if (cfg.has("model.n_z")) {
    run.n_z = static_cast<int>(cfg.get_integer("model.n_z"));
    if (run.n_z < 1) throw ValidationError("config: model.n_z must be >= 1");
    note("model.n_z", std::to_string(run.n_z));
  }
  const struct {
    const char* key;
    std::vector<int>* dst;
  } arch_keys[] = {{"model.encoder_hidden", &run.arch.encoder_hidden},
                   {"model.decoder_hidden", &run.arch.decoder_hidden},
                   {"model.transition_hidden", &run.arch.transition_hidden}};
  for (const auto& ak : arch_keys) {
    if (!cfg.has(ak.key)) continue;
    *ak.dst = cfg.get_int_list(ak.key);
    for (int h : *ak.dst)
      if (h < 1) throw ValidationError("config: " + std::string(ak.key) + " widths must be >= 1");
    std::string text;
    detail::list_to_string(text, *ak.dst);
    note(ak.key, text);
  }
  const struct {
    const char* key;
    double* dst;
  } real_keys[] = {{"train.lambda", &run.train.lambda},
                   {"train.slowness_weight", &run.train.slowness_weight},
                   {"train.learning_rate", &run.train.learning_rate},
                   {"train.beta1", &run.train.beta1},
                   {"train.beta2", &run.train.beta2},
                   {"train.epsilon", &run.train.epsilon}};
  for (const auto& rk : real_keys) {
    if (!cfg.has(rk.key)) continue;
    *rk.dst = cfg.get_number(rk.key);
    std::ostringstream os;
    os << *rk.dst;
    note(rk.key, os.str());
  }
  const struct {
    const char* key;
    int* dst;
  } int_keys[] = {{"train.batch_size", &run.train.batch_size},
                  {"train.epochs", &run.train.epochs},
                  {"data.n", &run.data_n},
                  {"control.horizon", &run.horizon},
                  {"control.steps", &run.steps},
                  {"eval.starts", &run.eval_starts}};
  for (const auto& ik : int_keys) {
    if (!cfg.has(ik.key)) continue;
    *ik.dst = static_cast<int>(cfg.get_integer(ik.key));
    note(ik.key, std::to_string(*ik.dst));
  }
  if (cfg.has("control.planner")) {
    run.planner = parse_planner(cfg.get_string("control.planner"));
    note("control.planner", planner_name(run.planner));
  }
  if (cfg.has("control.receding")) {
    run.receding = cfg.get_bool("control.receding");
    note("control.receding", run.receding ? "true" : "false");
  }

  run.train.validate();
  if (run.horizon < 1) throw ValidationError("config: control.horizon must be >= 1");
  if (run.steps < 0) throw ValidationError("config: control.steps must be >= 0");
  if (run.eval_starts < 1) throw ValidationError("config: eval.starts must be >= 1");
}

// Metadata block embedded in every emitted artifact: the full effective
// configuration plus which keys were explicitly overridden.
inline nlohmann::json run_config_json(const RunConfig& c) {
  nlohmann::json j;
  j["env"] = env_kind_name(c.env);
  j["variant"] = variant_name(c.variant);
  j["n_z"] = c.n_z;
  j["arch"] = {{"encoder_hidden", c.arch.encoder_hidden},
               {"decoder_hidden", c.arch.decoder_hidden},
               {"transition_hidden", c.arch.transition_hidden}};
  j["train"] = {{"lambda", c.train.lambda},
                {"slowness_weight", c.train.slowness_weight},
                {"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs}};
  j["seed"] = c.seed;
  j["data_n"] = c.data_n;
  j["control"] = {{"planner", planner_name(c.planner)},
                  {"horizon", c.horizon},
                  {"steps", c.steps},
                  {"receding", c.receding}};
  j["eval_starts"] = c.eval_starts;
  j["out_dir"] = c.out_dir;
  j["overrides"] = c.overrides;
  return j;
}

}  // namespace latctl::io
