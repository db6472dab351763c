#include "ikf/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace ikf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
  ConfigFile f;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      f.data_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key");
    f.data_[section][key] = trim(line.substr(eq + 1));
  }
  return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config " + path);
  return parse(in);
}

bool ConfigFile::has(const std::string& s, const std::string& k) const {
  auto it = data_.find(s);
  return it != data_.end() && it->second.count(k);
}

std::string ConfigFile::get(const std::string& s, const std::string& k, const std::string& fallback) const {
  return has(s, k) ? data_.at(s).at(k) : fallback;
}

double ConfigFile::get_double(const std::string& s, const std::string& k, double fallback) const {
  if (!has(s, k)) return fallback;
  const std::string v = get(s, k, "");
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::ConfigError, where(s, k) + ": not a number '" + v + "'");
  }
}

long long ConfigFile::get_int(const std::string& s, const std::string& k, long long fallback) const {
  if (!has(s, k)) return fallback;
  const std::string v = get(s, k, "");
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    fail(ErrorCode::ConfigError, where(s, k) + ": not an integer '" + v + "'");
  }
}

bool ConfigFile::get_bool(const std::string& s, const std::string& k, bool fallback) const {
  if (!has(s, k)) return fallback;
  std::string v = get(s, k, "");
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::ConfigError, where(s, k) + ": not a boolean '" + v + "'");
}

std::vector<std::string> ConfigFile::get_list(const std::string& s, const std::string& k,
                                              const std::vector<std::string>& fallback) const {
  if (!has(s, k)) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(get(s, k, ""));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> ConfigFile::keys(const std::string& s) const {
  std::vector<std::string> out;
  if (auto it = data_.find(s); it != data_.end())
    for (const auto& [k, v] : it->second) out.push_back(k);
  return out;
}

std::vector<std::string> ConfigFile::sections() const {
  std::vector<std::string> out;
  for (const auto& [s, kv] : data_) out.push_back(s);
  return out;
}

void ConfigFile::require_known(const std::string& s, const std::set<std::string>& allowed) const {
  for (const auto& k : keys(s))
    if (!allowed.count(k)) fail(ErrorCode::ConfigError, "unknown config key " + where(s, k));
}

void ConfigFile::set(const std::string& s, const std::string& k, const std::string& v) { data_[s][k] = v; }

RunConfig default_run_config(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "steady-state") {
    c.params = steady_state_params();
    c.scenarios = scenario_ids();
  } else if (command == "montecarlo") {
    c.mc = montecarlo_default();
    c.params = c.mc.params.front();
  } else if (command == "replay") {
    c.params = MsdParams{};
  } else {
    fail(ErrorCode::ConfigError, "unknown command '" + command + "'");
  }
  return c;
}

namespace {

Gate read_gate(const ConfigFile& f, const std::string& s, Gate fallback) {
  if (!f.has(s, "gate")) return fallback;
  const std::string v = f.get(s, "gate", "");
  if (v == "off" || v == "none") return std::nullopt;
  const double p = f.get_double(s, "gate", 0.0);
  if (!(p > 0 && p < 1)) fail(ErrorCode::ConfigError, s + ".gate must be in (0,1) or off");
  return p;
}

}  // namespace

RunConfig load_run_config(const ConfigFile& f, const std::string& command) {
  RunConfig c = default_run_config(command);
  for (const auto& s : f.sections())
    if (s != "" && s != "model" && s != "steady_state" && s != "montecarlo" && s != "replay" && s != "delays")
      fail(ErrorCode::ConfigError, "unknown config section [" + s + "]");
  f.require_known("", {"out"});
  f.require_known("model", {"k", "c", "m", "g", "dt", "sigma_g", "sigma_priv", "sigma_rel"});
  f.require_known("steady_state", {"scenarios", "nodes", "iterations", "tol", "early_exit", "qr_sweep"});
  f.require_known("montecarlo", {"runs", "steps", "seed", "strategies", "masses", "graph", "horizon", "capacity",
                                 "eager", "jobs", "series_stride", "gate"});
  f.require_known("replay", {"scenario", "nodes", "steps", "seed", "horizon", "gate", "per_agent", "input",
                             "capacity", "eager"});

  c.out = f.get("", "out", c.out);
  MsdParams& p = c.params;
  p.k = f.get_double("model", "k", p.k);
  p.c = f.get_double("model", "c", p.c);
  p.m = f.get_double("model", "m", p.m);
  p.g = f.get_double("model", "g", p.g);
  p.dt = f.get_double("model", "dt", p.dt);
  p.sigma_g = f.get_double("model", "sigma_g", p.sigma_g);
  p.sigma_priv = f.get_double("model", "sigma_priv", p.sigma_priv);
  p.sigma_rel = f.get_double("model", "sigma_rel", p.sigma_rel);
  p.validate();

  if (command == "steady-state") {
    c.scenarios = f.get_list("steady_state", "scenarios", c.scenarios);
    c.nodes = static_cast<int>(f.get_int("steady_state", "nodes", c.nodes));
    c.steady.iterations = static_cast<int>(f.get_int("steady_state", "iterations", c.steady.iterations));
    c.steady.tol = f.get_double("steady_state", "tol", c.steady.tol);
    c.steady.early_exit = f.get_bool("steady_state", "early_exit", c.steady.early_exit);
    c.qr_sweep = f.get_bool("steady_state", "qr_sweep", c.qr_sweep);
    if (c.steady.iterations < 1) fail(ErrorCode::ConfigError, "iterations must be positive");
    const auto known = scenario_ids();
    for (const auto& s : c.scenarios)
      if (std::find(known.begin(), known.end(), s) == known.end())
        fail(ErrorCode::ConfigError, "unknown scenario '" + s + "'");
  } else if (command == "montecarlo") {
    McConfig& mc = c.mc;
    mc.runs = static_cast<int>(f.get_int("montecarlo", "runs", mc.runs));
    mc.steps = f.get_int("montecarlo", "steps", mc.steps);
    mc.seed = static_cast<std::uint64_t>(f.get_int("montecarlo", "seed", static_cast<long long>(mc.seed)));
    mc.node.horizon = f.get_int("montecarlo", "horizon", mc.node.horizon);
    mc.node.capacity = static_cast<std::size_t>(f.get_int("montecarlo", "capacity", 0));
    mc.node.eager = f.get_bool("montecarlo", "eager", false);
    mc.jobs = static_cast<int>(f.get_int("montecarlo", "jobs", mc.jobs));
    mc.series_stride = static_cast<int>(f.get_int("montecarlo", "series_stride", mc.series_stride));
    mc.gate = read_gate(f, "montecarlo", mc.gate);
    std::vector<std::string> masses = f.get_list("montecarlo", "masses", {"1", "2", "3", "4", "5"});
    mc.params.clear();
    for (const auto& m : masses) {
      MsdParams q = p;
      try {
        q.m = std::stod(m);
      } catch (const std::exception&) {
        fail(ErrorCode::ConfigError, "montecarlo.masses: not a number '" + m + "'");
      }
      q.validate();
      mc.params.push_back(q);
    }
    const int n = static_cast<int>(mc.params.size());
    const std::string graph = f.get("montecarlo", "graph", "chain");
    try {
      mc.graph = graph == "chain" ? chain_graph(n, true) : scenario(graph, n);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, std::string("montecarlo.graph: ") + e.what());
    }
    if (f.has("montecarlo", "strategies")) {
      c.strategies.clear();
      for (const auto& s : f.get_list("montecarlo", "strategies", {})) c.strategies.push_back(strategy_from_string(s));
    }
    mc.validate();
  } else {
    c.scenario = f.get("replay", "scenario", c.scenario);
    c.nodes = static_cast<int>(f.get_int("replay", "nodes", c.nodes));
    c.steps = f.get_int("replay", "steps", c.steps);
    c.seed = static_cast<std::uint64_t>(f.get_int("replay", "seed", static_cast<long long>(c.seed)));
    c.input = f.get("replay", "input", c.input);
    ReplaySpec& r = c.replay;
    r.horizon = f.get_int("replay", "horizon", r.horizon);
    r.node.horizon = r.horizon;
    r.node.capacity = static_cast<std::size_t>(f.get_int("replay", "capacity", 0));
    r.node.eager = f.get_bool("replay", "eager", false);
    r.gate = read_gate(f, "replay", r.gate);
    r.per_agent = f.get_bool("replay", "per_agent", r.per_agent);
    for (const auto& k : f.keys("delays")) {
      long long id = 0;
      try {
        id = std::stoll(k);
      } catch (const std::exception&) {
        fail(ErrorCode::ConfigError, "delays: sensor id '" + k + "' is not an integer");
      }
      r.delays[static_cast<NodeId>(id)] = f.get_int("delays", k, 0);
    }
    if (r.horizon < 0 || c.steps < 1) fail(ErrorCode::ConfigError, "replay horizon/steps out of range");
  }
  return c;
}

}  // namespace ikf
