#pragma once

#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ikf/analysis.hpp"
#include "ikf/replay.hpp"

namespace ikf {

// `key = value` lines grouped under `[section]` headers; '#' starts a comment.
// Keys before the first header belong to the "" section.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<std::string> keys(const std::string& section) const;
  std::vector<std::string> sections() const;
  // ConfigError naming the first key not in `allowed`.
  void require_known(const std::string& section, const std::set<std::string>& allowed) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

struct RunConfig {
  std::string command;
  MsdParams params;
  std::string out;

  // steady-state
  std::vector<std::string> scenarios;
  int nodes = 4;
  SteadyStateOptions steady;
  bool qr_sweep = false;

  // montecarlo
  McConfig mc;
  std::vector<Strategy> strategies{Strategy::Centralized, Strategy::Ikf, Strategy::Naive};

  // replay
  std::string scenario = "S4";
  Tick steps = 200;
  std::uint64_t seed = 1;
  std::string input;  // JSON lines; empty = simulate `scenario`
  ReplaySpec replay;
};

// Per-command defaults: the reference study settings.
RunConfig default_run_config(const std::string& command);
RunConfig load_run_config(const ConfigFile& f, const std::string& command);

}  // namespace ikf
