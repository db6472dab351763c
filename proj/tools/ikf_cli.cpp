#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "ikf/config.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kDivergence = 2, kHorizon = 3 };

void write_out(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) ikf::fail(ikf::ErrorCode::ConfigError, "cannot write " + path);
  out << text;
}

std::vector<std::string> split(const std::string& s) {
  ikf::ConfigFile f;
  f.set("", "v", s);
  return f.get_list("", "v", {});
}

int cmd_steady_state(const ikf::RunConfig& c) {
  int code = kOk;
  std::vector<ikf::SteadyStateReport> rows;
  for (const auto& id : c.scenarios) {
    try {
      if (c.qr_sweep)
        for (auto& r : ikf::qr_sweep(id, c.params, c.nodes, ikf::default_sweep(), c.steady)) rows.push_back(r);
      else
        rows.push_back(ikf::steady_state_table({id}, c.params, c.nodes, c.steady).front());
    } catch (const ikf::Error& e) {
      if (e.code() != ikf::ErrorCode::Divergence) throw;
      std::cerr << "ikf: " << id << ": " << e.what() << "\n";
      code = kDivergence;
    }
  }
  const std::string csv = ikf::steady_state_csv(rows);
  if (c.out.empty())
    std::cout << csv;
  else
    write_out(c.out, csv);
  return code;
}

int cmd_montecarlo(const ikf::RunConfig& c) {
  const ikf::McReport r = ikf::monte_carlo(c.mc, c.strategies);
  const std::string csv = ikf::mc_csv(r);
  if (c.out.empty()) {
    std::cout << csv;
  } else {
    write_out(c.out + ".json", ikf::mc_json(r));
    write_out(c.out + ".csv", csv);
  }
  std::cerr << "ikf: " << r.runs << " runs x " << r.steps << " steps in " << r.seconds << " s; ANEES 95% bounds ["
            << r.bounds.lower << ", " << r.bounds.upper << "]\n";
  return kOk;
}

int cmd_replay(const ikf::RunConfig& c) {
  const auto nodes = ikf::msd_nodes(c.params, c.nodes);
  std::vector<ikf::MeasData> stream;
  if (c.input.empty()) {
    stream = ikf::simulate_truth(c.params, c.nodes, ikf::scenario(c.scenario, c.nodes), c.steps, c.seed).stream;
  } else {
    std::ifstream in(c.input);
    if (!in) ikf::fail(ikf::ErrorCode::ConfigError, "cannot open " + c.input);
    stream = ikf::read_jsonl(in);
  }
  const ikf::ReplayResult r = ikf::run_replay(nodes, stream, c.replay);
  for (const auto& line : r.trace) std::cerr << line << "\n";
  nlohmann::json j = {{"measurements", r.measurements},
                      {"delayed", r.delayed},
                      {"messages", r.messages},
                      {"max_divergence", r.max_divergence}};
  if (c.out.empty())
    std::cout << j.dump() << "\n";
  else
    write_out(c.out, j.dump(1) + "\n");
  return r.max_divergence < 1e-9 ? kOk : kDivergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Isolated Kalman filtering: steady-state tables, Monte Carlo credibility, delayed replay"};
  app.require_subcommand(1);
  std::string config, scenarios, strategy, out;
  int runs = 0, jobs = 0;
  long long seed = -1;
  bool trace = false, qr = false;
  std::vector<std::string> delays;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", config, "key = value config file");
    s->add_option("--seed", seed, "random seed");
    s->add_option("--out", out, "output path");
  };
  auto* ss = app.add_subcommand("steady-state", "steady-state covariance table");
  common(ss);
  ss->add_option("--scenarios", scenarios, "comma-separated scenario ids (S1..S11)");
  ss->add_flag("--qr-sweep", qr, "noise-ratio sweep rows for the selected scenarios");
  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo credibility study");
  common(mc);
  mc->add_option("--runs", runs, "number of runs");
  mc->add_option("--strategy", strategy, "comma-separated: centralized,ikf,naive");
  mc->add_option("--jobs", jobs, "worker threads");
  auto* rp = app.add_subcommand("replay", "delayed-measurement replay against the in-order run");
  common(rp);
  rp->add_option("--scenarios", scenarios, "scenario id for the simulated stream");
  rp->add_option("--delay", delays, "sensor=ticks, repeatable");
  rp->add_flag("--trace", trace, "print wire messages (one agent per node)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    ikf::ConfigFile f = config.empty() ? ikf::ConfigFile{} : ikf::ConfigFile::load(config);
    if (!out.empty()) f.set("", "out", out);
    if (command == "steady-state") {
      if (!scenarios.empty()) f.set("steady_state", "scenarios", scenarios);
      if (qr) f.set("steady_state", "qr_sweep", "true");
    } else if (command == "montecarlo") {
      if (runs) f.set("montecarlo", "runs", std::to_string(runs));
      if (seed >= 0) f.set("montecarlo", "seed", std::to_string(seed));
      if (!strategy.empty()) f.set("montecarlo", "strategies", strategy);
      if (jobs) f.set("montecarlo", "jobs", std::to_string(jobs));
    } else {
      if (seed >= 0) f.set("replay", "seed", std::to_string(seed));
      if (!scenarios.empty()) f.set("replay", "scenario", split(scenarios).front());
      if (trace) f.set("replay", "per_agent", "true");
      for (const auto& d : delays) {
        const auto eq = d.find('=');
        if (eq == std::string::npos) ikf::fail(ikf::ErrorCode::ConfigError, "--delay expects sensor=ticks");
        f.set("delays", d.substr(0, eq), d.substr(eq + 1));
      }
    }
    ikf::RunConfig c = ikf::load_run_config(f, command);
    c.replay.trace = trace;
    if (command == "steady-state") return cmd_steady_state(c);
    if (command == "montecarlo") return cmd_montecarlo(c);
    return cmd_replay(c);
  } catch (const ikf::Error& e) {
    std::cerr << "ikf: " << e.what() << "\n";
    switch (e.code()) {
      case ikf::ErrorCode::HorizonExceeded: return kHorizon;
      case ikf::ErrorCode::Divergence: return kDivergence;
      default: return kConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "ikf: " << e.what() << "\n";
    return kConfig;
  }
}
