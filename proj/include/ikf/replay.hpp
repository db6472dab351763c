#pragma once

#include <map>
#include <string>
#include <vector>

#include "ikf/handler.hpp"

namespace ikf {

struct ReplaySpec {
  std::map<NodeId, Tick> delays;  // sensor -> arrival delay in ticks
  Tick horizon = 40;
  Gate gate = kDefaultGate;
  NodeConfig node{40, 0, false};
  bool per_agent = false;  // one agent per node over the bus instead of a single handler
  bool trace = false;
};

// Arrival order: each measurement of a delayed sensor arrives `delay` ticks late,
// ties kept in stream order.
std::vector<MeasData> inject_delays(const std::vector<MeasData>& stream, const std::map<NodeId, Tick>& delays);

struct ReplayResult {
  double max_divergence = 0.0;  // max abs difference of final means and covariances
  std::size_t measurements = 0;
  std::size_t delayed = 0;
  std::size_t rejected = 0;
  std::size_t messages = 0;
  std::vector<std::string> trace;
  std::map<NodeId, Belief<double>> delayed_beliefs;
  std::map<NodeId, Belief<double>> oracle_beliefs;
};

// Runs the arrival-ordered stream and the sorted stream, compares final beliefs.
ReplayResult run_replay(const std::vector<NodeSetup>& nodes, const std::vector<MeasData>& stream,
                        const ReplaySpec& spec);

}  // namespace ikf
