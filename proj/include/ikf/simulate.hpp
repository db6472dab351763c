#pragma once

#include <cstdint>
#include <vector>

#include "ikf/meas.hpp"

namespace ikf {

struct NodeSetup {
  NodeId id = 0;
  LinearModel model;
  VectorXd x0;      // estimator prior mean
  MatrixXd Sigma0;  // estimator prior covariance
};

struct SimOptions {
  Tick steps = 1;
  std::uint64_t seed = 0;
  double sigma_priv = 0.05;
  double sigma_rel = 0.05;
  bool sample_x0 = false;  // truth x0 ~ N(x0, Sigma0) instead of x0 itself
  bool process_noise = true;
  bool measurement_noise = true;
};

struct Simulation {
  std::vector<NodeId> ids;
  std::vector<std::vector<VectorXd>> truth;  // [node][tick 0..steps]
  std::vector<MeasData> stream;              // ticks 1..steps, tie-break ordered
};

// Nodes 1..n sharing one parameter set, prior at the force equilibrium with Sigma0 = I.
std::vector<NodeSetup> msd_nodes(const MsdParams& p, int n);
std::vector<NodeSetup> msd_nodes(const std::vector<MsdParams>& per_node);

Simulation simulate_truth(const std::vector<NodeSetup>& nodes, const ObservationGraph& graph, const SimOptions& opt);
Simulation simulate_truth(const MsdParams& p, int n, const ObservationGraph& graph, Tick steps, std::uint64_t seed);

}  // namespace ikf
