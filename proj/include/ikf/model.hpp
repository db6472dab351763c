#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ikf/core.hpp"

namespace ikf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Discrete LTI node model, defined per tick.
struct LinearModel {
  MatrixXd Phi;
  MatrixXd B;
  MatrixXd Q;
  MatrixXd H_priv;
  MatrixXd H_pos;
  VectorXd u_default;
  double dt = 1.0;

  Eigen::Index dim() const { return Phi.rows(); }

  struct Transition {
    MatrixXd Phi;
    VectorXd offset;
    MatrixXd Q;
  };

  // Exact composition of `ticks` per-tick steps with constant input u.
  // q_override replaces the per-tick Q when non-empty.
  Transition over(Tick ticks, const VectorXd& u, const MatrixXd& q_override = MatrixXd()) const;
};

struct MsdParams {
  double k = 1.0;
  double c = 0.1;
  double m = 1.0;
  double g = 9.81;
  double dt = 0.001;
  double sigma_g = 0.1;
  double sigma_priv = 0.05;
  double sigma_rel = 0.05;

  void validate() const;
};

// Presets for the steady-state study and the Monte Carlo study.
MsdParams steady_state_params();
MsdParams montecarlo_params(int node_index);

LinearModel discretize(const MsdParams& p);

struct ObservationGraph {
  std::string id;
  int n = 0;
  std::vector<NodeId> priv;
  std::vector<std::pair<NodeId, NodeId>> rel;
};

// Node ids are 1..n.
ObservationGraph scenario(const std::string& id, int n);
std::vector<std::string> scenario_ids();
ObservationGraph chain_graph(int n, bool private_on_first);

}  // namespace ikf
