#pragma once

#include <map>
#include <vector>

#include "ikf/meas.hpp"
#include "ikf/simulate.hpp"

namespace ikf {

struct BlockLayout {
  NodeId id = 0;
  Eigen::Index offset = 0;
  Eigen::Index dim = 0;
};

struct FullState {
  Tick t = 0;
  VectorXd mean;
  MatrixXd cov;
  std::vector<BlockLayout> layout;

  const BlockLayout& block(NodeId id) const;
  std::size_t index(NodeId id) const;
};

FullState make_full_state(const std::vector<NodeSetup>& nodes, Tick t = 0);

// Per-block transition, cross blocks Φ_i Σ_ij Φ_jᵀ.
FullState centralized_predict(const FullState& s, const std::vector<MatrixXd>& Phi, const std::vector<MatrixXd>& Q,
                              const std::vector<VectorXd>& offset);
// Exact Joseph-form update with a full-width H.
FullState centralized_update(const FullState& s, const MatrixXd& H, const VectorXd& z, const MatrixXd& R);
// Stacked update with cross blocks forced to zero.
std::vector<Belief<double>> naive_update(const std::vector<Belief<double>>& nodes, const std::vector<MatrixXd>& H_blocks,
                                         const VectorXd& z, const MatrixXd& R);

// Full-state filter driven by the same measurement records as the handler. Every node block
// keeps its own time so multi-rate streams are handled like the isolated nodes do.
class CentralizedFilter {
 public:
  explicit CentralizedFilter(const std::vector<NodeSetup>& nodes, Tick t0 = 0);

  void process(const MeasData& m);
  void advance(NodeId id, Tick t, const VectorXd& u = VectorXd(), const MatrixXd& q = MatrixXd());

  Belief<double> belief(NodeId id) const;
  MatrixXd cross(NodeId a, NodeId b) const;
  const FullState& state() const { return s_; }
  Tick time(NodeId id) const { return times_[s_.index(id)]; }

 private:
  const LinearModel* model(NodeId id) const;

  FullState s_;
  std::vector<LinearModel> models_;
  std::vector<Tick> times_;
};

class NaiveFilter {
 public:
  explicit NaiveFilter(const std::vector<NodeSetup>& nodes, Tick t0 = 0);

  void process(const MeasData& m);
  const Belief<double>& belief(NodeId id) const { return beliefs_.at(id); }

 private:
  void advance(NodeId id, Tick t, const VectorXd& u = VectorXd(), const MatrixXd& q = MatrixXd());

  std::map<NodeId, LinearModel> models_;
  std::map<NodeId, Belief<double>> beliefs_;
};

}  // namespace ikf
