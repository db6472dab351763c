#pragma once

#include <functional>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "ikf/history.hpp"
#include "ikf/model.hpp"

namespace ikf {

using Gate = std::optional<double>;  // NIS gate probability; nullopt disables gating
inline constexpr double kDefaultGate = 0.997;

struct NodeConfig {
  Tick horizon = 0;          // shared by beliefs, corrections and factors; 0 = unbounded
  std::size_t capacity = 0;  // correction-buffer entries; 1 corrects factors directly
  bool eager = false;        // no correction buffer, every term applied to factors at once
};

struct UpdateResult {
  Belief<double> belief;
  bool rejected = false;
  double nis = 0.0;
};

using FactorList = std::vector<std::pair<NodeId, MatrixXd>>;

class IkfNode {
 public:
  IkfNode(NodeId id, LinearModel model, Belief<double> initial, NodeConfig cfg = {});

  NodeId id() const { return id_; }
  const LinearModel& model() const { return model_; }
  const NodeConfig& config() const { return cfg_; }
  const TimedHistory<Belief<double>>& beliefs() const { return beliefs_; }
  const TimedHistory<MatrixXd>& corrections() const { return corrections_; }
  const KeyedHistories<NodeId, MatrixXd>& cross() const { return cross_; }
  const Belief<double>& latest() const { return beliefs_.back(); }

  Belief<double> propagate(const VectorXd& u, Tick t_prev, Tick t, const MatrixXd& q_override = MatrixXd());
  MatrixXd accumulate_correction(Tick t_a, Tick t_k) const;

  // Restores and stores the factor at t.
  MatrixXd get_cross_factor_at(NodeId other, Tick t);
  // Restores without storing; nullopt when no correlation with `other` exists at t.
  std::optional<MatrixXd> peek_cross_factor(NodeId other, Tick t) const;

  UpdateResult private_update(const MatrixXd& H, const VectorXd& z, const MatrixXd& R, Tick t,
                              Gate gate = kDefaultGate);

  void check_horizon(Tick t);

  Belief<double> get_belief_at(Tick t);
  Belief<double> peek_belief_at(Tick t) const;

  // Stores a posterior computed elsewhere: the correction Σ⁺(Σ⁻)⁻¹ goes onto ℬ(t)
  // and onto factors already dated t; `factors` then replace the entries for their peers.
  void apply_posterior(Tick t, const Belief<double>& posterior, const FactorList& factors);

  void delete_after(Tick t);
  void forget_peer(NodeId other);
  bool correlated_after(NodeId other, Tick t) const;
  std::vector<NodeId> peers() const;

 private:
  Belief<double> predict(const Belief<double>& from, Tick t, const VectorXd& u, const MatrixXd& q,
                         MatrixXd* phi_out) const;
  void insert_correction(Tick t, const MatrixXd& M);
  void forward_factors_eager(Tick t, const MatrixXd& Phi);
  bool lost(Tick t_f) const;

  NodeId id_;
  LinearModel model_;
  NodeConfig cfg_;
  TimedHistory<Belief<double>> beliefs_;
  TimedHistory<MatrixXd> corrections_;
  KeyedHistories<NodeId, MatrixXd> cross_;
  std::set<NodeId> stale_;
};

// Cross block Σ_ab = S_ab S_baᵀ at t, nullopt if either half is missing.
std::optional<MatrixXd> cross_covariance(const IkfNode& a, const IkfNode& b, Tick t);

struct StackedPosterior {
  bool rejected = false;
  double nis = 0.0;
  VectorXd mean;
  MatrixXd cov;
};

// Joseph-form update of a stacked prior; H is the horizontal concatenation of the blocks.
StackedPosterior stacked_update(const VectorXd& mean, const MatrixXd& cov, const MatrixXd& H, const VectorXd& z,
                                const MatrixXd& R, Gate gate);

// Stacked prior from participant beliefs and a pairwise cross-block lookup (a < b).
void stack_prior(const std::vector<Belief<double>>& priors,
                 const std::function<std::optional<MatrixXd>(std::size_t, std::size_t)>& cross, VectorXd& mean,
                 MatrixXd& cov, std::vector<Eigen::Index>& offsets);

MatrixXd stack_blocks(const std::vector<MatrixXd>& blocks);

// Factors participant u stores after a joint update: Σ_uv for later v, I for earlier v.
FactorList participant_factors(const std::vector<NodeId>& ids, const std::vector<Eigen::Index>& offsets,
                               const std::vector<Eigen::Index>& dims, const MatrixXd& post_cov, std::size_t u);

struct JointOutcome {
  bool rejected = false;
  double nis = 0.0;
  std::vector<Belief<double>> posteriors;
};

JointOutcome joint_update(const std::vector<IkfNode*>& participants, const std::vector<MatrixXd>& H_blocks,
                          const VectorXd& z, const MatrixXd& R, Tick t, Gate gate = kDefaultGate,
                          bool commit = true);

}  // namespace ikf
