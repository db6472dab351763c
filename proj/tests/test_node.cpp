#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace ikf;
using oracle::max_abs;

static IkfNode make_node(const NodeSetup& s, NodeConfig cfg = {}) {
  return IkfNode(s.id, s.model, Belief<double>(0, s.x0, s.Sigma0), cfg);
}

// ============================================================================
// Single node against a plain Kalman filter
// ============================================================================

TEST(IkfNode, PrivateOnlyMatchesKalmanFilter) {
  std::mt19937_64 rng(21);
  const NodeSetup s = oracle::random_setup(rng, 1, 3);
  IkfNode n = make_node(s);
  Eigen::VectorXd x = s.x0;
  Eigen::MatrixXd P = s.Sigma0;
  for (Tick t = 1; t <= 40; ++t) {
    n.propagate(Eigen::VectorXd(), t - 1, t);
    x = s.model.Phi * x + s.model.B * s.model.u_default;
    P = s.model.Phi * P * s.model.Phi.transpose() + s.model.Q;
    if (t % 3 == 0) {
      const Eigen::VectorXd z = oracle::random_vector(rng, 1);
      const Eigen::MatrixXd R = Eigen::MatrixXd::Constant(1, 1, 0.2);
      const Eigen::MatrixXd& H = s.model.H_priv;
      n.private_update(H, z, R, t, std::nullopt);
      const Eigen::MatrixXd K = P * H.transpose() * (H * P * H.transpose() + R).inverse();
      x += K * (z - H * x);
      P = (Eigen::MatrixXd::Identity(3, 3) - K * H) * P;
    }
    EXPECT_LT(max_abs(n.latest().mean, x), 1e-10);
    EXPECT_LT(max_abs(n.latest().cov, P), 1e-10);
  }
}

TEST(IkfNode, PropagateErrors) {
  std::mt19937_64 rng(22);
  IkfNode n = make_node(oracle::random_setup(rng, 1, 2));
  n.propagate(Eigen::VectorXd(), 0, 2);
  EXPECT_THROW(n.propagate(Eigen::VectorXd(), 2, 2), Error);
  EXPECT_THROW(n.propagate(Eigen::VectorXd(), 1, 3), Error);
  EXPECT_THROW(n.private_update(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Zero(1),
                                Eigen::MatrixXd::Identity(1, 1), 5),
               Error);
  EXPECT_THROW(IkfNode(1, n.model(), Belief<double>(0, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3))),
               Error);
}

TEST(IkfNode, RejectedUpdateLeavesBuffersUntouched) {
  std::mt19937_64 rng(23);
  IkfNode n = make_node(oracle::random_setup(rng, 1, 2));
  n.propagate(Eigen::VectorXd(), 0, 1);
  const auto before = n.latest();
  const auto r = n.private_update(n.model().H_priv, Eigen::VectorXd::Constant(1, 1e6), Eigen::MatrixXd::Identity(1, 1), 1);
  EXPECT_TRUE(r.rejected);
  EXPECT_GT(r.nis, 8.8);
  EXPECT_EQ(n.latest().cov, before.cov);
  EXPECT_EQ(n.corrections().size(), 1u);
}

TEST(IkfNode, PseudoBeliefBetweenBeliefs) {
  std::mt19937_64 rng(24);
  const NodeSetup s = oracle::random_setup(rng, 1, 2);
  IkfNode n = make_node(s);
  n.propagate(Eigen::VectorXd(), 0, 4);
  const auto mid = n.get_belief_at(2);
  const auto tr = s.model.over(2, Eigen::VectorXd());
  EXPECT_LT(max_abs(mid.mean, tr.Phi * s.x0 + tr.offset), 1e-12);
  EXPECT_LT(max_abs(mid.cov, tr.Phi * s.Sigma0 * tr.Phi.transpose() + tr.Q), 1e-12);
  EXPECT_EQ(n.get_belief_at(2).cov, mid.cov);
  // the split span still composes to the full transition
  EXPECT_LT(max_abs(n.accumulate_correction(0, 4), s.model.over(4, Eigen::VectorXd()).Phi), 1e-12);
  EXPECT_THROW(n.get_belief_at(-1), Error);
}

TEST(IkfNode, AccumulationOrder) {
  std::mt19937_64 rng(25);
  IkfNode n = make_node(oracle::random_setup(rng, 1, 3));
  for (Tick t = 1; t <= 9; ++t) n.propagate(Eigen::VectorXd(), t - 1, t);
  n.private_update(n.model().H_priv, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 5, std::nullopt);
  EXPECT_LT(max_abs(n.accumulate_correction(1, 9), n.accumulate_correction(4, 9) * n.accumulate_correction(1, 4)),
            1e-12);
  EXPECT_THROW(n.accumulate_correction(5, 2), Error);
}

// ============================================================================
// Joint updates
// ============================================================================

TEST(IkfNode, TwoNodeUniverseMatchesCentralized) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<NodeSetup> setups{oracle::random_setup(rng, 1, 2), oracle::random_setup(rng, 2, 3)};
    IkfNode a = make_node(setups[0]), b = make_node(setups[1]);
    CentralizedFilter c(setups);
    Tick ta = 0, tb = 0;
    for (Tick t = 1; t <= 30; ++t) {
      // node 2 runs at half rate
      a.propagate(Eigen::VectorXd(), ta, t);
      ta = t;
      c.process(oracle::propagation(t, 1));
      if (t % 2 == 0) {
        b.propagate(Eigen::VectorXd(), tb, t);
        tb = t;
        c.process(oracle::propagation(t, 2));
      }
      if (t % 3 == 0) {
        MeasData m = oracle::joint_meas(t, {1, 2}, oracle::uniform(rng, -1, 1), 0.1);
        m.H = {oracle::random_matrix(rng, 1, 2), oracle::random_matrix(rng, 1, 3)};
        joint_update({&a, &b}, m.H, m.z, m.R, t, std::nullopt);
        c.process(m);
        ta = tb = t;
        EXPECT_LT(max_abs(a.latest().cov, c.belief(1).cov), 1e-9) << "t=" << t;
        EXPECT_LT(max_abs(b.latest().mean, c.belief(2).mean), 1e-9);
        EXPECT_LT(max_abs(*cross_covariance(a, b, t), c.cross(1, 2)), 1e-9);
      }
    }
  }
}

TEST(IkfNode, CorrelationsOnlyAmongParticipants) {
  std::mt19937_64 rng(27);
  IkfNode a = make_node(oracle::random_setup(rng, 1, 2)), b = make_node(oracle::random_setup(rng, 2, 2)),
          c = make_node(oracle::random_setup(rng, 3, 2));
  for (IkfNode* n : {&a, &b, &c}) n->propagate(Eigen::VectorXd(), 0, 1);
  joint_update({&a, &b}, {-a.model().H_pos, b.model().H_pos}, Eigen::VectorXd::Zero(1),
               Eigen::MatrixXd::Identity(1, 1), 1, std::nullopt);
  EXPECT_EQ(a.peers(), std::vector<NodeId>{2});
  EXPECT_TRUE(c.peers().empty());
  EXPECT_FALSE(cross_covariance(a, c, 1));
  // factor split: the first participant holds Σ_ab, the second I
  EXPECT_EQ(*b.peek_cross_factor(1, 1), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_LT(max_abs(*cross_covariance(a, b, 1), cross_covariance(b, a, 1)->transpose()), 1e-15);
  EXPECT_TRUE(a.correlated_after(2, 0));
  EXPECT_FALSE(a.correlated_after(2, 1));
}

TEST(IkfNode, RejectedJointCommitsNothing) {
  std::mt19937_64 rng(28);
  IkfNode a = make_node(oracle::random_setup(rng, 1, 2)), b = make_node(oracle::random_setup(rng, 2, 2));
  const auto j = joint_update({&a, &b}, {-a.model().H_pos, b.model().H_pos}, Eigen::VectorXd::Constant(1, 1e5),
                              Eigen::MatrixXd::Identity(1, 1), 0);
  EXPECT_TRUE(j.rejected);
  EXPECT_TRUE(a.peers().empty());
  const auto dry = joint_update({&a, &b}, {-a.model().H_pos, b.model().H_pos}, Eigen::VectorXd::Zero(1),
                                Eigen::MatrixXd::Identity(1, 1), 0, kDefaultGate, false);
  EXPECT_FALSE(dry.rejected);
  EXPECT_TRUE(a.peers().empty());
}

TEST(IkfNode, MatchesGlobalMatrixRecursion) {
  // repeated joints of one node within one tick exercise the same-tick correction path
  for (const char* id : {"S4", "S7", "S10", "S11"}) {
    const MsdParams p = montecarlo_params(2);
    const auto nodes = msd_nodes(p, 4);
    const auto sim = simulate_truth(p, 4, scenario(id, 4), 60, 5);
    FusionHandler h(0, oracle::handler_config(0));
    for (const auto& nd : nodes) h.add_node(nd);
    oracle::GlobalIkf g(nodes);
    for (const auto& m : sim.stream) {
      h.process_measurement(m);
      g.process(m);
    }
    const FullState s = oracle::assemble(h, 60);
    EXPECT_LT(max_abs(s.cov, g.state().cov), 1e-9) << id;
    EXPECT_LT(max_abs(s.mean, g.state().mean), 1e-9) << id;
  }
}

TEST(IkfNode, CapacityOneEqualsEagerBitForBit) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    auto c = oracle::random_case(rng, 4, 40, 0);
    // eager nodes cannot split spans, so every node propagates every tick here
    std::vector<MeasData> stream;
    for (Tick t = 1; t <= 40; ++t) {
      for (const auto& nd : c.nodes) stream.push_back(oracle::propagation(t, nd.id));
      for (const auto& m : c.stream)
        if (m.t == t && m.type != MeasType::Propagation) stream.push_back(m);
    }
    const auto a = oracle::run_handler(c.nodes, stream, oracle::handler_config(0), NodeConfig{0, 1, false}, 40);
    const auto b = oracle::run_handler(c.nodes, stream, oracle::handler_config(0), NodeConfig{0, 0, true}, 40);
    EXPECT_TRUE(a.cov == b.cov) << max_abs(a.cov, b.cov);
    EXPECT_TRUE(a.mean == b.mean);
  }
}

TEST(IkfNode, HorizonForwardingKeepsCrossCovariance) {
  const MsdParams p = montecarlo_params(1);
  const auto nodes = msd_nodes(p, 2);
  std::vector<MeasData> stream;
  for (Tick t = 1; t <= 60; ++t) {
    stream.push_back(oracle::propagation(t, 1));
    stream.push_back(oracle::propagation(t, 2));
    if (t == 2 || t == 57) stream.push_back(oracle::joint_meas(t, {1, 2}, 0.1));
  }
  const auto unbounded = oracle::run_handler(nodes, stream, oracle::handler_config(0), NodeConfig{}, 60);
  const auto bounded = oracle::run_handler(nodes, stream, oracle::handler_config(0), NodeConfig{8, 0, false}, 60);
  EXPECT_LT(oracle::state_diff(unbounded, bounded), 1e-12);
  EXPECT_GT(unbounded.cov.block(0, 2, 2, 2).norm(), 0.0);
}
