#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "ikf/simulate.hpp"
#include "oracles.hpp"

using namespace ikf;

TEST(Discretize, MassSpringDamper) {
  MsdParams p;
  p.k = 2.0;
  p.c = 0.5;
  p.m = 4.0;
  p.dt = 0.01;
  p.sigma_g = 0.3;
  const LinearModel lm = discretize(p);
  EXPECT_NEAR(lm.Phi(0, 1), 0.01, 1e-15);
  EXPECT_NEAR(lm.Phi(1, 0), -0.01 * 2.0 / 4.0, 1e-15);
  EXPECT_NEAR(lm.Phi(1, 1), 1.0 - 0.01 * 0.5 / 4.0, 1e-15);
  EXPECT_EQ(lm.Q(0, 0), 0.0);
  EXPECT_EQ(lm.Q(0, 1), 0.0);
  EXPECT_NEAR(lm.Q(1, 1), 0.01 * 0.09, 1e-15);
  EXPECT_EQ(lm.u_default(0), p.g);
  p.m = -1;
  EXPECT_THROW(discretize(p), Error);
}

TEST(Discretize, EquilibriumIsFixedPoint) {
  const MsdParams p = montecarlo_params(3);
  const LinearModel lm = discretize(p);
  Eigen::Vector2d x(p.m * p.g / p.k, 0.0);
  const Eigen::VectorXd next = lm.Phi * x + lm.B * lm.u_default;
  EXPECT_LT((next - x).norm(), 1e-12);
}

TEST(LinearModel, OverComposesSteps) {
  std::mt19937_64 rng(1);
  const LinearModel lm = oracle::random_model(rng, 3);
  const auto tr = lm.over(4, Eigen::VectorXd());
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(3, 3), Q = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd off = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 4; ++i) {
    Phi = lm.Phi * Phi;
    Q = lm.Phi * Q * lm.Phi.transpose() + lm.Q;
    off = lm.Phi * off + lm.B * lm.u_default;
  }
  EXPECT_LT(oracle::max_abs(tr.Phi, Phi), 1e-14);
  EXPECT_LT(oracle::max_abs(tr.Q, Q), 1e-14);
  EXPECT_LT(oracle::max_abs(tr.offset, off), 1e-14);
  EXPECT_THROW(lm.over(0, Eigen::VectorXd()), Error);
  EXPECT_THROW(lm.over(1, Eigen::VectorXd::Zero(2)), Error);
}

// ============================================================================
// Scenarios
// ============================================================================

TEST(Scenario, Shapes) {
  EXPECT_EQ(scenario_ids().size(), 11u);
  EXPECT_TRUE(scenario("S1", 4).rel.empty());
  EXPECT_EQ(scenario("S2", 4).priv.size(), 4u);
  EXPECT_EQ(scenario("S3", 4).rel.size(), 4u);
  EXPECT_EQ(scenario("S4", 4).priv, std::vector<NodeId>{1});
  EXPECT_EQ(scenario("S5", 4).priv.size(), 4u);
  EXPECT_EQ(scenario("S5", 4).rel.size(), 4u);
  EXPECT_EQ(scenario("S7", 4).rel.size(), 8u);
  const auto s8 = scenario("S8", 4);
  EXPECT_EQ(s8.rel.size(), 2u);
  EXPECT_EQ(scenario("S9", 4).rel.size(), 3u);
  EXPECT_EQ(scenario("S10", 4).priv.size(), 3u);
  EXPECT_EQ(scenario("S11", 4).rel.size(), 3u);
  EXPECT_THROW(scenario("S12", 4), Error);
  EXPECT_THROW(scenario("S3", 2), Error);
}

TEST(Scenario, ChainGraph) {
  const auto g = chain_graph(5, true);
  EXPECT_EQ(g.priv, std::vector<NodeId>{1});
  ASSERT_EQ(g.rel.size(), 4u);
  EXPECT_EQ(g.rel.back(), (std::pair<NodeId, NodeId>{4, 5}));
}

// ============================================================================
// Simulation and measurement records
// ============================================================================

TEST(Simulate, DeterministicAndOrdered) {
  const MsdParams p = montecarlo_params(1);
  const auto a = simulate_truth(p, 3, scenario("S4", 3), 50, 7);
  const auto b = simulate_truth(p, 3, scenario("S4", 3), 50, 7);
  ASSERT_EQ(a.stream.size(), b.stream.size());
  for (std::size_t i = 0; i < a.stream.size(); ++i) EXPECT_EQ(a.stream[i].z, b.stream[i].z);
  EXPECT_TRUE(std::is_sorted(a.stream.begin(), a.stream.end(), meas_before));
  // 3 propagations, 1 private, 3 relative per tick
  EXPECT_EQ(a.stream.size(), 50u * 7u);
  EXPECT_EQ(a.truth[0].size(), 51u);
}

TEST(Simulate, NoiseFreeMeasurementsMatchTruth) {
  const auto nodes = msd_nodes(montecarlo_params(2), 3);
  SimOptions opt;
  opt.steps = 20;
  opt.measurement_noise = false;
  const auto sim = simulate_truth(nodes, scenario("S4", 3), opt);
  for (const auto& m : sim.stream) {
    const auto& x = sim.truth;
    if (m.type == MeasType::Private)
      EXPECT_NEAR(m.z(0), x[m.sensor - 1][static_cast<std::size_t>(m.t)](0), 1e-14);
    if (m.type == MeasType::JointLocal) {
      const double d = x[m.participants[1] - 1][static_cast<std::size_t>(m.t)](0) -
                       x[m.participants[0] - 1][static_cast<std::size_t>(m.t)](0);
      EXPECT_NEAR(m.z(0), d, 1e-14);
    }
  }
}

TEST(MeasData, OrderingRanks) {
  auto p = oracle::propagation(3, 2);
  auto q = oracle::private_meas(3, 1, 0.0);
  auto j = oracle::joint_meas(3, {1, 2}, 0.0);
  auto k = oracle::joint_meas(3, {1, 3}, 0.0);
  EXPECT_TRUE(meas_before(p, q));
  EXPECT_TRUE(meas_before(q, j));
  EXPECT_TRUE(meas_before(j, k));
  EXPECT_TRUE(meas_before(oracle::joint_meas(2, {4, 5}, 0.0), p));
}

TEST(MeasData, Validate) {
  auto j = oracle::joint_meas(1, {1, 2}, 0.0);
  EXPECT_NO_THROW(j.validate());
  j.participants.clear();
  EXPECT_THROW(j.validate(), Error);
  auto q = oracle::private_meas(1, 1, 0.0);
  q.R = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(q.validate(), Error);
}

TEST(MeasData, JsonLinesRoundTrip) {
  auto j = oracle::joint_meas(5, {1, 3}, 0.25, 0.01);
  j.H = {Eigen::MatrixXd::Constant(1, 2, -1.0), Eigen::MatrixXd::Constant(1, 2, 2.0)};
  j.meta = "uwb";
  const auto back = meas_from_json_line(to_json_line(j));
  EXPECT_EQ(back.t, 5);
  EXPECT_EQ(back.type, MeasType::JointLocal);
  EXPECT_EQ(back.participants, j.participants);
  EXPECT_EQ(back.z, j.z);
  EXPECT_EQ(back.R, j.R);
  ASSERT_EQ(back.H.size(), 2u);
  EXPECT_EQ(back.H[1], j.H[1]);
  EXPECT_EQ(back.meta, "uwb");

  std::stringstream ss;
  ss << to_json_line(oracle::propagation(1, 1)) << "\n\n" << to_json_line(j) << "\n";
  EXPECT_EQ(read_jsonl(ss).size(), 2u);
  EXPECT_THROW(meas_from_json_line("{\"t\": 1}"), Error);
  EXPECT_THROW(meas_from_json_line("not json"), Error);
  EXPECT_THROW(meas_type_from_string("bogus"), Error);
}

TEST(MeasData, DefaultObservationBlocks) {
  const LinearModel lm = discretize(MsdParams{});
  auto lookup = [&](NodeId) { return &lm; };
  const auto b = observation_blocks(oracle::joint_meas(1, {1, 2}, 0.0), lookup);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0](0, 0), -1.0);
  EXPECT_EQ(b[1](0, 0), 1.0);
  EXPECT_THROW(observation_blocks(oracle::joint_meas(1, {1, 2, 3}, 0.0), lookup), Error);
}
