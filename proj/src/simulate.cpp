#include "ikf/simulate.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace ikf {

namespace {

// Square root of a PSD matrix, tolerant of rank deficiency.
MatrixXd psd_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(m));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

VectorXd standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

}  // namespace

std::vector<NodeSetup> msd_nodes(const std::vector<MsdParams>& per_node) {
  std::vector<NodeSetup> nodes;
  for (std::size_t i = 0; i < per_node.size(); ++i) {
    const MsdParams& p = per_node[i];
    NodeSetup s;
    s.id = static_cast<NodeId>(i + 1);
    s.model = discretize(p);
    s.x0 = VectorXd::Zero(2);
    s.x0(0) = p.m * p.g / p.k;
    s.Sigma0 = MatrixXd::Identity(2, 2);
    nodes.push_back(std::move(s));
  }
  return nodes;
}

std::vector<NodeSetup> msd_nodes(const MsdParams& p, int n) {
  return msd_nodes(std::vector<MsdParams>(static_cast<std::size_t>(n), p));
}

Simulation simulate_truth(const std::vector<NodeSetup>& nodes, const ObservationGraph& graph, const SimOptions& opt) {
  if (opt.steps < 1) fail(ErrorCode::DomainError, "simulation needs at least one step");
  std::mt19937_64 rng(opt.seed);
  Simulation sim;
  std::vector<MatrixXd> q_sqrt;
  std::map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    sim.ids.push_back(nodes[i].id);
    index[nodes[i].id] = i;
    q_sqrt.push_back(psd_sqrt(nodes[i].model.Q));
    VectorXd x0 = nodes[i].x0;
    if (opt.sample_x0) x0 += psd_sqrt(nodes[i].Sigma0) * standard_normal(rng, x0.size());
    sim.truth.push_back({x0});
  }
  auto node_index = [&](NodeId id) {
    auto it = index.find(id);
    if (it == index.end()) fail(ErrorCode::UnknownNode, "graph references node " + std::to_string(id));
    return it->second;
  };
  const MatrixXd Rp = MatrixXd::Constant(1, 1, opt.sigma_priv * opt.sigma_priv);
  const MatrixXd Rr = MatrixXd::Constant(1, 1, opt.sigma_rel * opt.sigma_rel);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<NodeId> priv = graph.priv;
  std::sort(priv.begin(), priv.end());
  auto rel = graph.rel;
  std::sort(rel.begin(), rel.end());
  for (Tick t = 1; t <= opt.steps; ++t) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const LinearModel& lm = nodes[i].model;
      VectorXd x = lm.Phi * sim.truth[i].back();
      if (lm.B.cols() > 0 && lm.u_default.size() > 0) x += lm.B * lm.u_default;
      if (opt.process_noise) x += q_sqrt[i] * standard_normal(rng, x.size());
      sim.truth[i].push_back(std::move(x));
      MeasData m;
      m.t = t;
      m.type = MeasType::Propagation;
      m.sensor = nodes[i].id;
      m.z = lm.u_default;
      sim.stream.push_back(std::move(m));
    }
    for (NodeId id : priv) {
      const std::size_t i = node_index(id);
      MeasData m;
      m.t = t;
      m.type = MeasType::Private;
      m.sensor = id;
      m.z = nodes[i].model.H_priv * sim.truth[i].back();
      if (opt.measurement_noise) m.z(0) += opt.sigma_priv * nd(rng);
      m.R = Rp;
      sim.stream.push_back(std::move(m));
    }
    for (auto [a, b] : rel) {
      const std::size_t ia = node_index(a), ib = node_index(b);
      MeasData m;
      m.t = t;
      m.type = MeasType::JointLocal;
      m.sensor = a;
      m.participants = {a, b};
      m.z = nodes[ib].model.H_pos * sim.truth[ib].back() - nodes[ia].model.H_pos * sim.truth[ia].back();
      if (opt.measurement_noise) m.z(0) += opt.sigma_rel * nd(rng);
      m.R = Rr;
      sim.stream.push_back(std::move(m));
    }
  }
  return sim;
}

Simulation simulate_truth(const MsdParams& p, int n, const ObservationGraph& graph, Tick steps, std::uint64_t seed) {
  SimOptions opt;
  opt.steps = steps;
  opt.seed = seed;
  opt.sigma_priv = p.sigma_priv;
  opt.sigma_rel = p.sigma_rel;
  opt.process_noise = p.sigma_g > 0;
  return simulate_truth(msd_nodes(p, n), graph, opt);
}

}  // namespace ikf
