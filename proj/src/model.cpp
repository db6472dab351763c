#include "ikf/model.hpp"

#include <cmath>

namespace ikf {

LinearModel::Transition LinearModel::over(Tick ticks, const VectorXd& u, const MatrixXd& q_override) const {
  if (ticks < 1) fail(ErrorCode::NonMonotoneTime, "transition needs at least one tick");
  const VectorXd& uu = u.size() > 0 ? u : u_default;
  const MatrixXd& q = q_override.size() > 0 ? q_override : Q;
  if (q.rows() != dim() || q.cols() != dim()) fail(ErrorCode::DimensionMismatch, "process noise size");
  VectorXd bu = VectorXd::Zero(dim());
  if (B.cols() > 0 && uu.size() > 0) {
    if (uu.size() != B.cols()) fail(ErrorCode::DimensionMismatch, "control input size");
    bu = B * uu;
  }
  Transition tr;
  tr.Phi = Phi;
  tr.offset = bu;
  tr.Q = q;
  for (Tick i = 1; i < ticks; ++i) {
    tr.Phi = Phi * tr.Phi;
    tr.offset = Phi * tr.offset + bu;
    tr.Q = Phi * tr.Q * Phi.transpose() + q;
  }
  return tr;
}

void MsdParams::validate() const {
  if (!(k > 0 && c > 0 && m > 0 && dt > 0 && g >= 0 && sigma_g >= 0 && sigma_priv > 0 && sigma_rel > 0))
    fail(ErrorCode::ConfigError, "mass-spring-damper parameters must be positive");
}

MsdParams steady_state_params() {
  MsdParams p;
  p.k = 1.0;
  p.c = 0.01;
  p.m = 1.0;
  p.sigma_g = 0.01;
  p.sigma_priv = 0.05;
  p.sigma_rel = 0.05;
  p.dt = 0.001;
  return p;
}

MsdParams montecarlo_params(int node_index) {
  MsdParams p;
  p.k = 5.0;
  p.c = 0.1;
  p.m = static_cast<double>(node_index);
  p.sigma_g = 0.1;
  p.sigma_priv = 0.1;
  p.sigma_rel = 0.1;
  p.dt = 0.001;
  return p;
}

LinearModel discretize(const MsdParams& p) {
  p.validate();
  LinearModel lm;
  lm.Phi.resize(2, 2);
  lm.Phi << 1.0, p.dt, -p.dt * p.k / p.m, 1.0 - p.dt * p.c / p.m;
  lm.B.resize(2, 1);
  lm.B << 0.0, p.dt;
  // velocity increment noise with variance dt * sigma_g^2 per tick
  lm.Q = MatrixXd::Zero(2, 2);
  lm.Q(1, 1) = p.dt * p.sigma_g * p.sigma_g;
  lm.H_priv.resize(1, 2);
  lm.H_priv << 1.0, 0.0;
  lm.H_pos = lm.H_priv;
  lm.u_default = VectorXd::Constant(1, p.g);
  lm.dt = p.dt;
  return lm;
}

std::vector<std::string> scenario_ids() {
  return {"S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "S10", "S11"};
}

ObservationGraph chain_graph(int n, bool private_on_first) {
  ObservationGraph g;
  g.id = "chain";
  g.n = n;
  if (private_on_first) g.priv = {1};
  for (int i = 1; i < n; ++i) g.rel.emplace_back(i, i + 1);
  return g;
}

ObservationGraph scenario(const std::string& id, int n) {
  ObservationGraph g;
  g.id = id;
  g.n = n;
  if (n < 1) fail(ErrorCode::DomainError, "scenario needs at least one node");
  std::vector<std::pair<NodeId, NodeId>> cyc, rev;
  for (int i = 1; i <= n; ++i) cyc.emplace_back(i, i % n + 1);
  for (auto [a, b] : cyc) rev.emplace_back(b, a);
  auto all = [&] {
    std::vector<NodeId> v;
    for (int i = 1; i <= n; ++i) v.push_back(i);
    return v;
  };
  auto need_rel = [&] {
    if (n < 3) fail(ErrorCode::DomainError, "relative scenarios need at least three nodes");
  };
  if (id == "S1") {
  } else if (id == "S2") {
    g.priv = all();
  } else if (id == "S3") {
    need_rel();
    g.rel = cyc;
  } else if (id == "S4" || id == "S5") {
    need_rel();
    g.priv = id == "S4" ? std::vector<NodeId>{1} : all();
    g.rel = cyc;
  } else if (id == "S6" || id == "S7") {
    need_rel();
    if (id == "S6") g.priv = {1};
    g.rel = cyc;
    g.rel.insert(g.rel.end(), rev.begin(), rev.end());
  } else if (id == "S8") {
    need_rel();
    for (int i = 1; i + 1 < n; ++i) g.rel.emplace_back(i, i + 1);
  } else if (id == "S9") {
    need_rel();
    for (int i = 1; i < n; ++i) g.rel.emplace_back(i, i + 1);
  } else if (id == "S10") {
    need_rel();
    for (int j = 2; j <= n; ++j) g.priv.push_back(j);
    for (int j = 2; j <= n; ++j) g.rel.emplace_back(1, j);
    for (int j = 2; j <= n; ++j) g.rel.emplace_back(j, 1);
  } else if (id == "S11") {
    need_rel();
    for (int j = 2; j <= n; ++j) g.rel.emplace_back(1, j);
  } else {
    fail(ErrorCode::DomainError, "unknown scenario " + id);
  }
  return g;
}

}  // namespace ikf
