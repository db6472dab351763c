#pragma once

// Reference computations shared by the unit tests and the acceptance binary.
// Nothing here calls into the code under test except for data types and the
// model lookup helpers.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "ikf/handler.hpp"
#include "ikf/network.hpp"
#include "ikf/reference.hpp"

namespace oracle {

using ikf::Belief;
using ikf::MatrixXd;
using ikf::MeasData;
using ikf::MeasType;
using ikf::NodeId;
using ikf::NodeSetup;
using ikf::Tick;
using ikf::VectorXd;

// ============================================================================
// chi-squared CDF by quadrature
// ============================================================================

// Integrates the density in u = sqrt(x), which removes the dof=1 singularity:
// F(x) = ∫_0^sqrt(x) 2 u^(k-1) e^(-u²/2) / (2^(k/2) Γ(k/2)) du
inline double chi2_quad_integrand(double u, int k) {
  if (u <= 0.0) return k == 1 ? 2.0 / (std::sqrt(2.0) * std::tgamma(0.5)) : 0.0;
  const double h = 0.5 * k;
  return 2.0 * std::exp((k - 1) * std::log(u) - 0.5 * u * u - h * std::log(2.0) - std::lgamma(h));
}

inline double simpson(double a, double b, double fa, double fm, double fb) { return (b - a) / 6.0 * (fa + 4 * fm + fb); }

inline double adaptive_simpson(int k, double a, double b, double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = chi2_quad_integrand(lm, k), frm = chi2_quad_integrand(rm, k);
  const double left = simpson(a, m, fa, flm, fm), right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return adaptive_simpson(k, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(k, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double chi2_cdf_quad(double x, int k) {
  if (x <= 0.0) return 0.0;
  const double b = std::sqrt(x);
  // split into unit pieces so the recursion never sees a nearly flat whole interval
  double sum = 0.0;
  for (double a = 0.0; a < b; a += 0.5) {
    const double e = std::min(b, a + 0.5);
    const double fa = chi2_quad_integrand(a, k), fb = chi2_quad_integrand(e, k);
    const double fm = chi2_quad_integrand(0.5 * (a + e), k);
    sum += adaptive_simpson(k, a, e, fa, fm, fb, simpson(a, e, fa, fm, fb), 1e-14, 40);
  }
  return sum;
}

// ============================================================================
// Random data
// ============================================================================

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

inline VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) { return random_matrix(rng, n, 1); }

// Eigenvalues in [lo, hi].
inline MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double lo = 0.2, double hi = 2.0) {
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, n));
  const MatrixXd Q = qr.householderQ();
  VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = uniform(rng, lo, hi);
  const MatrixXd s = Q * d.asDiagonal() * Q.transpose();
  return (s + s.transpose()) / 2;
}

// Linear model with a mildly stable random Φ and a full-rank Q.
inline ikf::LinearModel random_model(std::mt19937_64& rng, Eigen::Index n) {
  ikf::LinearModel lm;
  lm.Phi = MatrixXd::Identity(n, n) + 0.1 * random_matrix(rng, n, n);
  lm.B = random_matrix(rng, n, 1);
  lm.Q = 0.01 * random_spd(rng, n);
  lm.H_priv = random_matrix(rng, 1, n);
  lm.H_pos = MatrixXd::Zero(1, n);
  lm.H_pos(0, 0) = 1.0;
  lm.u_default = VectorXd::Constant(1, 0.3);
  return lm;
}

inline NodeSetup random_setup(std::mt19937_64& rng, NodeId id, Eigen::Index n) {
  NodeSetup s;
  s.id = id;
  s.model = random_model(rng, n);
  s.x0 = random_vector(rng, n);
  s.Sigma0 = random_spd(rng, n, 0.5, 2.0);
  return s;
}

inline double max_abs(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

// ============================================================================
// Global-matrix IKF recursion
// ============================================================================

// The isolated filter written on the full covariance: participants get the stacked
// update, every cross block between a participant i and a non-participant j becomes
// Λ_i Σ_ij with Λ_i = Σ_ii⁺ (Σ_ii⁻)⁻¹, and non-participant blocks stay as they are.
class GlobalIkf {
 public:
  explicit GlobalIkf(const std::vector<NodeSetup>& nodes) : s_(ikf::make_full_state(nodes)) {
    for (const auto& n : nodes) models_.emplace(n.id, n.model);
  }

  void process(const MeasData& m) {
    switch (m.type) {
      case MeasType::Propagation: predict(m); break;
      case MeasType::Private: update({m.sensor}, blocks(m), m.z, m.R); break;
      default: update(m.participants, blocks(m), m.z, m.R); break;
    }
  }

  Belief<double> belief(NodeId id) const {
    const auto& b = s_.block(id);
    return Belief<double>(0, s_.mean.segment(b.offset, b.dim), s_.cov.block(b.offset, b.offset, b.dim, b.dim));
  }
  const ikf::FullState& state() const { return s_; }

 private:
  std::vector<MatrixXd> blocks(const MeasData& m) const {
    return ikf::observation_blocks(m, [this](NodeId id) -> const ikf::LinearModel* {
      auto it = models_.find(id);
      return it == models_.end() ? nullptr : &it->second;
    });
  }

  void predict(const MeasData& m) {
    const auto& b = s_.block(m.sensor);
    const auto tr = models_.at(m.sensor).over(1, m.z, m.R);
    s_.mean.segment(b.offset, b.dim) = tr.Phi * s_.mean.segment(b.offset, b.dim) + tr.offset;
    const Eigen::Index N = s_.cov.rows();
    MatrixXd T = MatrixXd::Identity(N, N);
    T.block(b.offset, b.offset, b.dim, b.dim) = tr.Phi;
    s_.cov = T * s_.cov * T.transpose();
    s_.cov.block(b.offset, b.offset, b.dim, b.dim) += tr.Q;
    s_.cov = (s_.cov + s_.cov.transpose()) / 2;
  }

  void update(const std::vector<NodeId>& ids, const std::vector<MatrixXd>& H, const VectorXd& z, const MatrixXd& R) {
    std::vector<ikf::BlockLayout> L;
    Eigen::Index n = 0;
    for (NodeId id : ids) {
      L.push_back(s_.block(id));
      n += L.back().dim;
    }
    MatrixXd P(n, n), Hs(z.size(), n);
    VectorXd x(n);
    Eigen::Index oi = 0;
    for (std::size_t a = 0; a < ids.size(); ++a) {
      x.segment(oi, L[a].dim) = s_.mean.segment(L[a].offset, L[a].dim);
      Hs.middleCols(oi, L[a].dim) = H[a];
      Eigen::Index oj = 0;
      for (std::size_t b = 0; b < ids.size(); ++b) {
        P.block(oi, oj, L[a].dim, L[b].dim) = s_.cov.block(L[a].offset, L[b].offset, L[a].dim, L[b].dim);
        oj += L[b].dim;
      }
      oi += L[a].dim;
    }
    const MatrixXd S = Hs * P * Hs.transpose() + R;
    const MatrixXd K = P * Hs.transpose() * S.inverse();
    const MatrixXd IKH = MatrixXd::Identity(n, n) - K * Hs;
    const MatrixXd Pp = IKH * P * IKH.transpose() + K * R * K.transpose();
    const VectorXd xp = x + K * (z - Hs * x);

    std::set<NodeId> part(ids.begin(), ids.end());
    MatrixXd cov = s_.cov;
    oi = 0;
    for (std::size_t a = 0; a < ids.size(); ++a) {
      const auto& la = L[a];
      const MatrixXd prior = P.block(oi, oi, la.dim, la.dim);
      const MatrixXd post = Pp.block(oi, oi, la.dim, la.dim);
      const MatrixXd Lambda = prior.transpose().ldlt().solve(post.transpose()).transpose();
      for (const auto& lb : s_.layout) {
        if (part.count(lb.id)) continue;
        const MatrixXd c = Lambda * s_.cov.block(la.offset, lb.offset, la.dim, lb.dim);
        cov.block(la.offset, lb.offset, la.dim, lb.dim) = c;
        cov.block(lb.offset, la.offset, lb.dim, la.dim) = c.transpose();
      }
      Eigen::Index oj = 0;
      for (std::size_t b = 0; b < ids.size(); ++b) {
        cov.block(la.offset, L[b].offset, la.dim, L[b].dim) = Pp.block(oi, oj, la.dim, L[b].dim);
        oj += L[b].dim;
      }
      s_.mean.segment(la.offset, la.dim) = xp.segment(oi, la.dim);
      oi += la.dim;
    }
    s_.cov = (cov + cov.transpose()) / 2;
  }

  ikf::FullState s_;
  std::map<NodeId, ikf::LinearModel> models_;
};

// ============================================================================
// Assembly of the isolated representation
// ============================================================================

using NodeLookup = std::function<const ikf::IkfNode&(NodeId)>;

// Full mean and covariance at t from node beliefs and restored cross blocks.
inline ikf::FullState assemble(const std::vector<NodeId>& ids, const NodeLookup& node, Tick t) {
  ikf::FullState s;
  s.t = t;
  Eigen::Index n = 0;
  for (NodeId id : ids) {
    const Eigen::Index d = node(id).model().dim();
    s.layout.push_back({id, n, d});
    n += d;
  }
  s.mean = VectorXd::Zero(n);
  s.cov = MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < ids.size(); ++a) {
    const auto& la = s.layout[a];
    const Belief<double> b = node(ids[a]).peek_belief_at(t);
    s.mean.segment(la.offset, la.dim) = b.mean;
    s.cov.block(la.offset, la.offset, la.dim, la.dim) = b.cov;
    for (std::size_t c = a + 1; c < ids.size(); ++c) {
      const auto& lc = s.layout[c];
      if (auto x = ikf::cross_covariance(node(ids[a]), node(ids[c]), t)) {
        s.cov.block(la.offset, lc.offset, la.dim, lc.dim) = *x;
        s.cov.block(lc.offset, la.offset, lc.dim, la.dim) = x->transpose();
      }
    }
  }
  return s;
}

inline ikf::FullState assemble(const ikf::FusionHandler& h, Tick t) {
  return assemble(h.node_ids(), [&](NodeId id) -> const ikf::IkfNode& { return h.node(id); }, t);
}

inline ikf::FullState assemble(const ikf::Network& net, Tick t) {
  std::vector<NodeId> ids;
  std::map<NodeId, const ikf::IkfNode*> where;
  for (auto a : net.agents())
    for (NodeId id : net.handler(a).node_ids()) where.emplace(id, &net.handler(a).node(id));
  for (const auto& [id, p] : where) ids.push_back(id);
  return assemble(ids, [&](NodeId id) -> const ikf::IkfNode& { return *where.at(id); }, t);
}

inline double state_diff(const ikf::FullState& a, const ikf::FullState& b) {
  return std::max(max_abs(a.mean, b.mean), max_abs(a.cov, b.cov));
}

// ============================================================================
// Measurement streams
// ============================================================================

inline MeasData propagation(Tick t, NodeId id, const VectorXd& u = VectorXd()) {
  MeasData m;
  m.t = t;
  m.type = MeasType::Propagation;
  m.sensor = id;
  m.z = u;
  return m;
}

inline MeasData private_meas(Tick t, NodeId id, double z, double r = 0.0025) {
  MeasData m;
  m.t = t;
  m.type = MeasType::Private;
  m.sensor = id;
  m.z = VectorXd::Constant(1, z);
  m.R = MatrixXd::Constant(1, 1, r);
  return m;
}

inline MeasData joint_meas(Tick t, std::vector<NodeId> ids, double z, double r = 0.0025) {
  MeasData m;
  m.t = t;
  m.type = MeasType::JointLocal;
  m.sensor = ids.front();
  m.participants = std::move(ids);
  m.z = VectorXd::Constant(1, z);
  m.R = MatrixXd::Constant(1, 1, r);
  return m;
}

struct FuzzCase {
  std::vector<NodeSetup> nodes;
  std::vector<MeasData> stream;  // in-order
  std::map<NodeId, Tick> delays;
  Tick horizon = 20;
};

// Multi-rate nodes of random dimension, random privates and two- or three-party joints.
// Three-party joints carry explicit H blocks.
inline FuzzCase random_case(std::mt19937_64& rng, int n, Tick steps, Tick horizon) {
  FuzzCase c;
  c.horizon = horizon;
  std::uniform_int_distribution<int> dim(1, 3);
  for (int i = 1; i <= n; ++i) c.nodes.push_back(random_setup(rng, static_cast<NodeId>(i), dim(rng)));
  std::uniform_int_distribution<int> pick(1, n);
  auto coin = [&](double p) { return uniform(rng, 0, 1) < p; };
  for (Tick t = 1; t <= steps; ++t) {
    for (const auto& nd : c.nodes)
      if (coin(0.85)) c.stream.push_back(propagation(t, nd.id));
    for (const auto& nd : c.nodes)
      if (coin(0.2)) c.stream.push_back(private_meas(t, nd.id, uniform(rng, -1, 1), uniform(rng, 0.01, 0.5)));
    std::set<std::vector<NodeId>> used;
    const int joints = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int j = 0; j < joints && n >= 2; ++j) {
      std::vector<NodeId> ids{static_cast<NodeId>(pick(rng))};
      const int parts = n >= 3 && coin(0.25) ? 3 : 2;
      while (static_cast<int>(ids.size()) < parts) {
        const auto id = static_cast<NodeId>(pick(rng));
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
      }
      if (!used.insert(ids).second) continue;
      MeasData m = joint_meas(t, ids, uniform(rng, -1, 1), uniform(rng, 0.01, 0.5));
      if (parts == 3)
        for (NodeId id : ids) m.H.push_back(random_matrix(rng, 1, c.nodes[id - 1].model.dim()));
      c.stream.push_back(m);
    }
  }
  std::stable_sort(c.stream.begin(), c.stream.end(), ikf::meas_before);
  std::uniform_int_distribution<Tick> delay(0, horizon / 2);
  for (const auto& nd : c.nodes)
    if (coin(0.6)) c.delays[nd.id] = delay(rng);
  return c;
}

// ============================================================================
// Driving handlers and networks
// ============================================================================

inline ikf::HandlerConfig handler_config(Tick horizon, ikf::Gate gate = std::nullopt) {
  ikf::HandlerConfig hc;
  hc.horizon = horizon;
  hc.gate = gate;
  return hc;
}

inline ikf::FullState run_handler(const std::vector<NodeSetup>& nodes, const std::vector<MeasData>& stream,
                                  const ikf::HandlerConfig& hc, const ikf::NodeConfig& nc, Tick t_eval) {
  ikf::FusionHandler h(0, hc);
  for (const auto& nd : nodes) h.add_node(nd, nc);
  for (const auto& m : stream) h.process_measurement(m);
  return assemble(h, t_eval);
}

// placement: node -> agent
inline ikf::FullState run_network(const std::vector<NodeSetup>& nodes, const std::map<NodeId, ikf::AgentId>& placement,
                                  const std::vector<MeasData>& stream, const ikf::HandlerConfig& hc,
                                  const ikf::NodeConfig& nc, Tick t_eval) {
  ikf::Network net;
  for (const auto& [id, a] : placement) {
    (void)id;
    bool have = false;
    for (auto b : net.agents()) have = have || b == a;
    if (!have) net.add_agent(a, hc);
  }
  for (const auto& nd : nodes) net.handler(placement.at(nd.id)).add_node(nd, nc);
  net.refresh_all();
  for (const auto& m : stream) net.submit(m);
  return assemble(net, t_eval);
}

}  // namespace oracle
