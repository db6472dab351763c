#include <cmath>
#include <iomanip>
#include <sstream>

#include "ikf/analysis.hpp"

namespace ikf {

namespace {

struct Stacked {
  MatrixXd Phi, Q;
  std::vector<Eigen::Index> offsets;
  Eigen::Index n = 0;
};

Stacked stack_models(const std::vector<LinearModel>& models) {
  Stacked s;
  for (const auto& m : models) {
    s.offsets.push_back(s.n);
    s.n += m.dim();
  }
  s.Phi = MatrixXd::Zero(s.n, s.n);
  s.Q = MatrixXd::Zero(s.n, s.n);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto d = models[i].dim();
    s.Phi.block(s.offsets[i], s.offsets[i], d, d) = models[i].Phi;
    s.Q.block(s.offsets[i], s.offsets[i], d, d) = models[i].Q;
  }
  return s;
}

void check_graph(const SteadyStateProblem& p) {
  const auto n = static_cast<NodeId>(p.models.size());
  for (NodeId i : p.graph.priv)
    if (i < 1 || i > n) fail(ErrorCode::UnknownNode, "private observation on unknown node");
  for (auto [a, b] : p.graph.rel)
    if (a < 1 || a > n || b < 1 || b > n || a == b) fail(ErrorCode::UnknownNode, "bad relative edge");
  if (!(p.r_priv > 0) || !(p.r_rel > 0)) fail(ErrorCode::DomainError, "noise variances must be positive");
}

void joseph(MatrixXd& P, const MatrixXd& H, double r) {
  const MatrixXd PHt = P * H.transpose();
  const double s = (H * PHt)(0, 0) + r;
  if (!(s > 0)) fail(ErrorCode::SingularInnovation, "innovation variance not positive");
  const MatrixXd K = PHt / s;
  const MatrixXd IKH = MatrixXd::Identity(P.rows(), P.cols()) - K * H;
  P = symmetrized(MatrixXd(IKH * P * IKH.transpose() + r * K * K.transpose()));
}

void check_divergence(const MatrixXd& P, double limit) {
  const double tr = P.trace();
  if (!std::isfinite(tr) || tr > limit) fail(ErrorCode::Divergence, "steady-state iteration diverged");
}

}  // namespace

SteadyStateProblem steady_state_problem(const MsdParams& p, const ObservationGraph& g) {
  p.validate();
  SteadyStateProblem s;
  s.models.assign(static_cast<std::size_t>(g.n), discretize(p));
  s.graph = g;
  s.r_priv = p.sigma_priv * p.sigma_priv;
  s.r_rel = p.sigma_rel * p.sigma_rel;
  return s;
}

IterationResult lyapunov_solve(const MatrixXd& Phi, const MatrixXd& W, double tol, int max_iter, const MatrixXd& X0) {
  if (Phi.rows() != Phi.cols() || W.rows() != Phi.rows() || W.cols() != Phi.cols())
    fail(ErrorCode::DimensionMismatch, "Lyapunov operands");
  if (Phi.size() > 0 && Phi.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
    fail(ErrorCode::UnstableDynamics, "spectral radius of Phi is not below one");
  IterationResult r;
  r.Sigma = X0.size() ? X0 : MatrixXd::Identity(Phi.rows(), Phi.cols());
  for (r.iterations = 0; r.iterations < max_iter;) {
    MatrixXd next = symmetrized(MatrixXd(Phi * r.Sigma * Phi.transpose() + W));
    r.last_step = (next - r.Sigma).norm();
    r.Sigma = std::move(next);
    ++r.iterations;
    if (r.last_step < tol) break;
  }
  r.converged = r.last_step < tol;
  return r;
}

IterationResult dare_iterate(const SteadyStateProblem& p, const SteadyStateOptions& opt) {
  check_graph(p);
  const Stacked s = stack_models(p.models);
  std::vector<MatrixXd> Hp, Hr;
  for (NodeId i : p.graph.priv) {
    MatrixXd H = MatrixXd::Zero(1, s.n);
    H.middleCols(s.offsets[i - 1], p.models[i - 1].dim()) = p.models[i - 1].H_priv;
    Hp.push_back(std::move(H));
  }
  for (auto [a, b] : p.graph.rel) {
    MatrixXd H = MatrixXd::Zero(1, s.n);
    H.middleCols(s.offsets[a - 1], p.models[a - 1].dim()) = -p.models[a - 1].H_pos;
    H.middleCols(s.offsets[b - 1], p.models[b - 1].dim()) += p.models[b - 1].H_pos;
    Hr.push_back(std::move(H));
  }
  IterationResult r;
  r.Sigma = MatrixXd::Identity(s.n, s.n);
  while (r.iterations < opt.iterations) {
    MatrixXd P = r.Sigma;
    for (const auto& H : Hp) joseph(P, H, p.r_priv);
    for (const auto& H : Hr) joseph(P, H, p.r_rel);
    P = symmetrized(MatrixXd(s.Phi * P * s.Phi.transpose() + s.Q));
    r.last_step = (P - r.Sigma).norm();
    r.Sigma = std::move(P);
    ++r.iterations;
    check_divergence(r.Sigma, opt.divergence);
    if (opt.early_exit && r.last_step < opt.tol) break;
  }
  r.converged = r.last_step < opt.tol;
  return r;
}

namespace {

MatrixXd assemble(const std::vector<IkfNode>& nodes, Tick t) {
  std::vector<Eigen::Index> off;
  Eigen::Index n = 0;
  for (const auto& nd : nodes) {
    off.push_back(n);
    n += nd.model().dim();
  }
  MatrixXd P = MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const auto da = nodes[a].model().dim();
    P.block(off[a], off[a], da, da) = nodes[a].peek_belief_at(t).cov;
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      const auto db = nodes[b].model().dim();
      if (auto c = cross_covariance(nodes[a], nodes[b], t)) {
        P.block(off[a], off[b], da, db) = *c;
        P.block(off[b], off[a], db, da) = c->transpose();
      }
    }
  }
  return P;
}

}  // namespace

IterationResult ikf_steady_state(const SteadyStateProblem& p, const SteadyStateOptions& opt) {
  check_graph(p);
  std::vector<IkfNode> nodes;
  for (std::size_t i = 0; i < p.models.size(); ++i) {
    const auto d = p.models[i].dim();
    nodes.emplace_back(static_cast<NodeId>(i + 1), p.models[i],
                       Belief<double>(0, VectorXd::Zero(d), MatrixXd::Identity(d, d)));
  }
  const MatrixXd Rp = MatrixXd::Constant(1, 1, p.r_priv);
  const MatrixXd Rr = MatrixXd::Constant(1, 1, p.r_rel);
  IterationResult r;
  MatrixXd before;
  for (Tick t = 0; t < opt.iterations; ++t) {
    const bool last = t + 1 == opt.iterations;
    if (last || opt.early_exit) before = assemble(nodes, t);
    for (NodeId i : p.graph.priv) {
      IkfNode& nd = nodes[i - 1];
      const MatrixXd& H = nd.model().H_priv;
      nd.private_update(H, H * nd.latest().mean, Rp, t, std::nullopt);
    }
    for (auto [a, b] : p.graph.rel) {
      IkfNode& na = nodes[a - 1];
      IkfNode& nb = nodes[b - 1];
      const std::vector<MatrixXd> H{-na.model().H_pos, nb.model().H_pos};
      const VectorXd z = H[0] * na.latest().mean + H[1] * nb.latest().mean;
      joint_update({&na, &nb}, H, z, Rr, t, std::nullopt);
    }
    for (auto& nd : nodes) nd.propagate(VectorXd(), t, t + 1);
    ++r.iterations;
    if (t % 256 == 0)
      for (const auto& nd : nodes) check_divergence(nd.latest().cov, opt.divergence);
    if (last || opt.early_exit) {
      r.Sigma = assemble(nodes, t + 1);
      r.last_step = (r.Sigma - before).norm();
      if (opt.early_exit && r.last_step < opt.tol) break;
    }
  }
  if (r.iterations == 0) r.Sigma = assemble(nodes, 0);
  check_divergence(r.Sigma, opt.divergence);
  r.converged = r.last_step < opt.tol;
  return r;
}

int numerical_rank(const MatrixXd& m, double rel) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel * s(0)) ++r;
  return r;
}

RankTests rank_tests(const MatrixXd& Phi, const MatrixXd& B, const MatrixXd& H) {
  const Eigen::Index n = Phi.rows();
  RankTests t;
  if (B.size() > 0) {
    MatrixXd C(n, B.cols() * n);
    MatrixXd P = B;
    for (Eigen::Index k = 0; k < n; ++k) {
      C.middleCols(k * B.cols(), B.cols()) = P;
      P = Phi * P;
    }
    t.rank_c = numerical_rank(C);
  }
  if (H.size() > 0) {
    MatrixXd O(H.rows() * n, n);
    MatrixXd P = H;
    for (Eigen::Index k = 0; k < n; ++k) {
      O.middleRows(k * H.rows(), H.rows()) = P;
      P = P * Phi;
    }
    t.rank_o = numerical_rank(O);
  }
  t.controllable = t.rank_c == n;
  t.observable = t.rank_o == n;
  return t;
}

SteadyStateReport steady_state_report(const std::string& label, const SteadyStateProblem& p,
                                      const SteadyStateOptions& opt) {
  const IterationResult kf = dare_iterate(p, opt);
  const IterationResult ikf = ikf_steady_state(p, opt);
  SteadyStateReport r;
  r.scenario = label;
  r.n = static_cast<int>(p.models.size());
  r.tr_kf = kf.Sigma.trace();
  r.tr_ikf = ikf.Sigma.trace();
  r.tr_diff = (kf.Sigma - ikf.Sigma).trace();
  r.psd_kf = is_psd(kf.Sigma);
  r.psd_ikf = is_psd(ikf.Sigma);
  r.frob_cov_diff = (kf.Sigma - ikf.Sigma).norm();
  r.frob_corr_diff = (correlation_matrix(kf.Sigma) - correlation_matrix(psd_projection(ikf.Sigma))).norm();
  r.converged = kf.converged && ikf.converged;
  r.iterations = std::max(kf.iterations, ikf.iterations);
  return r;
}

std::vector<SteadyStateReport> steady_state_table(const std::vector<std::string>& scenarios, const MsdParams& params,
                                                  int n, const SteadyStateOptions& opt) {
  std::vector<SteadyStateReport> out;
  for (const auto& id : scenarios) {
    SteadyStateReport r = steady_state_report(id, steady_state_problem(params, scenario(id, n)), opt);
    r.q_over_r = params.sigma_g * params.sigma_g / (params.sigma_priv * params.sigma_priv);
    r.r_ratio = (params.sigma_priv * params.sigma_priv) / (params.sigma_rel * params.sigma_rel);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SweepPoint> default_sweep() {
  std::vector<SweepPoint> v;
  for (double a : {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}) v.push_back({a, 1.0});
  for (double b : {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}) v.push_back({1.0, b});
  return v;
}

std::vector<SteadyStateReport> qr_sweep(const std::string& id, const MsdParams& params, int n,
                                        const std::vector<SweepPoint>& points, const SteadyStateOptions& opt) {
  std::vector<SteadyStateReport> out;
  const double q = params.sigma_g * params.sigma_g;
  for (const auto& pt : points) {
    if (!(pt.q_over_r > 0) || !(pt.r_ratio > 0)) fail(ErrorCode::DomainError, "sweep ratios must be positive");
    SteadyStateProblem p = steady_state_problem(params, scenario(id, n));
    p.r_priv = q / pt.q_over_r;
    p.r_rel = p.r_priv / pt.r_ratio;
    SteadyStateReport r = steady_state_report(id, p, opt);
    r.q_over_r = pt.q_over_r;
    r.r_ratio = pt.r_ratio;
    out.push_back(std::move(r));
  }
  return out;
}

std::string steady_state_csv(const std::vector<SteadyStateReport>& rows) {
  std::ostringstream os;
  os << "scenario,n,q_over_r,r_ratio,tr_kf,tr_ikf,tr_diff,psd_kf,psd_ikf,frob_cov_diff,frob_corr_diff,converged,"
        "iterations\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.scenario << ',' << r.n << ',' << r.q_over_r << ',' << r.r_ratio << ',' << r.tr_kf << ',' << r.tr_ikf
       << ',' << r.tr_diff << ',' << r.psd_kf << ',' << r.psd_ikf << ',' << r.frob_cov_diff << ','
       << r.frob_corr_diff << ',' << r.converged << ',' << r.iterations << '\n';
  return os.str();
}

}  // namespace ikf
