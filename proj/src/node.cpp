#include "ikf/node.hpp"

#include <algorithm>

namespace ikf {

namespace {

// Σ⁺(Σ⁻)⁻¹ through a solve against the symmetric prior.
MatrixXd correction_factor(const MatrixXd& prior, const MatrixXd& post) {
  Eigen::LDLT<MatrixXd> ldlt(prior);
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().cwiseAbs().minCoeff() > 1e-12 * dmax))
    fail(ErrorCode::SingularPrior, "prior covariance not invertible");
  return ldlt.solve(post).transpose();
}

}  // namespace

IkfNode::IkfNode(NodeId id, LinearModel model, Belief<double> initial, NodeConfig cfg)
    : id_(id),
      model_(std::move(model)),
      cfg_(cfg),
      beliefs_(cfg.horizon),
      corrections_(cfg.horizon, cfg.capacity),
      cross_(cfg.horizon) {
  if (initial.dim() != model_.dim()) fail(ErrorCode::DimensionMismatch, "initial belief and model disagree");
  beliefs_.insert(initial.t, std::move(initial));
}

Belief<double> IkfNode::predict(const Belief<double>& from, Tick t, const VectorXd& u, const MatrixXd& q,
                                MatrixXd* phi_out) const {
  const auto tr = model_.over(t - from.t, u, q);
  Belief<double> b(t, tr.Phi * from.mean + tr.offset, tr.Phi * from.cov * tr.Phi.transpose() + tr.Q);
  if (phi_out) *phi_out = tr.Phi;
  return b;
}

Belief<double> IkfNode::propagate(const VectorXd& u, Tick t_prev, Tick t, const MatrixXd& q_override) {
  if (t <= t_prev) fail(ErrorCode::NonMonotoneTime, "propagation must move forward in time");
  const Belief<double>* prev = beliefs_.at(t_prev);
  if (!prev) fail(ErrorCode::MissingBelief, "no belief at t_prev=" + std::to_string(t_prev));
  MatrixXd Phi;
  Belief<double> b = predict(*prev, t, u, q_override, &Phi);
  if (cfg_.eager)
    forward_factors_eager(t, Phi);
  else
    insert_correction(t, Phi);
  beliefs_.insert(t, b);
  return b;
}

bool IkfNode::lost(Tick t_f) const {
  const auto w = corrections_.evicted_through();
  return w && *w > t_f;
}

MatrixXd IkfNode::accumulate_correction(Tick t_a, Tick t_k) const {
  if (t_a > t_k) fail(ErrorCode::NonMonotoneTime, "accumulation interval reversed");
  const Eigen::Index n = model_.dim();
  if (t_a == t_k) return MatrixXd::Identity(n, n);
  if (lost(t_a)) fail(ErrorCode::HorizonExceeded, "correction terms after t=" + std::to_string(t_a) + " evicted");
  auto [it, end] = corrections_.range(t_a, t_k);
  if (it == end) return MatrixXd::Identity(n, n);
  MatrixXd M = it->second;
  for (++it; it != end; ++it) M = it->second * M;
  return M;
}

std::optional<MatrixXd> IkfNode::peek_cross_factor(NodeId other, Tick t) const {
  const auto* h = cross_.get(other);
  if (!h) return std::nullopt;
  const auto k = h->key(t, Lookup::FloorInclusive);
  if (!k) return std::nullopt;
  const MatrixXd& S = *h->at(*k);
  if (*k == t) return S;
  // past the last stored belief the factor moves with the pseudo-belief transition
  const auto kb = beliefs_.key(t, Lookup::FloorInclusive);
  const Tick reach = kb ? std::max(*k, *kb) : *k;
  MatrixXd out;
  if (cfg_.eager) {
    auto [it, end] = beliefs_.range(*k, reach);
    if (it != end) fail(ErrorCode::HorizonExceeded, "eager factor is not current");
    out = S;
  } else {
    out = accumulate_correction(*k, reach) * S;
  }
  if (reach < t) out = model_.over(t - reach, VectorXd(), MatrixXd()).Phi * out;
  return out;
}

MatrixXd IkfNode::get_cross_factor_at(NodeId other, Tick t) {
  auto S = peek_cross_factor(other, t);
  if (!S) fail(ErrorCode::UnknownNode, "no cross factor for node " + std::to_string(other));
  auto* h = cross_.get(other);
  if (!h->at(t)) h->insert(t, *S);
  return *S;
}

void IkfNode::forward_factors_eager(Tick t, const MatrixXd& Phi) {
  for (auto& [other, h] : cross_) {
    if (stale_.count(other) || h.empty()) continue;
    MatrixXd S = Phi * h.back();
    h.insert(t, std::move(S));
  }
}

void IkfNode::insert_correction(Tick t, const MatrixXd& M) {
  if (cfg_.capacity == 1) {
    corrections_.insert(t, M);
    for (auto it = cross_.begin(); it != cross_.end();) {
      auto& h = it->second;
      const Tick t_f = *h.newest();
      if (t_f < t) {
        if (stale_.count(it->first) || lost(t_f)) {
          it = cross_.erase(it);
          continue;
        }
        MatrixXd S = accumulate_correction(t_f, t) * h.back();
        h.insert(t, std::move(S));
      }
      ++it;
    }
    return;
  }
  // keep every factor restorable across the entries this insert evicts
  if (const auto e = corrections_.would_evict(t)) {
    for (auto it = cross_.begin(); it != cross_.end();) {
      auto& h = it->second;
      const Tick t_f = *h.newest();
      if (t_f < *e) {
        if (stale_.count(it->first) || lost(t_f)) {
          it = cross_.erase(it);
          continue;
        }
        MatrixXd S = accumulate_correction(t_f, *e) * h.back();
        h.insert(*e, std::move(S));
      }
      ++it;
    }
  }
  corrections_.insert(t, M);
  check_horizon(t);
}

void IkfNode::check_horizon(Tick t) {
  if (cfg_.eager || corrections_.empty()) return;
  const Tick t_o = *corrections_.oldest();
  const Tick t_m = t_o + (t - t_o) / 2;
  for (auto it = cross_.begin(); it != cross_.end();) {
    auto& h = it->second;
    const Tick t_f = *h.newest();
    if (t_f > t_o) {
      ++it;
      continue;
    }
    if (stale_.count(it->first) || lost(t_f)) {
      it = cross_.erase(it);
      continue;
    }
    if (t_m > t_f) {
      MatrixXd S = accumulate_correction(t_f, t_m) * h.back();
      h.insert(t_m, std::move(S));
    }
    ++it;
  }
}

Belief<double> IkfNode::peek_belief_at(Tick t) const {
  if (const auto* b = beliefs_.at(t)) return *b;
  const auto k = beliefs_.key(t, Lookup::FloorStrict);
  if (!k) fail(ErrorCode::HorizonExceeded, "no belief at or before t=" + std::to_string(t));
  return predict(*beliefs_.at(*k), t, VectorXd(), MatrixXd(), nullptr);
}

Belief<double> IkfNode::get_belief_at(Tick t) {
  if (const auto* b = beliefs_.at(t)) return *b;
  const auto k = beliefs_.key(t, Lookup::FloorStrict);
  if (!k) fail(ErrorCode::HorizonExceeded, "no belief at or before t=" + std::to_string(t));
  MatrixXd Phi;
  Belief<double> b = predict(*beliefs_.at(*k), t, VectorXd(), MatrixXd(), &Phi);
  if (cfg_.eager) {
    if (beliefs_.key(t, Lookup::CeilStrict)) fail(ErrorCode::DomainError, "eager node cannot split a span");
    forward_factors_eager(t, Phi);
  } else {
    // splitting an existing span: the later term keeps only its own part
    if (const auto nb = corrections_.key(t, Lookup::CeilStrict)) {
      MatrixXd& later = *corrections_.at(*nb);
      later = Phi.transpose().partialPivLu().solve(later.transpose()).transpose();
    }
    insert_correction(t, Phi);
  }
  beliefs_.insert(t, b);
  return b;
}

void IkfNode::apply_posterior(Tick t, const Belief<double>& posterior, const FactorList& factors) {
  if (posterior.dim() != model_.dim()) fail(ErrorCode::DimensionMismatch, "posterior dimension");
  const Belief<double> prior = get_belief_at(t);
  const MatrixXd Lambda = correction_factor(prior.cov, posterior.cov);
  if (!cfg_.eager) {
    if (!corrections_.at(t)) insert_correction(t, MatrixXd::Identity(model_.dim(), model_.dim()));
    MatrixXd& B = *corrections_.at(t);
    B = Lambda * B;
  }
  auto replaced = [&](NodeId o) {
    return std::any_of(factors.begin(), factors.end(), [&](const auto& f) { return f.first == o; });
  };
  for (auto& [other, h] : cross_) {
    if (replaced(other)) continue;
    if (MatrixXd* S = h.at(t)) *S = Lambda * *S;
  }
  for (const auto& [other, S] : factors) {
    stale_.erase(other);
    cross_.ensure(other).insert(t, S);
  }
  Belief<double> b = posterior;
  b.t = t;
  beliefs_.insert(t, std::move(b));
}

UpdateResult IkfNode::private_update(const MatrixXd& H, const VectorXd& z, const MatrixXd& R, Tick t, Gate gate) {
  const Belief<double>* prior = beliefs_.at(t);
  if (!prior) fail(ErrorCode::MissingBelief, "no belief at t=" + std::to_string(t));
  if (H.cols() != prior->dim() || H.rows() != z.size())
    fail(ErrorCode::DimensionMismatch, "private observation size");
  const StackedPosterior post = stacked_update(prior->mean, prior->cov, H, z, R, gate);
  if (post.rejected) return {*prior, true, post.nis};
  Belief<double> b(t, post.mean, post.cov);
  apply_posterior(t, b, {});
  return {b, false, post.nis};
}

void IkfNode::delete_after(Tick t) {
  beliefs_.delete_after(t);
  corrections_.delete_after(t);
  cross_.delete_after(t);
}

void IkfNode::forget_peer(NodeId other) { stale_.insert(other); }

bool IkfNode::correlated_after(NodeId other, Tick t) const {
  const auto* h = cross_.get(other);
  return h && !h->empty() && *h->newest() > t;
}

std::vector<NodeId> IkfNode::peers() const {
  std::vector<NodeId> v;
  for (const auto& [other, h] : cross_) v.push_back(other);
  return v;
}

std::optional<MatrixXd> cross_covariance(const IkfNode& a, const IkfNode& b, Tick t) {
  auto sa = a.peek_cross_factor(b.id(), t);
  if (!sa) return std::nullopt;
  auto sb = b.peek_cross_factor(a.id(), t);
  if (!sb) return std::nullopt;
  return MatrixXd(*sa * sb->transpose());
}

StackedPosterior stacked_update(const VectorXd& mean, const MatrixXd& cov, const MatrixXd& H, const VectorXd& z,
                                const MatrixXd& R, Gate gate) {
  if (H.cols() != mean.size() || H.rows() != z.size() || R.rows() != z.size() || R.cols() != z.size())
    fail(ErrorCode::DimensionMismatch, "observation dimensions");
  const MatrixXd PHt = cov * H.transpose();
  const MatrixXd S = symmetrized(MatrixXd(H * PHt + R));
  const VectorXd r = z - H * mean;
  StackedPosterior out;
  Eigen::LDLT<MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-14 * std::abs(S.trace())))
    fail(ErrorCode::SingularInnovation, "innovation covariance not positive definite");
  out.nis = r.dot(ldlt.solve(r));
  if (gate) out.rejected = out.nis > chi2_inv_cdf(*gate, static_cast<int>(r.size()));
  if (out.rejected) return out;
  const MatrixXd K = ldlt.solve(PHt.transpose()).transpose();
  const MatrixXd IKH = MatrixXd::Identity(mean.size(), mean.size()) - K * H;
  out.mean = mean + K * r;
  out.cov = symmetrized(MatrixXd(IKH * cov * IKH.transpose() + K * R * K.transpose()));
  return out;
}

void stack_prior(const std::vector<Belief<double>>& priors,
                 const std::function<std::optional<MatrixXd>(std::size_t, std::size_t)>& cross, VectorXd& mean,
                 MatrixXd& cov, std::vector<Eigen::Index>& offsets) {
  offsets.clear();
  Eigen::Index n = 0;
  for (const auto& b : priors) {
    offsets.push_back(n);
    n += b.dim();
  }
  mean.resize(n);
  cov = MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < priors.size(); ++a) {
    const auto da = priors[a].dim();
    mean.segment(offsets[a], da) = priors[a].mean;
    cov.block(offsets[a], offsets[a], da, da) = priors[a].cov;
    for (std::size_t b = a + 1; b < priors.size(); ++b) {
      const auto db = priors[b].dim();
      if (auto s = cross(a, b)) {
        if (s->rows() != da || s->cols() != db) fail(ErrorCode::DimensionMismatch, "cross block size");
        cov.block(offsets[a], offsets[b], da, db) = *s;
        cov.block(offsets[b], offsets[a], db, da) = s->transpose();
      }
    }
  }
}

MatrixXd stack_blocks(const std::vector<MatrixXd>& blocks) {
  Eigen::Index rows = blocks.empty() ? 0 : blocks.front().rows(), cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) fail(ErrorCode::DimensionMismatch, "observation blocks disagree in rows");
    cols += b.cols();
  }
  MatrixXd H(rows, cols);
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    H.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return H;
}

FactorList participant_factors(const std::vector<NodeId>& ids, const std::vector<Eigen::Index>& offsets,
                               const std::vector<Eigen::Index>& dims, const MatrixXd& post_cov, std::size_t u) {
  FactorList f;
  for (std::size_t v = 0; v < ids.size(); ++v) {
    if (v == u) continue;
    if (v > u)
      f.emplace_back(ids[v], post_cov.block(offsets[u], offsets[v], dims[u], dims[v]));
    else
      f.emplace_back(ids[v], MatrixXd::Identity(dims[u], dims[u]));
  }
  return f;
}

JointOutcome joint_update(const std::vector<IkfNode*>& participants, const std::vector<MatrixXd>& H_blocks,
                          const VectorXd& z, const MatrixXd& R, Tick t, Gate gate, bool commit) {
  if (participants.empty() || participants.size() != H_blocks.size())
    fail(ErrorCode::DimensionMismatch, "participants and observation blocks disagree");
  std::vector<Belief<double>> priors;
  std::vector<NodeId> ids;
  std::vector<Eigen::Index> dims;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (participants[j]->id() == participants[i]->id()) fail(ErrorCode::DuplicateId, "participant listed twice");
    priors.push_back(participants[i]->peek_belief_at(t));
    ids.push_back(participants[i]->id());
    dims.push_back(priors.back().dim());
    if (H_blocks[i].cols() != dims.back()) fail(ErrorCode::DimensionMismatch, "observation block width");
  }
  VectorXd mean;
  MatrixXd cov;
  std::vector<Eigen::Index> offsets;
  stack_prior(priors, [&](std::size_t a, std::size_t b) { return cross_covariance(*participants[a], *participants[b], t); },
              mean, cov, offsets);
  const StackedPosterior post = stacked_update(mean, cov, stack_blocks(H_blocks), z, R, gate);
  JointOutcome out;
  out.rejected = post.rejected;
  out.nis = post.nis;
  if (post.rejected || !commit) {
    out.posteriors = priors;
    return out;
  }
  for (std::size_t u = 0; u < participants.size(); ++u) {
    Belief<double> b(t, post.mean.segment(offsets[u], dims[u]), post.cov.block(offsets[u], offsets[u], dims[u], dims[u]));
    participants[u]->apply_posterior(t, b, participant_factors(ids, offsets, dims, post.cov, u));
    out.posteriors.push_back(std::move(b));
  }
  return out;
}

}  // namespace ikf
