#include "ikf/reference.hpp"

#include "ikf/node.hpp"

namespace ikf {

const BlockLayout& FullState::block(NodeId id) const { return layout[index(id)]; }

std::size_t FullState::index(NodeId id) const {
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (layout[i].id == id) return i;
  fail(ErrorCode::UnknownNode, "node " + std::to_string(id) + " not in full state");
}

FullState make_full_state(const std::vector<NodeSetup>& nodes, Tick t) {
  FullState s;
  s.t = t;
  Eigen::Index n = 0;
  for (const auto& nd : nodes) {
    s.layout.push_back({nd.id, n, nd.model.dim()});
    n += nd.model.dim();
  }
  s.mean = VectorXd::Zero(n);
  s.cov = MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& b = s.layout[i];
    if (nodes[i].x0.size() != b.dim || nodes[i].Sigma0.rows() != b.dim)
      fail(ErrorCode::DimensionMismatch, "node prior size");
    s.mean.segment(b.offset, b.dim) = nodes[i].x0;
    s.cov.block(b.offset, b.offset, b.dim, b.dim) = nodes[i].Sigma0;
  }
  return s;
}

FullState centralized_predict(const FullState& s, const std::vector<MatrixXd>& Phi, const std::vector<MatrixXd>& Q,
                              const std::vector<VectorXd>& offset) {
  if (Phi.size() != s.layout.size() || Q.size() != s.layout.size() ||
      (!offset.empty() && offset.size() != s.layout.size()))
    fail(ErrorCode::DimensionMismatch, "one transition per block");
  FullState out = s;
  for (std::size_t i = 0; i < s.layout.size(); ++i) {
    const auto& b = s.layout[i];
    if (Phi[i].rows() != b.dim || Phi[i].cols() != b.dim || Q[i].rows() != b.dim || Q[i].cols() != b.dim)
      fail(ErrorCode::DimensionMismatch, "transition block size");
    out.mean.segment(b.offset, b.dim) = Phi[i] * out.mean.segment(b.offset, b.dim);
    if (!offset.empty()) out.mean.segment(b.offset, b.dim) += offset[i];
    out.cov.middleRows(b.offset, b.dim) = Phi[i] * out.cov.middleRows(b.offset, b.dim);
    out.cov.middleCols(b.offset, b.dim) = out.cov.middleCols(b.offset, b.dim) * Phi[i].transpose();
  }
  for (std::size_t i = 0; i < s.layout.size(); ++i) {
    const auto& b = s.layout[i];
    out.cov.block(b.offset, b.offset, b.dim, b.dim) += Q[i];
  }
  out.cov = symmetrized(out.cov);
  return out;
}

FullState centralized_update(const FullState& s, const MatrixXd& H, const VectorXd& z, const MatrixXd& R) {
  if (H.rows() == 0) return s;
  if (H.cols() != s.mean.size()) fail(ErrorCode::DimensionMismatch, "H must span the full state");
  const StackedPosterior post = stacked_update(s.mean, s.cov, H, z, R, std::nullopt);
  FullState out = s;
  out.mean = post.mean;
  out.cov = post.cov;
  return out;
}

std::vector<Belief<double>> naive_update(const std::vector<Belief<double>>& nodes, const std::vector<MatrixXd>& H_blocks,
                                         const VectorXd& z, const MatrixXd& R) {
  if (nodes.size() != H_blocks.size()) fail(ErrorCode::DimensionMismatch, "one block per node");
  VectorXd mean;
  MatrixXd cov;
  std::vector<Eigen::Index> offsets;
  stack_prior(nodes, [](std::size_t, std::size_t) { return std::optional<MatrixXd>(); }, mean, cov, offsets);
  const StackedPosterior post = stacked_update(mean, cov, stack_blocks(H_blocks), z, R, std::nullopt);
  std::vector<Belief<double>> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto d = nodes[i].dim();
    out.emplace_back(nodes[i].t, post.mean.segment(offsets[i], d), post.cov.block(offsets[i], offsets[i], d, d));
  }
  return out;
}

CentralizedFilter::CentralizedFilter(const std::vector<NodeSetup>& nodes, Tick t0) : s_(make_full_state(nodes, t0)) {
  for (const auto& nd : nodes) {
    models_.push_back(nd.model);
    times_.push_back(t0);
  }
}

const LinearModel* CentralizedFilter::model(NodeId id) const {
  for (std::size_t i = 0; i < s_.layout.size(); ++i)
    if (s_.layout[i].id == id) return &models_[i];
  return nullptr;
}

void CentralizedFilter::advance(NodeId id, Tick t, const VectorXd& u, const MatrixXd& q) {
  const std::size_t i = s_.index(id);
  if (t < times_[i]) fail(ErrorCode::NonMonotoneTime, "centralized oracle runs in order");
  if (t == times_[i]) return;
  const auto tr = models_[i].over(t - times_[i], u, q);
  const auto& b = s_.layout[i];
  s_.mean.segment(b.offset, b.dim) = tr.Phi * s_.mean.segment(b.offset, b.dim) + tr.offset;
  s_.cov.middleRows(b.offset, b.dim) = tr.Phi * s_.cov.middleRows(b.offset, b.dim);
  s_.cov.middleCols(b.offset, b.dim) = s_.cov.middleCols(b.offset, b.dim) * tr.Phi.transpose();
  s_.cov.block(b.offset, b.offset, b.dim, b.dim) += tr.Q;
  s_.cov = symmetrized(s_.cov);
  times_[i] = t;
  s_.t = std::max(s_.t, t);
}

void CentralizedFilter::process(const MeasData& m) {
  if (m.type == MeasType::Propagation) {
    advance(m.sensor, m.t, m.z, m.R);
    return;
  }
  const std::vector<NodeId> parts = is_joint(m.type) ? m.participants : std::vector<NodeId>{m.sensor};
  const auto blocks = observation_blocks(m, [this](NodeId id) { return model(id); });
  MatrixXd H = MatrixXd::Zero(m.z.size(), s_.mean.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    advance(parts[k], m.t);
    const auto& b = s_.block(parts[k]);
    H.middleCols(b.offset, b.dim) = blocks[k];
  }
  s_ = centralized_update(s_, H, m.z, m.R);
}

Belief<double> CentralizedFilter::belief(NodeId id) const {
  const std::size_t i = s_.index(id);
  const auto& b = s_.layout[i];
  return Belief<double>(times_[i], s_.mean.segment(b.offset, b.dim), s_.cov.block(b.offset, b.offset, b.dim, b.dim));
}

MatrixXd CentralizedFilter::cross(NodeId a, NodeId b) const {
  const auto& ba = s_.block(a);
  const auto& bb = s_.block(b);
  return s_.cov.block(ba.offset, bb.offset, ba.dim, bb.dim);
}

NaiveFilter::NaiveFilter(const std::vector<NodeSetup>& nodes, Tick t0) {
  for (const auto& nd : nodes) {
    models_.emplace(nd.id, nd.model);
    beliefs_.emplace(nd.id, Belief<double>(t0, nd.x0, nd.Sigma0));
  }
}

void NaiveFilter::advance(NodeId id, Tick t, const VectorXd& u, const MatrixXd& q) {
  Belief<double>& b = beliefs_.at(id);
  if (t < b.t) fail(ErrorCode::NonMonotoneTime, "naive filter runs in order");
  if (t == b.t) return;
  const auto tr = models_.at(id).over(t - b.t, u, q);
  b = Belief<double>(t, tr.Phi * b.mean + tr.offset, tr.Phi * b.cov * tr.Phi.transpose() + tr.Q);
}

void NaiveFilter::process(const MeasData& m) {
  if (m.type == MeasType::Propagation) {
    advance(m.sensor, m.t, m.z, m.R);
    return;
  }
  const std::vector<NodeId> parts = is_joint(m.type) ? m.participants : std::vector<NodeId>{m.sensor};
  const auto blocks = observation_blocks(m, [this](NodeId id) {
    auto it = models_.find(id);
    return it == models_.end() ? nullptr : &it->second;
  });
  std::vector<Belief<double>> priors;
  for (NodeId id : parts) {
    advance(id, m.t);
    priors.push_back(beliefs_.at(id));
  }
  const auto post = naive_update(priors, blocks, m.z, m.R);
  for (std::size_t k = 0; k < parts.size(); ++k) beliefs_.at(parts[k]) = post[k];
}

}  // namespace ikf
