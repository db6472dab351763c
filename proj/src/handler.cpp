#include "ikf/handler.hpp"

#include <algorithm>

namespace ikf {

LogKey log_key(const MeasData& m, std::uint64_t seq) {
  return {m.t, type_rank(m.type), m.sensor, m.participants, seq};
}

std::vector<NodeId> involved(const MeasData& m) {
  return is_joint(m.type) ? m.participants : std::vector<NodeId>{m.sensor};
}

FusionHandler::FusionHandler(AgentId agent, HandlerConfig cfg) : agent_(agent), cfg_(cfg), log_(cfg.horizon) {
  if (cfg_.horizon < 0) fail(ErrorCode::DomainError, "negative horizon");
}

void FusionHandler::register_node(IkfNode node) {
  const NodeId id = node.id();
  if (nodes_.count(id)) fail(ErrorCode::DuplicateId, "node " + std::to_string(id) + " already registered");
  nodes_.emplace(id, std::move(node));
}

IkfNode& FusionHandler::add_node(const NodeSetup& s, NodeConfig cfg) {
  register_node(IkfNode(s.id, s.model, Belief<double>(0, s.x0, s.Sigma0), cfg));
  return nodes_.at(s.id);
}

void FusionHandler::remove_node(NodeId id) {
  if (!nodes_.erase(id)) fail(ErrorCode::UnknownSensor, "node " + std::to_string(id) + " not registered");
  for (auto& [other, n] : nodes_) n.forget_peer(id);
}

IkfNode& FusionHandler::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorCode::UnknownSensor, "node " + std::to_string(id) + " not registered");
  return it->second;
}

const IkfNode& FusionHandler::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorCode::UnknownSensor, "node " + std::to_string(id) + " not registered");
  return it->second;
}

std::vector<NodeId> FusionHandler::node_ids() const {
  std::vector<NodeId> v;
  for (const auto& [id, n] : nodes_) v.push_back(id);
  return v;
}

const LinearModel* FusionHandler::model_of(NodeId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second.model();
}

Outcome FusionHandler::apply_private(const MeasData& m, bool apply) {
  IkfNode& n = node(m.sensor);
  const Belief<double> prior = n.peek_belief_at(m.t);
  const MatrixXd H = observation_blocks(m, [this](NodeId id) { return model_of(id); })[0];
  const StackedPosterior post = stacked_update(prior.mean, prior.cov, H, m.z, m.R, cfg_.gate);
  if (post.rejected) return {true, post.nis, "nis"};
  if (apply) n.apply_posterior(m.t, Belief<double>(m.t, post.mean, post.cov), {});
  return {false, post.nis, ""};
}

Outcome FusionHandler::apply_joint(const MeasData& m, bool apply) {
  const bool local = std::all_of(m.participants.begin(), m.participants.end(),
                                 [this](NodeId id) { return has_node(id); });
  if (!local) {
    if (!link_) fail(ErrorCode::UnknownSensor, "joint participant not registered on this agent");
    return link_->interagent_joint(*this, m, apply);
  }
  std::vector<IkfNode*> parts;
  for (NodeId id : m.participants) parts.push_back(&nodes_.at(id));
  const auto blocks = observation_blocks(m, [this](NodeId id) { return model_of(id); });
  const JointOutcome j = joint_update(parts, blocks, m.z, m.R, m.t, cfg_.gate, apply);
  return {j.rejected, j.nis, j.rejected ? "nis" : ""};
}

Outcome FusionHandler::apply(const MeasData& m, bool apply) {
  switch (m.type) {
    case MeasType::Propagation: {
      IkfNode& n = node(m.sensor);
      if (!apply) return {};
      if (n.beliefs().at(m.t)) fail(ErrorCode::NonMonotoneTime, "node already holds a belief at t");
      const auto t_prev = n.beliefs().key(m.t, Lookup::FloorStrict);
      if (!t_prev) fail(ErrorCode::HorizonExceeded, "no belief before t=" + std::to_string(m.t));
      n.propagate(m.z, *t_prev, m.t, m.R);
      return {};
    }
    case MeasType::Private: return apply_private(m, apply);
    default: return apply_joint(m, apply);
  }
}

void FusionHandler::record(LogEntry e) {
  if (!newest_ || *newest_ < e.key) newest_ = e.key;
  const Tick t = e.m.t;
  if (auto* v = log_.at(t))
    v->push_back(std::move(e));
  else
    log_.insert(t, {std::move(e)});
}

std::vector<LogEntry*> FusionHandler::log_from(Tick t) {
  std::vector<LogEntry*> out;
  for (auto it = log_.begin(); it != log_.end(); ++it)
    if (it->first >= t)
      for (auto& e : it->second) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const LogEntry* a, const LogEntry* b) { return a->key < b->key; });
  return out;
}

std::size_t FusionHandler::log_size() const {
  std::size_t n = 0;
  for (const auto& [t, v] : log_) n += v.size();
  return n;
}

std::vector<LogEntry> FusionHandler::log() const {
  std::vector<LogEntry> out;
  for (const auto& [t, v] : log_) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end(), [](const LogEntry& a, const LogEntry& b) { return a.key < b.key; });
  return out;
}

void FusionHandler::rewind(Tick t, const std::set<NodeId>* only) {
  for (auto& [id, n] : nodes_) {
    if (only && !only->count(id)) continue;
    const auto oldest = n.beliefs().oldest();
    if (!oldest || *oldest > t) fail(ErrorCode::HorizonExceeded, "rewind before the retained belief history");
    n.delete_after(t);
  }
}

std::set<NodeId> FusionHandler::post_correlated(const std::vector<NodeId>& seed, Tick t) const {
  std::set<NodeId> s;
  for (NodeId id : seed)
    if (has_node(id)) s.insert(id);
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [id, n] : nodes_) {
      if (s.count(id)) continue;
      for (NodeId v : s) {
        if (n.correlated_after(v, t) || nodes_.at(v).correlated_after(id, t)) {
          s.insert(id);
          grew = true;
          break;
        }
      }
    }
  }
  return s;
}

void FusionHandler::replay_local(const MeasData& m) {
  const Tick t = m.t - 1;
  std::optional<std::set<NodeId>> only;
  if (cfg_.redo == RedoMode::PostCorrelated) only = post_correlated(involved(m), t);
  rewind(t, only ? &*only : nullptr);
  for (LogEntry* e : log_from(m.t)) {
    const auto ids = involved(e->m);
    if (only && !std::all_of(ids.begin(), ids.end(), [&](NodeId id) { return only->count(id) > 0; })) continue;
    if (!std::all_of(ids.begin(), ids.end(), [this](NodeId id) { return has_node(id); })) {
      e->rejected = true;
      e->reason = "removed";
      continue;
    }
    const Outcome o = apply(e->m);
    e->rejected = o.rejected;
    e->nis = o.nis;
    e->reason = o.reason;
  }
}

bool FusionHandler::process_measurement(const MeasData& m) {
  m.validate();
  if (!is_joint(m.type) && !has_node(m.sensor))
    fail(ErrorCode::UnknownSensor, "sensor " + std::to_string(m.sensor) + " not registered");
  const LogKey key = log_key(m, link_ ? link_->next_seq() : ++seq_);
  const std::optional<LogKey> newest = link_ ? link_->newest_key() : newest_;
  if (!newest || !(key < *newest)) {
    Outcome o;
    try {
      o = apply(m);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unreachable) throw;
      o = {true, 0.0, "unreachable"};
    }
    record({m, key, o.rejected, o.nis, o.reason});
    return o.rejected;
  }
  if (cfg_.horizon > 0 && newest->t - m.t > cfg_.horizon / 2)
    fail(ErrorCode::HorizonExceeded, "delay of " + std::to_string(newest->t - m.t) + " ticks exceeds half the horizon");
  Outcome pre;
  try {
    pre = apply(m, false);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Unreachable) throw;
    pre = {true, 0.0, "unreachable"};
  }
  record({m, key, pre.rejected, pre.nis, pre.reason});
  if (pre.rejected) return true;
  if (link_)
    link_->replay_from(*this, m);
  else
    replay_local(m);
  for (const LogEntry* e : log_from(m.t))
    if (e->key == key) return e->rejected;
  return false;
}

void FusionHandler::redo_updates_after(Tick t) {
  rewind(t);
  for (LogEntry* e : log_from(t + 1)) {
    const auto ids = involved(e->m);
    if (!std::all_of(ids.begin(), ids.end(), [this](NodeId id) { return has_node(id); })) {
      e->rejected = true;
      e->reason = "removed";
      continue;
    }
    const Outcome o = apply(e->m);
    e->rejected = o.rejected;
    e->nis = o.nis;
    e->reason = o.reason;
  }
}

}  // namespace ikf
