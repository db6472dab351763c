#include "ikf/network.hpp"

#include <algorithm>

namespace ikf {

using nlohmann::json;

namespace {

json mat_json(const MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

MatrixXd json_mat(const json& j) {
  if (j.empty()) return MatrixXd();
  MatrixXd m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

json vec_json(const VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

VectorXd json_vec(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

std::size_t count_numbers(const json& j) {
  if (j.is_number_float()) return 1;
  std::size_t n = 0;
  if (j.is_structured())
    for (const auto& e : j) n += count_numbers(e);
  return n;
}

json factors_json(const FactorList& f) {
  json j = json::array();
  for (const auto& [id, S] : f) j.push_back({{"peer", id}, {"S", mat_json(S)}});
  return j;
}

}  // namespace

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::ReqIdList: return "req_id_list";
    case MsgKind::ReqBeliefAndFactors: return "req_belief_and_factors";
    case MsgKind::PushCorrection: return "push_correction";
    case MsgKind::PushRedoAfter: return "push_redo_after";
  }
  return "?";
}

void Bus::log(const WireMessage& m, const char* dir, const json* body) {
  if (!tracing_) return;
  json j = {{"dir", dir}, {"kind", to_string(m.kind)}, {"from", m.from}, {"to", m.to}, {"body", body ? *body : m.body}};
  const std::string s = j.dump();
  trace_.push_back(std::to_string(s.size()) + ":" + s);
}

void Bus::request(const WireMessage& req, const json& reply) {
  const auto k = static_cast<std::size_t>(req.kind);
  ++counts_[k];
  elements_[k] += count_numbers(req.body) + count_numbers(reply);
  log(req, "request", nullptr);
  log(req, "reply", &reply);
}

void Bus::post(WireMessage m) {
  const auto k = static_cast<std::size_t>(m.kind);
  ++counts_[k];
  elements_[k] += count_numbers(m.body);
  log(m, "push", nullptr);
  queue_.push_back(std::move(m));
}

std::optional<WireMessage> Bus::pop() {
  if (queue_.empty()) return std::nullopt;
  WireMessage m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::size_t Bus::total() const {
  std::size_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

void Bus::reset_counts() {
  counts_.fill(0);
  elements_.fill(0);
}

FusionHandler& Network::add_agent(AgentId a, HandlerConfig cfg) {
  if (handlers_.count(a)) fail(ErrorCode::DuplicateId, "agent " + std::to_string(a) + " already exists");
  auto h = std::make_unique<FusionHandler>(a, cfg);
  h->attach(this);
  return *handlers_.emplace(a, std::move(h)).first->second;
}

FusionHandler& Network::handler(AgentId a) {
  auto it = handlers_.find(a);
  if (it == handlers_.end()) fail(ErrorCode::UnknownNode, "no agent " + std::to_string(a));
  return *it->second;
}

const FusionHandler& Network::handler(AgentId a) const {
  auto it = handlers_.find(a);
  if (it == handlers_.end()) fail(ErrorCode::UnknownNode, "no agent " + std::to_string(a));
  return *it->second;
}

std::vector<AgentId> Network::agents() const {
  std::vector<AgentId> v;
  for (const auto& [a, h] : handlers_) v.push_back(a);
  return v;
}

void Network::refresh_lookup(AgentId a) {
  FusionHandler& self = handler(a);
  const Tick now = newest_key() ? newest_key()->t : 0;
  auto& table = tables_[a];
  table.clear();
  for (NodeId id : self.node_ids()) table[id] = a;
  for (const auto& [b, h] : handlers_) {
    if (b == a || !bus_.in_range(a, b, now)) continue;
    const auto ids = h->node_ids();
    bus_.request({MsgKind::ReqIdList, a, b, json::object()}, json(ids));
    for (NodeId id : ids) table.emplace(id, b);
  }
}

void Network::refresh_all() {
  for (const auto& [a, h] : handlers_) refresh_lookup(a);
}

const std::map<NodeId, AgentId>& Network::lookup(AgentId a) const {
  static const std::map<NodeId, AgentId> empty;
  auto it = tables_.find(a);
  return it == tables_.end() ? empty : it->second;
}

std::optional<AgentId> Network::owner(NodeId id) const {
  for (const auto& [a, h] : handlers_)
    if (h->has_node(id)) return a;
  return std::nullopt;
}

AgentId Network::route(const MeasData& m) const {
  std::optional<AgentId> best;
  for (NodeId id : involved(m)) {
    const auto o = owner(id);
    if (!o) fail(ErrorCode::UnknownSensor, "node " + std::to_string(id) + " is not hosted by any agent");
    if (!best || *o < *best) best = o;
  }
  return *best;
}

bool Network::submit(const MeasData& m) { return submit(route(m), m); }

bool Network::submit(AgentId a, const MeasData& m) {
  const bool rejected = handler(a).process_measurement(m);
  pump();
  return rejected;
}

std::optional<LogKey> Network::newest_key() const {
  std::optional<LogKey> k;
  for (const auto& [a, h] : handlers_) {
    const auto n = h->newest_key();
    if (n && (!k || *k < *n)) k = n;
  }
  return k;
}

json Network::serve_belief(AgentId a, NodeId target, const std::vector<NodeId>& participants, Tick t) const {
  const IkfNode& n = handler(a).node(target);
  const Belief<double> b = n.peek_belief_at(t);
  json factors = json::array();
  for (NodeId q : participants) {
    if (q == target) continue;
    if (auto S = n.peek_cross_factor(q, t)) factors.push_back({{"peer", q}, {"S", mat_json(*S)}});
  }
  return {{"mean", vec_json(b.mean)}, {"cov", mat_json(b.cov)}, {"factors", factors},
          {"H_priv", mat_json(n.model().H_priv)}, {"H_pos", mat_json(n.model().H_pos)}};
}

RemoteBelief Network::get_others_belief(AgentId a, NodeId target, const std::vector<NodeId>& participants, Tick t) {
  FusionHandler& self = handler(a);
  if (self.has_node(target)) {
    const IkfNode& n = self.node(target);
    RemoteBelief r{n.peek_belief_at(t), {}, n.model()};
    for (NodeId q : participants)
      if (q != target)
        if (auto S = n.peek_cross_factor(q, t)) r.factors.emplace(q, std::move(*S));
    return r;
  }
  auto resolve = [&]() -> std::optional<AgentId> {
    const auto& table = lookup(a);
    auto it = table.find(target);
    if (it == table.end() || !handlers_.count(it->second) || !handlers_.at(it->second)->has_node(target))
      return std::nullopt;
    return it->second;
  };
  auto b = resolve();
  if (!b) {
    refresh_lookup(a);
    b = resolve();
  }
  if (!b) fail(ErrorCode::UnknownSensor, "node " + std::to_string(target) + " not found on any reachable agent");
  if (!bus_.in_range(a, *b, t)) fail(ErrorCode::Unreachable, "agent " + std::to_string(*b) + " out of range");
  const json req = {{"node", target}, {"t", t}, {"participants", participants}};
  const json reply = serve_belief(*b, target, participants, t);
  bus_.request({MsgKind::ReqBeliefAndFactors, a, *b, req}, reply);
  RemoteBelief r{Belief<double>(t, json_vec(reply["mean"]), json_mat(reply["cov"])), {}, {}};
  r.model.H_priv = json_mat(reply["H_priv"]);
  r.model.H_pos = json_mat(reply["H_pos"]);
  for (const auto& f : reply["factors"]) r.factors.emplace(f["peer"].get<NodeId>(), json_mat(f["S"]));
  return r;
}

Outcome Network::interagent_joint(FusionHandler& master, const MeasData& m, bool apply) {
  const auto& P = m.participants;
  const Tick t = m.t;
  std::vector<NodeId> order = P;
  std::sort(order.begin(), order.end());
  std::map<NodeId, RemoteBelief> got;
  for (NodeId id : order) got.emplace(id, get_others_belief(master.agent(), id, P, t));
  std::vector<Belief<double>> priors;
  for (NodeId id : P) priors.push_back(got.at(id).belief);
  VectorXd mean;
  MatrixXd cov;
  std::vector<Eigen::Index> offsets;
  stack_prior(
      priors,
      [&](std::size_t a, std::size_t b) -> std::optional<MatrixXd> {
        const auto& fa = got.at(P[a]).factors;
        const auto& fb = got.at(P[b]).factors;
        auto ia = fa.find(P[b]);
        auto ib = fb.find(P[a]);
        if (ia == fa.end() || ib == fb.end()) return std::nullopt;
        return MatrixXd(ia->second * ib->second.transpose());
      },
      mean, cov, offsets);
  const auto blocks = observation_blocks(m, [&](NodeId id) { return &got.at(id).model; });
  const StackedPosterior post = stacked_update(mean, cov, stack_blocks(blocks), m.z, m.R, master.config().gate);
  if (!apply) return {post.rejected, post.nis, post.rejected ? "nis" : ""};
  std::vector<Eigen::Index> dims;
  for (const auto& b : priors) dims.push_back(b.dim());
  for (NodeId id : order) {
    const std::size_t u = static_cast<std::size_t>(std::find(P.begin(), P.end(), id) - P.begin());
    const bool local = master.has_node(id);
    if (post.rejected) {
      if (!local)
        bus_.post({MsgKind::PushCorrection, master.agent(), lookup(master.agent()).at(id),
                   {{"node", id}, {"t", t}, {"rejected", true}}});
      continue;
    }
    const Belief<double> b(t, post.mean.segment(offsets[u], dims[u]), post.cov.block(offsets[u], offsets[u], dims[u], dims[u]));
    const FactorList f = participant_factors(P, offsets, dims, post.cov, u);
    if (local) {
      master.node(id).apply_posterior(t, b, f);
    } else {
      bus_.post({MsgKind::PushCorrection, master.agent(), lookup(master.agent()).at(id),
                 {{"node", id}, {"t", t}, {"mean", vec_json(b.mean)}, {"cov", mat_json(b.cov)}, {"factors", factors_json(f)}}});
    }
  }
  pump();
  return {post.rejected, post.nis, post.rejected ? "nis" : ""};
}

void Network::deliver(const WireMessage& m) {
  FusionHandler& h = handler(m.to);
  switch (m.kind) {
    case MsgKind::PushCorrection: {
      if (m.body.value("rejected", false)) return;
      const NodeId id = m.body["node"].get<NodeId>();
      const Tick t = m.body["t"].get<Tick>();
      FactorList f;
      for (const auto& e : m.body["factors"]) f.emplace_back(e["peer"].get<NodeId>(), json_mat(e["S"]));
      h.node(id).apply_posterior(t, Belief<double>(t, json_vec(m.body["mean"]), json_mat(m.body["cov"])), f);
      return;
    }
    case MsgKind::PushRedoAfter: {
      const Tick t = m.body["t"].get<Tick>();
      if (m.body.contains("nodes")) {
        const auto ids = m.body["nodes"].get<std::set<NodeId>>();
        h.rewind(t, &ids);
      } else {
        h.rewind(t);
      }
      return;
    }
    default: fail(ErrorCode::DomainError, "requests are not queued");
  }
}

void Network::pump() {
  while (auto m = bus_.pop()) deliver(*m);
}

void Network::push_redo_after(AgentId from, Tick t) {
  for (const auto& [a, h] : handlers_)
    if (a != from) bus_.post({MsgKind::PushRedoAfter, from, a, {{"t", t}}});
  handler(from).rewind(t);
  pump();
}

std::set<NodeId> Network::post_correlated(const std::vector<NodeId>& seed, Tick t) const {
  std::map<NodeId, const IkfNode*> all;
  for (const auto& [a, h] : handlers_)
    for (NodeId id : h->node_ids()) all.emplace(id, &h->node(id));
  std::set<NodeId> s;
  for (NodeId id : seed)
    if (all.count(id)) s.insert(id);
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [id, n] : all) {
      if (s.count(id)) continue;
      for (NodeId v : s) {
        if (n->correlated_after(v, t) || all.at(v)->correlated_after(id, t)) {
          s.insert(id);
          grew = true;
          break;
        }
      }
    }
  }
  return s;
}

void Network::replay_from(FusionHandler& initiator, const MeasData& m) {
  const Tick t = m.t - 1;
  std::optional<std::set<NodeId>> only;
  if (initiator.config().redo == RedoMode::Broadcast) {
    push_redo_after(initiator.agent(), t);
  } else {
    only = post_correlated(involved(m), t);
    std::map<AgentId, std::set<NodeId>> by_agent;
    for (NodeId id : *only) by_agent[*owner(id)].insert(id);
    for (const auto& [a, ids] : by_agent) {
      if (a == initiator.agent())
        initiator.rewind(t, &ids);
      else
        bus_.post({MsgKind::PushRedoAfter, initiator.agent(), a, {{"t", t}, {"nodes", ids}}});
    }
    pump();
  }
  std::vector<std::pair<LogEntry*, FusionHandler*>> merged;
  for (auto& [a, h] : handlers_)
    for (LogEntry* e : h->log_from(m.t)) merged.emplace_back(e, h.get());
  std::sort(merged.begin(), merged.end(), [](const auto& x, const auto& y) { return x.first->key < y.first->key; });
  for (auto& [e, h] : merged) {
    const auto ids = involved(e->m);
    if (only && !std::all_of(ids.begin(), ids.end(), [&](NodeId id) { return only->count(id) > 0; })) continue;
    Outcome o;
    try {
      o = h->apply(e->m);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::Unreachable)
        o = {true, 0.0, "unreachable"};
      else if (err.code() == ErrorCode::UnknownSensor)
        o = {true, 0.0, "removed"};
      else
        throw;
    }
    e->rejected = o.rejected;
    e->nis = o.nis;
    e->reason = o.reason;
    pump();
  }
}

}  // namespace ikf
