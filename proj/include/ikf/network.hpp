#pragma once

#include <array>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikf/handler.hpp"

namespace ikf {

enum class MsgKind { ReqIdList, ReqBeliefAndFactors, PushCorrection, PushRedoAfter };

const char* to_string(MsgKind k);

struct WireMessage {
  MsgKind kind = MsgKind::ReqIdList;
  AgentId from = 0;
  AgentId to = 0;
  nlohmann::json body;
};

// Deterministic in-process link. Requests resolve synchronously and count once per
// round trip; pushes queue FIFO until pumped.
class Bus {
 public:
  using RangeFn = std::function<bool(AgentId, AgentId, Tick)>;

  void set_range(RangeFn f) { range_ = std::move(f); }
  bool in_range(AgentId a, AgentId b, Tick t) const { return !range_ || range_(a, b, t); }

  void request(const WireMessage& req, const nlohmann::json& reply);
  void post(WireMessage m);
  std::optional<WireMessage> pop();
  bool idle() const { return queue_.empty(); }

  std::size_t count(MsgKind k) const { return counts_[static_cast<std::size_t>(k)]; }
  std::size_t total() const;
  // Numeric payload elements carried by messages of kind k (replies included).
  std::size_t elements(MsgKind k) const { return elements_[static_cast<std::size_t>(k)]; }
  void reset_counts();

  void set_trace(bool on) { tracing_ = on; }
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  void log(const WireMessage& m, const char* dir, const nlohmann::json* body);

  RangeFn range_;
  std::deque<WireMessage> queue_;
  std::array<std::size_t, 4> counts_{};
  std::array<std::size_t, 4> elements_{};
  bool tracing_ = false;
  std::vector<std::string> trace_;
};

struct RemoteBelief {
  Belief<double> belief;
  std::map<NodeId, MatrixXd> factors;
  LinearModel model;  // only the observation rows travel
};

class Network : public RemoteLink {
 public:
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  FusionHandler& add_agent(AgentId a, HandlerConfig cfg = {});
  FusionHandler& handler(AgentId a);
  const FusionHandler& handler(AgentId a) const;
  std::vector<AgentId> agents() const;
  Bus& bus() { return bus_; }
  const Bus& bus() const { return bus_; }

  void refresh_lookup(AgentId a);
  void refresh_all();
  const std::map<NodeId, AgentId>& lookup(AgentId a) const;

  // Agent that actually hosts the node, if any.
  std::optional<AgentId> owner(NodeId id) const;
  // Owner of the sensor, or for joints the lowest agent id among the participants' owners.
  AgentId route(const MeasData& m) const;

  bool submit(const MeasData& m);
  bool submit(AgentId a, const MeasData& m);

  RemoteBelief get_others_belief(AgentId a, NodeId target, const std::vector<NodeId>& participants, Tick t);
  void push_redo_after(AgentId from, Tick t);
  void pump();

  std::uint64_t next_seq() override { return ++seq_; }
  std::optional<LogKey> newest_key() const override;
  Outcome interagent_joint(FusionHandler& master, const MeasData& m, bool apply) override;
  void replay_from(FusionHandler& initiator, const MeasData& m) override;

 private:
  void deliver(const WireMessage& m);
  nlohmann::json serve_belief(AgentId a, NodeId target, const std::vector<NodeId>& participants, Tick t) const;
  std::set<NodeId> post_correlated(const std::vector<NodeId>& seed, Tick t) const;

  std::map<AgentId, std::unique_ptr<FusionHandler>> handlers_;
  std::map<AgentId, std::map<NodeId, AgentId>> tables_;
  Bus bus_;
  std::uint64_t seq_ = 0;
};

}  // namespace ikf
