#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ikf/meas.hpp"
#include "ikf/node.hpp"
#include "ikf/simulate.hpp"

namespace ikf {

enum class RedoMode { Broadcast, PostCorrelated };

struct HandlerConfig {
  Tick horizon = 0;  // measurement log horizon; delays beyond horizon/2 are refused
  Gate gate = kDefaultGate;
  RedoMode redo = RedoMode::Broadcast;
};

// Position of a measurement in the replay order.
struct LogKey {
  Tick t = 0;
  int rank = 0;
  NodeId sensor = 0;
  std::vector<NodeId> participants;
  std::uint64_t seq = 0;

  auto operator<=>(const LogKey&) const = default;
};

LogKey log_key(const MeasData& m, std::uint64_t seq);

struct LogEntry {
  MeasData m;
  LogKey key;
  bool rejected = false;
  double nis = 0.0;
  std::string reason;
};

struct Outcome {
  bool rejected = false;
  double nis = 0.0;
  std::string reason;
};

// Nodes touched by a measurement: the sensor, or the participants of a joint.
std::vector<NodeId> involved(const MeasData& m);

class FusionHandler;

// Hooks into the collaborative layer; a standalone handler has none.
class RemoteLink {
 public:
  virtual ~RemoteLink() = default;
  virtual std::uint64_t next_seq() = 0;
  virtual std::optional<LogKey> newest_key() const = 0;
  virtual Outcome interagent_joint(FusionHandler& master, const MeasData& m, bool apply) = 0;
  virtual void replay_from(FusionHandler& initiator, const MeasData& m) = 0;
};

class FusionHandler {
 public:
  explicit FusionHandler(AgentId agent = 0, HandlerConfig cfg = {});

  AgentId agent() const { return agent_; }
  const HandlerConfig& config() const { return cfg_; }

  void register_node(IkfNode node);
  IkfNode& add_node(const NodeSetup& setup, NodeConfig cfg = {});
  void remove_node(NodeId id);
  bool has_node(NodeId id) const { return nodes_.count(id) > 0; }
  IkfNode& node(NodeId id);
  const IkfNode& node(NodeId id) const;
  std::vector<NodeId> node_ids() const;

  // Returns true when the measurement was rejected.
  bool process_measurement(const MeasData& m);
  void redo_updates_after(Tick t);

  // Dispatch without logging or replay; `apply` false only evaluates the gate.
  Outcome apply(const MeasData& m, bool apply = true);
  // delete_after(t) on every node (or only `only` when given).
  void rewind(Tick t, const std::set<NodeId>* only = nullptr);
  std::vector<LogEntry*> log_from(Tick t);
  std::optional<LogKey> newest_key() const { return newest_; }
  std::size_t log_size() const;
  std::vector<LogEntry> log() const;

  // Nodes correlated after t, closed transitively from `seed` over the local nodes.
  std::set<NodeId> post_correlated(const std::vector<NodeId>& seed, Tick t) const;

  const LinearModel* model_of(NodeId id) const;

  void attach(RemoteLink* link) { link_ = link; }
  RemoteLink* link() const { return link_; }

 private:
  Outcome apply_private(const MeasData& m, bool apply);
  Outcome apply_joint(const MeasData& m, bool apply);
  void replay_local(const MeasData& m);
  void record(LogEntry e);

  AgentId agent_;
  HandlerConfig cfg_;
  std::map<NodeId, IkfNode> nodes_;
  TimedHistory<std::vector<LogEntry>> log_;
  std::optional<LogKey> newest_;
  std::uint64_t seq_ = 0;
  RemoteLink* link_ = nullptr;
};

}  // namespace ikf
