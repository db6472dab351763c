#include "ikf/replay.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "ikf/network.hpp"

namespace ikf {

std::vector<MeasData> inject_delays(const std::vector<MeasData>& stream, const std::map<NodeId, Tick>& delays) {
  std::vector<Tick> arrival(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    auto it = delays.find(stream[i].sensor);
    if (it != delays.end() && it->second < 0) fail(ErrorCode::ConfigError, "negative delay");
    arrival[i] = stream[i].t + (it == delays.end() ? 0 : it->second);
  }
  std::vector<std::size_t> order(stream.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return arrival[a] < arrival[b]; });
  std::vector<MeasData> out;
  out.reserve(stream.size());
  for (std::size_t i : order) out.push_back(stream[i]);
  return out;
}

namespace {

std::map<NodeId, Belief<double>> finals(const FusionHandler& h) {
  std::map<NodeId, Belief<double>> out;
  for (NodeId id : h.node_ids()) out.emplace(id, h.node(id).latest());
  return out;
}

double divergence(const std::map<NodeId, Belief<double>>& a, const std::map<NodeId, Belief<double>>& b) {
  double d = 0.0;
  for (const auto& [id, x] : a) {
    auto it = b.find(id);
    if (it == b.end() || it->second.t != x.t) return std::numeric_limits<double>::infinity();
    d = std::max(d, (x.mean - it->second.mean).cwiseAbs().maxCoeff());
    d = std::max(d, (x.cov - it->second.cov).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace

ReplayResult run_replay(const std::vector<NodeSetup>& nodes, const std::vector<MeasData>& stream,
                        const ReplaySpec& spec) {
  HandlerConfig hc;
  hc.horizon = spec.horizon;
  hc.gate = spec.gate;
  ReplayResult r;
  r.measurements = stream.size();
  for (const auto& m : stream)
    if (auto it = spec.delays.find(m.sensor); it != spec.delays.end() && it->second > 0) ++r.delayed;
  const auto arrival = inject_delays(stream, spec.delays);

  if (spec.per_agent) {
    Network net;
    net.bus().set_trace(spec.trace);
    for (const auto& nd : nodes) net.add_agent(nd.id, hc).add_node(nd, spec.node);
    net.refresh_all();
    for (const auto& m : arrival) r.rejected += net.submit(m);
    r.messages = net.bus().total();
    r.trace = net.bus().trace();
    for (const auto& nd : nodes) r.delayed_beliefs.emplace(nd.id, net.handler(nd.id).node(nd.id).latest());
  } else {
    FusionHandler h(0, hc);
    for (const auto& nd : nodes) h.add_node(nd, spec.node);
    for (const auto& m : arrival) r.rejected += h.process_measurement(m);
    r.delayed_beliefs = finals(h);
  }

  std::vector<MeasData> sorted = stream;
  std::stable_sort(sorted.begin(), sorted.end(), meas_before);
  FusionHandler oracle(0, hc);
  for (const auto& nd : nodes) oracle.add_node(nd, spec.node);
  for (const auto& m : sorted) oracle.process_measurement(m);
  r.oracle_beliefs = finals(oracle);
  r.max_divergence = divergence(r.delayed_beliefs, r.oracle_beliefs);
  return r;
}

}  // namespace ikf
