#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ikf/analysis.hpp"
#include "ikf/handler.hpp"
#include "ikf/reference.hpp"

namespace ikf {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Centralized: return "centralized";
    case Strategy::Ikf: return "ikf";
    case Strategy::Naive: return "naive";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "centralized" || s == "C") return Strategy::Centralized;
  if (s == "ikf" || s == "IKF") return Strategy::Ikf;
  if (s == "naive" || s == "Naive") return Strategy::Naive;
  fail(ErrorCode::ConfigError, "unknown strategy '" + s + "'");
}

void McConfig::validate() const {
  if (params.empty()) fail(ErrorCode::ConfigError, "no nodes");
  for (const auto& p : params) p.validate();
  if (runs < 1) fail(ErrorCode::ConfigError, "runs must be positive");
  if (steps < 1) fail(ErrorCode::ConfigError, "steps must be positive");
  if (jobs < 1) fail(ErrorCode::ConfigError, "jobs must be positive");
  if (series_stride < 0) fail(ErrorCode::ConfigError, "negative series stride");
  if (graph.n != static_cast<int>(params.size())) fail(ErrorCode::ConfigError, "graph size differs from node count");
}

McConfig montecarlo_default() {
  McConfig c;
  for (int i = 1; i <= 5; ++i) c.params.push_back(montecarlo_params(i));
  c.graph = chain_graph(5, true);
  return c;
}

namespace {

// Squared error and NEES sums over runs, per node and tick, for one strategy.
struct Sums {
  std::vector<std::vector<double>> se_pos, se_vel, nees_pos, nees_vel;  // [node][k-1]

  Sums(std::size_t nodes, Tick steps)
      : se_pos(nodes, std::vector<double>(static_cast<std::size_t>(steps))),
        se_vel(se_pos),
        nees_pos(se_pos),
        nees_vel(se_pos) {}

  void add(std::size_t i, Tick t, const VectorXd& truth, const Belief<double>& b) {
    const auto k = static_cast<std::size_t>(t - 1);
    const double ep = truth(0) - b.mean(0);
    const double ev = truth(1) - b.mean(1);
    se_pos[i][k] += ep * ep;
    se_vel[i][k] += ev * ev;
    nees_pos[i][k] += ep * ep / b.cov(0, 0);
    nees_vel[i][k] += ev * ev / b.cov(1, 1);
  }

  void merge(const Sums& o) {
    auto acc = [](auto& a, const auto& b) {
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].size(); ++k) a[i][k] += b[i][k];
    };
    acc(se_pos, o.se_pos);
    acc(se_vel, o.se_vel);
    acc(nees_pos, o.nees_pos);
    acc(nees_vel, o.nees_vel);
  }
};

std::uint64_t run_seed(std::uint64_t seed, int run) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(run + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Filter, typename BeliefOf>
void run_filter(Filter f, BeliefOf belief_of, const Simulation& sim, Sums& sums) {
  const auto& stream = sim.stream;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    f(stream[i]);
    if (i + 1 == stream.size() || stream[i + 1].t != stream[i].t) {
      const Tick t = stream[i].t;
      for (std::size_t n = 0; n < sim.ids.size(); ++n)
        sums.add(n, t, sim.truth[n][static_cast<std::size_t>(t)], belief_of(sim.ids[n]));
    }
  }
}

void run_one(const McConfig& cfg, const std::vector<Strategy>& strategies, int run, std::vector<Sums>& sums) {
  const auto nodes = msd_nodes(cfg.params);
  SimOptions opt;
  opt.steps = cfg.steps;
  opt.seed = run_seed(cfg.seed, run);
  opt.sigma_priv = cfg.params.front().sigma_priv;
  opt.sigma_rel = cfg.params.front().sigma_rel;
  opt.sample_x0 = true;
  const Simulation sim = simulate_truth(nodes, cfg.graph, opt);
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    switch (strategies[s]) {
      case Strategy::Centralized: {
        CentralizedFilter c(nodes);
        run_filter([&](const MeasData& m) { c.process(m); }, [&](NodeId id) { return c.belief(id); }, sim, sums[s]);
        break;
      }
      case Strategy::Naive: {
        NaiveFilter nf(nodes);
        run_filter([&](const MeasData& m) { nf.process(m); }, [&](NodeId id) { return nf.belief(id); }, sim, sums[s]);
        break;
      }
      case Strategy::Ikf: {
        HandlerConfig hc;
        hc.horizon = cfg.node.horizon;
        hc.gate = cfg.gate;
        FusionHandler h(0, hc);
        for (const auto& nd : nodes) h.add_node(nd, cfg.node);
        run_filter([&](const MeasData& m) { h.process_measurement(m); },
                   [&](NodeId id) { return h.node(id).latest(); }, sim, sums[s]);
        break;
      }
    }
  }
}

}  // namespace

McReport monte_carlo(const McConfig& cfg, const std::vector<Strategy>& strategies) {
  cfg.validate();
  if (strategies.empty()) fail(ErrorCode::ConfigError, "no strategy selected");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = cfg.params.size();
  const int jobs = std::min(cfg.jobs, cfg.runs);
  std::vector<std::vector<Sums>> partial(static_cast<std::size_t>(jobs),
                                         std::vector<Sums>(strategies.size(), Sums(n, cfg.steps)));
  auto work = [&](int j) {
    // contiguous run blocks keep the reduction order fixed for a given job count
    const int lo = cfg.runs * j / jobs, hi = cfg.runs * (j + 1) / jobs;
    for (int r = lo; r < hi; ++r) run_one(cfg, strategies, r, partial[static_cast<std::size_t>(j)]);
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        try {
          work(j);
        } catch (...) {
          errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (int j = 1; j < jobs; ++j)
    for (std::size_t s = 0; s < strategies.size(); ++s) partial[0][s].merge(partial[static_cast<std::size_t>(j)][s]);

  McReport rep;
  rep.runs = cfg.runs;
  rep.steps = cfg.steps;
  rep.seed = cfg.seed;
  for (std::size_t i = 0; i < n; ++i) rep.ids.push_back(static_cast<NodeId>(i + 1));
  rep.bounds = anees_bounds(1, cfg.runs, 0.05);
  const double M = cfg.runs;
  const double K = static_cast<double>(cfg.steps);
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    const Sums& sm = partial[0][s];
    McStrategyReport sr;
    sr.strategy = strategies[s];
    for (std::size_t i = 0; i < n; ++i) {
      McNodeStats st;
      for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.steps); ++k) {
        st.armse_pos += std::sqrt(sm.se_pos[i][k] / M);
        st.armse_vel += std::sqrt(sm.se_vel[i][k] / M);
        st.anees_pos += sm.nees_pos[i][k] / M;
        st.anees_vel += sm.nees_vel[i][k] / M;
      }
      st.armse_pos /= K;
      st.armse_vel /= K;
      st.anees_pos /= K;
      st.anees_vel /= K;
      sr.nodes.push_back(st);
    }
    if (cfg.series_stride > 0) {
      sr.anees_pos_series.resize(n);
      sr.anees_vel_series.resize(n);
      for (Tick t = 1; t <= cfg.steps; t += cfg.series_stride) {
        sr.series_t.push_back(t);
        const auto k = static_cast<std::size_t>(t - 1);
        for (std::size_t i = 0; i < n; ++i) {
          sr.anees_pos_series[i].push_back(sm.nees_pos[i][k] / M);
          sr.anees_vel_series[i].push_back(sm.nees_vel[i][k] / M);
        }
      }
    }
    rep.strategies.push_back(std::move(sr));
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string mc_json(const McReport& r) {
  using nlohmann::json;
  json j;
  j["runs"] = r.runs;
  j["steps"] = r.steps;
  j["seed"] = r.seed;
  j["nodes"] = r.ids;
  j["anees_bounds"] = {{"dof", r.bounds.dof}, {"lower", r.bounds.lower}, {"upper", r.bounds.upper}};
  json strategies = json::array();
  for (const auto& s : r.strategies) {
    json js;
    js["strategy"] = to_string(s.strategy);
    json nodes = json::array();
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      const auto& n = s.nodes[i];
      nodes.push_back({{"id", r.ids[i]},
                       {"armse_pos", n.armse_pos},
                       {"armse_vel", n.armse_vel},
                       {"anees_pos", n.anees_pos},
                       {"anees_vel", n.anees_vel}});
    }
    js["nodes"] = nodes;
    if (!s.series_t.empty())
      js["series"] = {{"t", s.series_t}, {"anees_pos", s.anees_pos_series}, {"anees_vel", s.anees_vel_series}};
    strategies.push_back(js);
  }
  j["strategies"] = strategies;
  return j.dump(1);
}

std::string mc_csv(const McReport& r) {
  std::ostringstream os;
  os << "strategy,node,armse_pos_cm,armse_vel_cm,anees_pos,anees_vel\n" << std::setprecision(8);
  for (const auto& s : r.strategies)
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      const auto& n = s.nodes[i];
      os << to_string(s.strategy) << ',' << r.ids[i] << ',' << 100 * n.armse_pos << ',' << 100 * n.armse_vel << ','
         << n.anees_pos << ',' << n.anees_vel << '\n';
    }
  return os.str();
}

}  // namespace ikf
