#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ikf/node.hpp"
#include "ikf/simulate.hpp"

namespace ikf {

// ---- steady state ----

struct SteadyStateProblem {
  std::vector<LinearModel> models;  // node i+1 uses models[i]
  ObservationGraph graph;
  double r_priv = 0.0025;
  double r_rel = 0.0025;
};

SteadyStateProblem steady_state_problem(const MsdParams& p, const ObservationGraph& g);

struct SteadyStateOptions {
  int iterations = 10000;
  double tol = 1e-12;        // Frobenius step size counted as converged
  bool early_exit = false;   // stop as soon as the step falls below tol
  double divergence = 1e12;  // trace limit
};

struct IterationResult {
  MatrixXd Sigma;
  bool converged = false;
  int iterations = 0;
  double last_step = 0.0;
};

// Each iteration applies the graph's updates (privates ascending, then edges in listed
// order) and predicts; the reported matrix is the prior after the final prediction.
IterationResult dare_iterate(const SteadyStateProblem& p, const SteadyStateOptions& opt = {});
// Same schedule on real IKF nodes with zero residuals; global matrix assembled from
// node blocks and restored cross blocks (zero where no factor exists).
IterationResult ikf_steady_state(const SteadyStateProblem& p, const SteadyStateOptions& opt = {});

// Σ ← ΦΣΦᵀ + W iterated from X0 (identity when empty) until the step is below tol or
// max_iter is reached.
IterationResult lyapunov_solve(const MatrixXd& Phi, const MatrixXd& W, double tol = 1e-12, int max_iter = 10000,
                               const MatrixXd& X0 = MatrixXd());

struct RankTests {
  bool controllable = false;
  bool observable = false;
  int rank_c = 0;
  int rank_o = 0;
};

RankTests rank_tests(const MatrixXd& Phi, const MatrixXd& B, const MatrixXd& H);
int numerical_rank(const MatrixXd& m, double rel = 1e-10);

struct SteadyStateReport {
  std::string scenario;
  int n = 0;
  double q_over_r = 0.0;
  double r_ratio = 0.0;
  double tr_kf = 0.0;
  double tr_ikf = 0.0;
  double tr_diff = 0.0;
  bool psd_kf = false;
  bool psd_ikf = false;
  double frob_cov_diff = 0.0;
  double frob_corr_diff = 0.0;
  bool converged = false;
  int iterations = 0;
};

SteadyStateReport steady_state_report(const std::string& label, const SteadyStateProblem& p,
                                      const SteadyStateOptions& opt = {});
std::vector<SteadyStateReport> steady_state_table(const std::vector<std::string>& scenarios, const MsdParams& params,
                                                  int n = 4, const SteadyStateOptions& opt = {});

struct SweepPoint {
  double q_over_r = 1.0;  // σ_g² / R_ii
  double r_ratio = 1.0;   // R_ii / R_ij
};
// The twelve noise-ratio rows used for S4.
std::vector<SweepPoint> default_sweep();
std::vector<SteadyStateReport> qr_sweep(const std::string& scenario, const MsdParams& params, int n,
                                        const std::vector<SweepPoint>& points, const SteadyStateOptions& opt = {});

std::string steady_state_csv(const std::vector<SteadyStateReport>& rows);

// ---- Monte Carlo ----

enum class Strategy { Centralized, Ikf, Naive };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct McConfig {
  std::vector<MsdParams> params;  // one per node
  ObservationGraph graph;
  int runs = 30;
  Tick steps = 20000;
  std::uint64_t seed = 1;
  NodeConfig node{200, 0, false};
  Gate gate = std::nullopt;
  int jobs = 1;
  int series_stride = 100;  // ANEES time series sampling; 0 = no series

  void validate() const;
};

// k=5, c=0.1, m=i, σ_g=σ=0.1, dt=1e-3, 20 s, 5 nodes, private on node 1, chain edges.
McConfig montecarlo_default();

struct McNodeStats {
  double armse_pos = 0.0;
  double armse_vel = 0.0;
  double anees_pos = 0.0;
  double anees_vel = 0.0;
};

struct McStrategyReport {
  Strategy strategy = Strategy::Centralized;
  std::vector<McNodeStats> nodes;
  std::vector<Tick> series_t;
  std::vector<std::vector<double>> anees_pos_series;  // [node][sample]
  std::vector<std::vector<double>> anees_vel_series;
};

struct McReport {
  int runs = 0;
  Tick steps = 0;
  std::uint64_t seed = 0;
  std::vector<NodeId> ids;
  CredibilityBounds bounds;  // one scalar component over `runs` runs, 95%
  std::vector<McStrategyReport> strategies;
  double seconds = 0.0;
};

McReport monte_carlo(const McConfig& cfg, const std::vector<Strategy>& strategies);
std::string mc_json(const McReport& r);
std::string mc_csv(const McReport& r);

}  // namespace ikf
