#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evadmm/events.hpp"
#include "evadmm/logging.hpp"
#include "evadmm/objectives.hpp"

namespace evadmm {

/// Per-agent state of the client/server algorithm.
struct AgentState {
  Vec x;            // x^i_k
  Vec u;            // u^i_k
  Vec z_hat;        // zhat^i_k
  Vec z_hat_prev;   // zhat^i_{k-1}
  Vec d_last_sent;  // d^i_{[k]}
};

struct ServerState {
  Vec z;                         // z_k
  Vec zeta_hat;                  // zetahat_k
  std::vector<Vec> z_last_sent;  // z_{[k]} per download channel
};

struct SolverMode {
  bool exact = true;
  InexactOptions inexact;
};

struct ConsensusProblem {
  std::vector<QuadraticLocal> agents;       // exact mode data
  std::vector<SmoothOracle> oracles;        // inexact mode (optional, size N)
  Regularizer g;
  int dim = 0;  // required when only oracles are given
};

struct ConsensusConfig {
  double rho = 1.0;
  double alpha = 1.0;
  TriggerPolicy upload_policy;    // d^i channel, threshold Delta^d
  TriggerPolicy download_policy;  // z channel, threshold Delta^z
  DropModel upload_drop;
  DropModel download_drop;
  int reset_period = 0;  // T; 0 means never
  int horizon = 1;
  std::uint64_t seed = 0;
  SolverMode mode;
  bool check_prop1 = true;
  std::optional<FixedPoint> reference;  // enables f_gap / z_err / V columns
};

struct ConsensusResult {
  RunTrace trace;
  CommLog log;
  std::vector<AgentState> agents;
  ServerState server;
  double max_chi_upload = 0.0;    // realized dropped-payload magnitudes
  double max_chi_download = 0.0;
  bool failed = false;
  std::string error;
};

/// One agent update of Alg. 1: apply the received z-delta (already
/// drop-filtered), advance the dual by
/// u^i_k = u^i_{k-1} + alpha x^i_k - zhat^i_k + (1-alpha) zhat^i_{k-1},
/// solve the local prox step, and emit d^i_{k+1} = alpha x^i_{k+1} + u^i_k.
Vec agent_step(AgentState& state, const std::optional<Vec>& incoming_z_delta,
               const QuadraticProxSolver* exact_solver, const SmoothOracle* oracle,
               const QuadraticLocal* data, const SolverMode& mode, double rho, double alpha,
               CounterRng& rng);

/// Server update of Alg. 1: accumulate received d-deltas into zeta_hat and
/// set z = prox_g((zeta_hat + (1-alpha) z); weight 1/(N rho)).
void server_step(ServerState& state, const std::vector<Vec>& received_deltas,
                 const Regularizer& g, int num_agents, double rho, double alpha);

ConsensusResult run_consensus(const ConsensusProblem& problem, const ConsensusConfig& cfg);

/// Prop. 1 assertion: |zeta_hat - zeta| <= Delta^d + T chibar^d (constant
/// part of a decaying schedule is its largest value).
struct Prop1Violation {
  int k;
  double error;
  double bound;
};
std::optional<Prop1Violation> check_prop1_bound(double zeta_err, int k, double delta_d_max,
                                                int reset_period, double chi_bar_d);

/// Cesaro averages of the stationarity metric
/// (2/3N) sum_i |r^i|^2 + (1/6N) |G|^2 per prefix length K.
std::vector<double> nonconvex_metrics(const RunTrace& trace, int num_agents);

/// Sharing problem min sum f^i(x^i) + g(sum x^i). The coupling prox solves
/// argmin_z g(N z) + N rho/2 |z - v|^2.
struct SharingCoupling {
  std::function<Vec(const Vec& v, int N, double rho)> prox;

  static SharingCoupling none();
  static SharingCoupling l1(double lam);
  /// Quadratic penalty (penalty/2)|w - target|^2 on the coupled sum w.
  static SharingCoupling quadratic_penalty(double penalty, Vec target);
};

struct SharingConfig {
  double rho = 1.0;
  TriggerPolicy upload_policy;
  TriggerPolicy download_policy;
  DropModel upload_drop;
  DropModel download_drop;
  int reset_period = 0;
  int horizon = 1;
  std::uint64_t seed = 0;
};

struct SharingResult {
  RunTrace trace;
  CommLog log;
  std::vector<Vec> x;  // local variables
  Vec z;               // coupled average variable
  Vec u;               // dual
  Vec h;               // broadcast feedback h_k
  bool failed = false;
  std::string error;
};

SharingResult sharing_run(const std::vector<QuadraticLocal>& agents,
                          const SharingCoupling& coupling, const SharingConfig& cfg);

}  // namespace evadmm
