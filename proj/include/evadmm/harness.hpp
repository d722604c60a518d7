#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evadmm/consensus.hpp"
#include "evadmm/general.hpp"
#include "evadmm/graph.hpp"

namespace evadmm {

/// Non-i.i.d. regression data: three equal blocks of rows drawn from a
/// standard normal, a Student-t(1), and a uniform[-5,5] distribution,
/// concatenated and split contiguously so shards differ in distribution.
/// Targets come from a shared sparse ground truth plus noise of the block's
/// family. Per agent, columns are centered and scaled to unit l2 norm, as
/// are the targets.
struct RegressionDataOptions {
  int num_agents = 50;
  int rows_per_agent = 10;  // exactly determined local systems: local optima spread
  int dim = 10;
  double ground_truth_density = 0.2;  // fraction of nonzero coordinates
  double noise_scale = 0.1;
};

std::vector<QuadraticLocal> gen_noniid_regression(const RegressionDataOptions& opt,
                                                  std::uint64_t seed);

/// Quadratic consensus instance with identical local Gram shape
/// (A^i = Q_i A_c) so the block and aggregate condition numbers coincide
/// and equal kappa.
std::vector<QuadraticLocal> gen_conditioned_consensus(int num_agents, int dim, double kappa,
                                                      std::uint64_t seed);

/// Step size of the accelerated rate rule rho = kappa^eps sqrt(m L) with the
/// block constants of the instance.
double rate_rule_rho(const std::vector<QuadraticLocal>& agents, double eps = 0.0);

struct SweepOptions {
  RegressionDataOptions data;
  std::uint64_t data_seed = 123;
  double lambda = 0.1;
  double rho = 1.0;
  double alpha = 1.0;
  int horizon = 50;
  std::vector<double> delta_grid;  // Delta^d = Delta^z = Delta
  std::vector<std::uint64_t> seeds{1};
  TriggerPolicy::Kind policy = TriggerPolicy::Kind::Vanilla;
  double p_trig = 0.0;
  int workers = 1;
};

struct SweepRow {
  double delta = 0.0;
  double p_trig = 0.0;
  std::uint64_t seed = 0;
  double final_f_gap = 0.0;
  double final_z_err_sq = 0.0;
  double load = 0.0;
  long uploads = 0;
  long downloads = 0;
  long drops = 0;
  bool failed = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // deterministic grid-major order
  double f_star = 0.0;
};

SweepResult run_tradeoff_sweep(const SweepOptions& opt);
void write_sweep_csv(const SweepResult& result, const std::string& path);

struct DropStudyOptions {
  RegressionDataOptions data;
  std::uint64_t data_seed = 123;
  double lambda = 0.1;
  double rho = 1.0;
  double alpha = 1.0;
  double delta = 1e-3;
  double p_drop = 0.3;
  double chi_bar = 10.0;  // declared payload bound for Prop. 1
  int horizon = 50;
  std::vector<int> reset_periods{1, 5, 10, 0};  // 0 = never
  std::vector<std::uint64_t> seeds{1};
};

struct DropStudyRow {
  int reset_period = 0;
  std::uint64_t seed = 0;
  double final_f_gap = 0.0;
  long messages = 0;
  long reset_messages = 0;
  double load_with_resets = 0.0;
  bool failed = false;
};

struct DropStudyResult {
  std::vector<DropStudyRow> rows;
  std::vector<RunTrace> traces;  // aligned with rows
  double f_star = 0.0;
};

DropStudyResult run_drop_study(const DropStudyOptions& opt);

struct DecayStudyOptions {
  double kappa = 100.0;
  double lambda = 0.3;
  int dim = 6;
  double q = 1e-4;                   // Delta_k^2 = q/(k+1)^t
  std::vector<double> t_exponents{1.0, 2.0};
  int horizon = 20000;
  std::uint64_t seed = 1;
};

struct DecayStudyRow {
  double t = 0.0;
  double fitted_slope = 0.0;   // of log |xi_k - xi_*|^2 vs log k, tail
  bool bound_dominates = false;
  double k0 = 0.0;
  double final_err_sq = 0.0;
  double final_bound = 0.0;
};

struct DecayStudyResult {
  std::vector<DecayStudyRow> rows;
  std::string note;  // k0 exponent convention
};

DecayStudyResult run_decay_study(const DecayStudyOptions& opt);

struct NonconvexStudyOptions {
  int num_agents = 10;
  int dim = 4;
  double sin_amplitude = 1.0;
  double lambda = 0.05;
  double rho = 2.0;
  double delta0 = 0.5;  // Delta_k = delta0/(k+1)^2
  int horizon = 10000;
  int inner_steps = 30;
  std::uint64_t seed = 1;
};

struct NonconvexStudyResult {
  std::vector<double> cesaro;  // averaged metric per prefix K
  double fitted_slope = 0.0;   // over K in [1e2, horizon]
  bool all_nonnegative = true;
};

NonconvexStudyResult run_nonconvex_study(const NonconvexStudyOptions& opt);

struct GraphStudyOptions {
  int num_agents = 10;
  int num_edges = 35;
  int dim = 5;
  int rows_per_agent = 30;
  double rho = 1.0;
  double delta = 2e-4;
  std::vector<double> p_grid{0.3, 0.5, 0.7, 0.9};
  double target_gap = 1e-3;  // relative
  int horizon = 3000;
  std::uint64_t seed = 1;
};

struct GraphStudyResult {
  long event_messages = -1;       // -1: target not reached
  long random_best_messages = -1;
  double event_final_gap = 0.0;
  bool event_wins = false;
};

GraphStudyResult run_graph_study(const GraphStudyOptions& opt);

/// Entry point of the command line tool; exposed for tests.
int cli_main(int argc, const char* const* argv);

}  // namespace evadmm
