#pragma once

#include <string>
#include <utility>
#include <vector>

#include "evadmm/events.hpp"
#include "evadmm/logging.hpp"
#include "evadmm/objectives.hpp"

namespace evadmm {

/// Undirected connected communication graph, no self loops.
struct AgentGraph {
  int num_vertices = 0;
  std::vector<std::pair<int, int>> edges;  // i < j
  std::vector<std::vector<int>> neighbors;

  static AgentGraph from_edges(int n, std::vector<std::pair<int, int>> edges);
  /// Spanning tree plus uniformly sampled extra edges; deterministic in seed.
  static AgentGraph random_connected(int n, int num_edges, std::uint64_t seed);
  static AgentGraph load_edge_list(const std::string& path);
  void save_edge_list(const std::string& path) const;

  bool connected() const;
  int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
};

/// 0/1 transmitter/receiver matrices: row e has a single 1 at the
/// transmitter (receiver) vertex of edge e.
std::pair<Mat, Mat> build_transmitter_receiver(const AgentGraph& graph);

/// Condition number of the graph instance,
/// L sigma_max^2(A) / (m sigma_min^2(A)) with A the stacked constraint
/// matrix [At; Ar] and (m, L) the extreme local Hessian eigenvalues.
double graph_condition_number(const AgentGraph& graph, const std::vector<QuadraticLocal>& agents);

struct GraphAgentState {
  Vec x;      // local model
  Vec x_bar;  // neighbor average of estimates
  Vec p;      // local dual
  Vec x_last_sent;
  std::vector<Vec> neighbor_estimates;  // aligned with neighbors[i]
};

struct GraphConfig {
  double rho = 1.0;
  TriggerPolicy policy;
  double p_drop = 0.0;  // per directed edge per broadcast
  int horizon = 1;
  std::uint64_t seed = 0;
  std::optional<FixedPoint> reference;
};

struct GraphResult {
  RunTrace trace;
  CommLog log;
  std::vector<GraphAgentState> agents;
  double consensus_residual = 0.0;  // max over edges |x^i - x^j| at the end
  bool failed = false;
  std::string error;
};

GraphResult run_graph(const std::vector<QuadraticLocal>& agents, const AgentGraph& graph,
                      const GraphConfig& cfg);

}  // namespace evadmm
