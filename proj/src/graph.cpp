#include "evadmm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evadmm {

AgentGraph AgentGraph::from_edges(int n, std::vector<std::pair<int, int>> edges_in) {
  AgentGraph g;
  g.num_vertices = n;
  for (auto& [a, b] : edges_in) {
    if (a == b) throw std::invalid_argument("AgentGraph: self loop");
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("AgentGraph: vertex out of range");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges_in.begin(), edges_in.end());
  edges_in.erase(std::unique(edges_in.begin(), edges_in.end()), edges_in.end());
  g.edges = std::move(edges_in);
  g.neighbors.assign(n, {});
  for (auto [a, b] : g.edges) {
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  if (!g.connected()) throw std::invalid_argument("AgentGraph: graph not connected");
  return g;
}

AgentGraph AgentGraph::random_connected(int n, int num_edges, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("random_connected: n >= 2 required");
  const long max_edges = static_cast<long>(n) * (n - 1) / 2;
  if (num_edges < n - 1 || num_edges > max_edges)
    throw std::invalid_argument("random_connected: edge count out of range");
  CounterRng rng(seed, 0x6772617068ull);  // "graph" stream
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.next_u64() % static_cast<std::uint64_t>(i + 1)]);
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < n; ++i) {
    int j = perm[rng.next_u64() % static_cast<std::uint64_t>(i)];
    edges.emplace_back(std::min(perm[i], j), std::max(perm[i], j));
  }
  std::vector<std::pair<int, int>> rest;
  std::sort(edges.begin(), edges.end());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!std::binary_search(edges.begin(), edges.end(), std::make_pair(i, j)))
        rest.emplace_back(i, j);
  for (std::size_t i = rest.size(); i > 1; --i)
    std::swap(rest[i - 1], rest[rng.next_u64() % i]);
  for (std::size_t i = 0; i < rest.size() && edges.size() < static_cast<std::size_t>(num_edges);
       ++i)
    edges.push_back(rest[i]);
  return from_edges(n, std::move(edges));
}

AgentGraph AgentGraph::load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<int, int>> edges;
  int max_v = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int a, b;
    if (!(ss >> a >> b)) throw std::runtime_error("bad edge line: " + line);
    edges.emplace_back(a, b);
    max_v = std::max({max_v, a, b});
  }
  return from_edges(max_v + 1, std::move(edges));
}

void AgentGraph::save_edge_list(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (auto [a, b] : edges) out << a << " " << b << "\n";
}

bool AgentGraph::connected() const {
  if (num_vertices == 0) return false;
  std::vector<char> seen(num_vertices, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : neighbors[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
  }
  return count == num_vertices;
}

std::pair<Mat, Mat> build_transmitter_receiver(const AgentGraph& graph) {
  const int e = static_cast<int>(graph.edges.size());
  Mat at = Mat::Zero(e, graph.num_vertices);
  Mat ar = Mat::Zero(e, graph.num_vertices);
  for (int row = 0; row < e; ++row) {
    at(row, graph.edges[row].first) = 1.0;
    ar(row, graph.edges[row].second) = 1.0;
  }
  return {at, ar};
}

double graph_condition_number(const AgentGraph& graph,
                              const std::vector<QuadraticLocal>& agents) {
  auto [at, ar] = build_transmitter_receiver(graph);
  Mat stacked(at.rows() + ar.rows(), at.cols());
  stacked << at, ar;
  auto sv = stacked.jacobiSvd().singularValues();
  double m = std::numeric_limits<double>::infinity(), L = 0.0;
  for (const auto& a : agents) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a.gram());
    m = std::min(m, es.eigenvalues().minCoeff());
    L = std::max(L, es.eigenvalues().maxCoeff());
  }
  const double smax = sv.maxCoeff(), smin = sv.minCoeff();
  return L * smax * smax / (m * smin * smin);
}

GraphResult run_graph(const std::vector<QuadraticLocal>& agents, const AgentGraph& graph,
                      const GraphConfig& cfg) {
  const int N = graph.num_vertices;
  if (static_cast<int>(agents.size()) != N)
    throw std::invalid_argument("run_graph: one local objective per vertex");
  const int n = agents[0].dim();
  GraphResult res;
  CounterRng rng(cfg.seed);

  std::vector<QuadraticProxSolver> solvers;
  solvers.reserve(N);
  for (int i = 0; i < N; ++i)
    solvers.emplace_back(agents[i], graph.degree(i) * cfg.rho);

  std::vector<GraphAgentState> st(N);
  for (int i = 0; i < N; ++i) {
    st[i].x = Vec::Zero(n);
    st[i].x_bar = Vec::Zero(n);
    st[i].p = Vec::Zero(n);
    st[i].x_last_sent = Vec::Zero(n);
    st[i].neighbor_estimates.assign(graph.neighbors[i].size(), Vec::Zero(n));
  }

  res.trace.kappa = graph_condition_number(graph, agents);
  res.trace.has_reference = cfg.reference.has_value();
  const long full_per_round = 2L * static_cast<long>(graph.edges.size());

  for (int k = 0; k < cfg.horizon; ++k) {
    // local solves: anchor (x^i + xbar^i)/2 - p^i/rho under weight |N_i| rho
    for (int i = 0; i < N; ++i) {
      const Vec anchor = 0.5 * (st[i].x + st[i].x_bar) - st[i].p / cfg.rho;
      st[i].x = solvers[i].solve(anchor);
      if (!st[i].x.allFinite()) {
        res.failed = true;
        res.error = "numeric overflow at iteration " + std::to_string(k);
        res.agents = std::move(st);
        return res;
      }
    }
    // event broadcasts, one trigger per agent, drops per directed edge
    for (int i = 0; i < N; ++i) {
      auto out = maybe_trigger(st[i].x, st[i].x_last_sent, cfg.policy, k, rng);
      if (!out.sent) continue;
      res.log.uploads_sent += graph.degree(i);
      for (int j : graph.neighbors[i]) {
        if (rng.bernoulli(cfg.p_drop)) {
          ++res.log.uploads_dropped;
          continue;
        }
        auto& nb = graph.neighbors[j];
        const auto pos = std::find(nb.begin(), nb.end(), i) - nb.begin();
        st[j].neighbor_estimates[pos] += out.delta;
      }
    }
    // aggregation and dual ascent
    for (int i = 0; i < N; ++i) {
      Vec acc = Vec::Zero(n);
      for (const auto& e : st[i].neighbor_estimates) acc += e;
      st[i].x_bar = acc / graph.degree(i);
      st[i].p += 0.5 * cfg.rho * (st[i].x - st[i].x_bar);
    }

    TraceRow row;
    row.k = k;
    Vec mean = Vec::Zero(n);
    for (int i = 0; i < N; ++i) mean += st[i].x;
    mean /= N;
    double f = 0.0;
    for (int i = 0; i < N; ++i) f += agents[i].value(mean);
    row.f_value = f;
    row.delta_k = cfg.policy.schedule.at(k);
    if (cfg.reference) {
      row.f_gap = f - cfg.reference->f_star;
      row.z_err_sq = (mean - cfg.reference->z_star).squaredNorm();
    } else {
      row.f_gap = row.z_err_sq = std::nan("");
    }
    row.lyapunov = std::nan("");
    row.uploads = res.log.uploads_sent;
    row.drops = res.log.uploads_dropped;
    res.log.full_comm_messages = full_per_round * (k + 1);
    row.load = res.log.load();
    res.trace.append(row);
  }
  res.log.full_comm_messages = full_per_round * cfg.horizon;
  double cres = 0.0;
  for (auto [a, b] : graph.edges) cres = std::max(cres, (st[a].x - st[b].x).norm());
  res.consensus_residual = cres;
  res.agents = std::move(st);
  return res;
}

}  // namespace evadmm
