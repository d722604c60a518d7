#include "evadmm/consensus.hpp"

#include <cmath>
#include <stdexcept>

namespace evadmm {

Vec agent_step(AgentState& state, const std::optional<Vec>& incoming_z_delta,
               const QuadraticProxSolver* exact_solver, const SmoothOracle* oracle,
               const QuadraticLocal* data, const SolverMode& mode, double rho, double alpha,
               CounterRng& rng) {
  state.z_hat_prev = state.z_hat;
  if (incoming_z_delta) {
    if (incoming_z_delta->size() != state.z_hat.size())
      throw std::invalid_argument("agent_step: dimension mismatch");
    state.z_hat += *incoming_z_delta;
  }
  state.u += alpha * state.x - state.z_hat + (1.0 - alpha) * state.z_hat_prev;
  const Vec anchor = state.z_hat - state.u;
  if (mode.exact) {
    state.x = exact_solver->solve(anchor);
  } else {
    state.x = solve_local_inexact(*oracle, anchor, rho, mode.inexact, state.x, rng, data);
  }
  return alpha * state.x + state.u;
}

void server_step(ServerState& state, const std::vector<Vec>& received_deltas,
                 const Regularizer& g, int num_agents, double rho, double alpha) {
  for (const auto& d : received_deltas) state.zeta_hat += d / num_agents;
  const Vec point = state.zeta_hat + (1.0 - alpha) * state.z;
  state.z = g.prox(point, 1.0 / (num_agents * rho));
}

std::optional<Prop1Violation> check_prop1_bound(double zeta_err, int k, double delta_d_max,
                                                int reset_period, double chi_bar_d) {
  const double horizon_t = reset_period > 0 ? static_cast<double>(reset_period) : 0.0;
  double bound = delta_d_max + horizon_t * chi_bar_d;
  // numeric slack for accumulated rounding in zeta_hat
  if (zeta_err > bound * (1.0 + 1e-9) + 1e-12)
    return Prop1Violation{k, zeta_err, bound};
  return std::nullopt;
}

ConsensusResult run_consensus(const ConsensusProblem& problem, const ConsensusConfig& cfg) {
  const int N = static_cast<int>(problem.agents.empty() ? problem.oracles.size()
                                                        : problem.agents.size());
  if (N == 0) throw std::invalid_argument("run_consensus: no agents");
  if (cfg.horizon < 1) throw std::invalid_argument("run_consensus: horizon >= 1 required");
  const bool exact = cfg.mode.exact;
  if (exact && problem.agents.empty())
    throw std::invalid_argument("run_consensus: exact mode needs quadratic data");
  if (!exact && problem.oracles.size() != static_cast<std::size_t>(N))
    throw std::invalid_argument("run_consensus: inexact mode needs one oracle per agent");
  int dim = problem.dim;
  if (dim <= 0) {
    if (problem.agents.empty())
      throw std::invalid_argument("run_consensus: set ConsensusProblem::dim for oracle mode");
    dim = problem.agents[0].dim();
  }

  ConsensusResult res;
  CounterRng rng(cfg.seed);

  std::vector<QuadraticProxSolver> solvers;
  if (exact) {
    solvers.reserve(N);
    for (const auto& a : problem.agents) solvers.emplace_back(a, cfg.rho);
  }

  std::vector<AgentState> ag(N);
  for (int i = 0; i < N; ++i) {
    ag[i].x = Vec::Zero(dim);
    ag[i].u = Vec::Zero(dim);
    ag[i].z_hat = Vec::Zero(dim);
    ag[i].z_hat_prev = Vec::Zero(dim);
    ag[i].d_last_sent = Vec::Zero(dim);
  }
  ServerState sv;
  sv.z = Vec::Zero(dim);
  sv.zeta_hat = Vec::Zero(dim);  // = mean of d registers at k=0 (all zero)
  sv.z_last_sent.assign(N, Vec::Zero(dim));
  std::vector<std::optional<Vec>> pending(N);

  res.trace.has_reference = cfg.reference.has_value();
  if (cfg.reference) {
    double du = 0.0;
    for (int i = 0; i < N; ++i) du += cfg.reference->u_star[i].squaredNorm();
    res.trace.d0 = cfg.reference->z_star.squaredNorm() + du / N;
  }

  // Prop. 1 needs a finite bound: without resets, dropped payloads
  // accumulate without limit and the T chi_bar term is unbounded.
  const double delta_d_max = cfg.upload_policy.schedule.max_value();
  const bool prop1_applicable =
      cfg.check_prop1 && cfg.upload_policy.has_finite_threshold() &&
      (cfg.upload_drop.p_drop == 0.0 ||
       (cfg.upload_drop.declared() && cfg.reset_period > 0));
  const double chi_bar_d = cfg.upload_drop.p_drop == 0.0 ? 0.0 : cfg.upload_drop.chi_bar;

  for (int k = 0; k < cfg.horizon; ++k) {
    std::vector<Vec> dnew(N);
    for (int i = 0; i < N; ++i) {
      dnew[i] = agent_step(ag[i], pending[i], exact ? &solvers[i] : nullptr,
                           exact ? nullptr : &problem.oracles[i],
                           problem.agents.empty() ? nullptr : &problem.agents[i], cfg.mode,
                           cfg.rho, cfg.alpha, rng);
      pending[i].reset();
      if (!ag[i].x.allFinite()) {
        res.failed = true;
        res.error = "numeric overflow in agent " + std::to_string(i) + " at iteration " +
                    std::to_string(k);
        res.agents = std::move(ag);
        res.server = std::move(sv);
        return res;
      }
    }
    // uploads
    std::vector<Vec> received;
    for (int i = 0; i < N; ++i) {
      auto out = maybe_trigger(dnew[i], ag[i].d_last_sent, cfg.upload_policy, k, rng);
      if (!out.sent) continue;
      ++res.log.uploads_sent;
      if (rng.bernoulli(cfg.upload_drop.p_drop)) {
        ++res.log.uploads_dropped;
        const double mag = out.delta.norm();
        res.max_chi_upload = std::max(res.max_chi_upload, mag);
        if (cfg.upload_drop.declared() && mag > cfg.upload_drop.chi_bar) {
          res.failed = true;
          res.error = "declared chi_bar^d exceeded at iteration " + std::to_string(k);
          res.agents = std::move(ag);
          res.server = std::move(sv);
          return res;
        }
      } else {
        received.push_back(out.delta);
      }
    }
    // exact average for Prop. 1 bookkeeping and resets
    Vec zeta_exact = Vec::Zero(dim);
    for (int i = 0; i < N; ++i) zeta_exact += cfg.alpha * ag[i].x + ag[i].u;
    zeta_exact /= N;

    const Vec z_prev = sv.z;
    server_step(sv, received, problem.g, N, cfg.rho, cfg.alpha);
    const double zeta_err = (sv.zeta_hat - zeta_exact).norm();
    if (prop1_applicable) {
      if (auto v = check_prop1_bound(zeta_err, k, delta_d_max, cfg.reset_period, chi_bar_d)) {
        res.failed = true;
        res.error = "Prop. 1 bound violated at iteration " + std::to_string(v->k) + ": " +
                    format_double(v->error) + " > " + format_double(v->bound);
        res.agents = std::move(ag);
        res.server = std::move(sv);
        return res;
      }
    }
    // downloads (per-agent registers)
    for (int i = 0; i < N; ++i) {
      auto out = maybe_trigger(sv.z, sv.z_last_sent[i], cfg.download_policy, k, rng);
      if (!out.sent) continue;
      ++res.log.downloads_sent;
      if (rng.bernoulli(cfg.download_drop.p_drop)) {
        ++res.log.downloads_dropped;
        const double mag = out.delta.norm();
        res.max_chi_download = std::max(res.max_chi_download, mag);
        if (cfg.download_drop.declared() && mag > cfg.download_drop.chi_bar) {
          res.failed = true;
          res.error = "declared chi_bar^z exceeded at iteration " + std::to_string(k);
          res.agents = std::move(ag);
          res.server = std::move(sv);
          return res;
        }
      } else {
        pending[i] = out.delta;
      }
    }
    // reset
    if (cfg.reset_period > 0 && (k + 1) % cfg.reset_period == 0) {
      sv.zeta_hat = zeta_exact;
      for (int i = 0; i < N; ++i) {
        ag[i].z_hat = sv.z;
        pending[i].reset();
        sv.z_last_sent[i] = sv.z;
        ag[i].d_last_sent = dnew[i];
      }
      res.log.reset_messages += 2L * N;
    }

    // trace row
    TraceRow row;
    row.k = k;
    row.zeta_err = zeta_err;
    row.delta_k = cfg.upload_policy.schedule.at(k);
    double f = problem.g.value(sv.z);
    for (int i = 0; i < N; ++i)
      f += problem.agents.empty() ? problem.oracles[i].value(sv.z)
                                  : problem.agents[i].value(sv.z);
    row.f_value = f;
    double res_sq = 0.0;
    for (int i = 0; i < N; ++i) res_sq += (ag[i].x - sv.z).squaredNorm();
    row.residual_sq = res_sq;
    // gradient surrogate G = (1/(rho N)) (sum grad f^i(x^i) + subgrad g(z)),
    // subgradient element chosen from the z-step stationarity.
    {
      Vec sum_grad = Vec::Zero(dim);
      for (int i = 0; i < N; ++i)
        sum_grad += problem.agents.empty() ? problem.oracles[i].gradient(ag[i].x)
                                           : problem.agents[i].gradient(ag[i].x);
      // z-step stationarity: 0 in dg(z_{k+1}) + N rho (z_{k+1} - zeta_hat - (1-a) z_k)
      Vec g_elem = Vec::Zero(dim);
      if (problem.g.kind != Regularizer::Kind::Zero)
        g_elem = -static_cast<double>(N) * cfg.rho *
                 (sv.z - sv.zeta_hat - (1.0 - cfg.alpha) * z_prev);
      Vec G = (sum_grad + g_elem) / (cfg.rho * N);
      row.grad_surrogate_sq = G.squaredNorm();
    }
    if (cfg.reference) {
      row.f_gap = f - cfg.reference->f_star;
      row.z_err_sq = (sv.z - cfg.reference->z_star).squaredNorm();
      double du = 0.0;
      for (int i = 0; i < N; ++i) du += (ag[i].u - cfg.reference->u_star[i]).squaredNorm();
      row.lyapunov = row.z_err_sq + du / N;
    } else {
      row.f_gap = row.z_err_sq = row.lyapunov = std::nan("");
    }
    row.uploads = res.log.uploads_sent;
    row.downloads = res.log.downloads_sent;
    row.drops = res.log.uploads_dropped + res.log.downloads_dropped;
    row.resets = res.log.reset_messages;
    res.log.full_comm_messages = 2L * N * (k + 1);
    row.load = res.log.load();
    res.trace.append(row);
  }
  res.log.full_comm_messages = 2L * N * cfg.horizon;
  res.agents = std::move(ag);
  res.server = std::move(sv);
  return res;
}

std::vector<double> nonconvex_metrics(const RunTrace& trace, int num_agents) {
  std::vector<double> out;
  out.reserve(trace.rows.size());
  double acc = 0.0;
  const double N = num_agents;
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const auto& r = trace.rows[k];
    acc += (2.0 / (3.0 * N)) * r.residual_sq + (1.0 / (6.0 * N)) * r.grad_surrogate_sq;
    out.push_back(acc / static_cast<double>(k + 1));
  }
  return out;
}

SharingCoupling SharingCoupling::none() {
  SharingCoupling c;
  c.prox = [](const Vec& v, int, double) { return v; };
  return c;
}

SharingCoupling SharingCoupling::l1(double lam) {
  SharingCoupling c;
  c.prox = [lam](const Vec& v, int, double rho) { return prox_l1(v, lam / rho); };
  return c;
}

SharingCoupling SharingCoupling::quadratic_penalty(double penalty, Vec target) {
  SharingCoupling c;
  c.prox = [penalty, target](const Vec& v, int N, double rho) {
    // argmin_z (penalty/2)|N z - target|^2 + (N rho/2)|z - v|^2
    return (penalty * target + rho * v) / (penalty * N + rho);
  };
  return c;
}

SharingResult sharing_run(const std::vector<QuadraticLocal>& agents,
                          const SharingCoupling& coupling, const SharingConfig& cfg) {
  const int N = static_cast<int>(agents.size());
  if (N == 0) throw std::invalid_argument("sharing_run: no agents");
  const int n = agents[0].dim();
  SharingResult res;
  CounterRng rng(cfg.seed);

  std::vector<QuadraticProxSolver> solvers;
  solvers.reserve(N);
  for (const auto& a : agents) solvers.emplace_back(a, cfg.rho);

  std::vector<Vec> x(N, Vec::Zero(n));
  std::vector<Vec> x_sent(N, Vec::Zero(n));
  std::vector<Vec> xhat(N, Vec::Zero(n));   // server estimates of x^i
  std::vector<Vec> hhat(N, Vec::Zero(n));   // agent estimates of h
  std::vector<Vec> h_sent(N, Vec::Zero(n)); // server-side h registers
  Vec z = Vec::Zero(n), u = Vec::Zero(n), h = Vec::Zero(n);

  for (int k = 0; k < cfg.horizon; ++k) {
    for (int i = 0; i < N; ++i) {
      const Vec anchor = x[i] - hhat[i];
      x[i] = solvers[i].solve(anchor);
      if (!x[i].allFinite()) {
        res.failed = true;
        res.error = "numeric overflow at iteration " + std::to_string(k);
        return res;
      }
    }
    for (int i = 0; i < N; ++i) {
      auto out = maybe_trigger(x[i], x_sent[i], cfg.upload_policy, k, rng);
      if (!out.sent) continue;
      ++res.log.uploads_sent;
      if (rng.bernoulli(cfg.upload_drop.p_drop))
        ++res.log.uploads_dropped;
      else
        xhat[i] += out.delta;
    }
    Vec xbar = Vec::Zero(n);
    for (int i = 0; i < N; ++i) xbar += xhat[i];
    xbar /= N;
    z = coupling.prox(xbar + u / cfg.rho, N, cfg.rho);
    u = u + cfg.rho * (xbar - z);
    h = xbar - z + u / cfg.rho;
    for (int i = 0; i < N; ++i) {
      auto out = maybe_trigger(h, h_sent[i], cfg.download_policy, k, rng);
      if (!out.sent) continue;
      ++res.log.downloads_sent;
      if (rng.bernoulli(cfg.download_drop.p_drop))
        ++res.log.downloads_dropped;
      else
        hhat[i] += out.delta;
    }
    if (cfg.reset_period > 0 && (k + 1) % cfg.reset_period == 0) {
      for (int i = 0; i < N; ++i) {
        xhat[i] = x[i];
        x_sent[i] = x[i];
        hhat[i] = h;
        h_sent[i] = h;
      }
      res.log.reset_messages += 2L * N;
    }
    TraceRow row;
    row.k = k;
    Vec sum_x = Vec::Zero(n);
    for (int i = 0; i < N; ++i) sum_x += x[i];
    double f = 0.0;
    for (int i = 0; i < N; ++i) f += agents[i].value(x[i]);
    row.f_value = f;
    row.f_gap = std::nan("");
    row.residual_sq = (sum_x / N - z).squaredNorm() * N;
    row.uploads = res.log.uploads_sent;
    row.downloads = res.log.downloads_sent;
    row.drops = res.log.uploads_dropped + res.log.downloads_dropped;
    row.resets = res.log.reset_messages;
    res.log.full_comm_messages = 2L * N * (k + 1);
    row.load = res.log.load();
    res.trace.append(row);
  }
  res.log.full_comm_messages = 2L * N * cfg.horizon;
  res.x = std::move(x);
  res.z = z;
  res.u = u;
  res.h = h;
  return res;
}

}  // namespace evadmm
