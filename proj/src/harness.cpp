#include "evadmm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <stdexcept>

namespace evadmm {

namespace {

struct NormalizedShard {
  Mat design;
  Vec targets;
  bool degenerate = false;
};

NormalizedShard normalize_shard(Mat a, Vec b) {
  NormalizedShard out;
  a.rowwise() -= a.colwise().mean();
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double nrm = a.col(j).norm();
    if (nrm < 1e-10) {
      out.degenerate = true;
      return out;
    }
    a.col(j) /= nrm;
  }
  b.array() -= b.mean();
  double nb = b.norm();
  if (nb < 1e-10) {
    out.degenerate = true;
    return out;
  }
  b /= nb;
  out.design = std::move(a);
  out.targets = std::move(b);
  return out;
}

std::vector<QuadraticLocal> gen_noniid_attempt(const RegressionDataOptions& opt,
                                               std::uint64_t seed, bool& degenerate) {
  CounterRng rng(seed, 0x64617461ull);  // "data" stream
  const int total = opt.num_agents * opt.rows_per_agent;
  const int b1 = total / 3, b2 = total / 3;
  const int b3 = total - b1 - b2;
  Mat x(total, opt.dim);
  Vec noise(total);
  for (int r = 0; r < b1; ++r) {
    for (int j = 0; j < opt.dim; ++j) x(r, j) = rng.normal();
    noise[r] = rng.normal() * opt.noise_scale;
  }
  for (int r = b1; r < b1 + b2; ++r) {
    for (int j = 0; j < opt.dim; ++j) x(r, j) = rng.student_t1();
    noise[r] = rng.student_t1() * opt.noise_scale;
  }
  for (int r = b1 + b2; r < total; ++r) {
    for (int j = 0; j < opt.dim; ++j) x(r, j) = rng.uniform(-5.0, 5.0);
    noise[r] = rng.uniform(-5.0, 5.0) * opt.noise_scale;
  }
  (void)b3;
  Vec ground_truth(opt.dim);
  for (int j = 0; j < opt.dim; ++j)
    ground_truth[j] = rng.bernoulli(opt.ground_truth_density) ? rng.normal() : 0.0;
  Vec y = x * ground_truth + noise;

  std::vector<QuadraticLocal> agents;
  agents.reserve(opt.num_agents);
  degenerate = false;
  for (int i = 0; i < opt.num_agents; ++i) {
    auto shard = normalize_shard(x.middleRows(i * opt.rows_per_agent, opt.rows_per_agent),
                                 y.segment(i * opt.rows_per_agent, opt.rows_per_agent));
    if (shard.degenerate) {
      degenerate = true;
      return {};
    }
    agents.emplace_back(std::move(shard.design), std::move(shard.targets));
  }
  return agents;
}

double relative_gap(double f, double f_star) {
  return (f - f_star) / std::max(std::abs(f_star), 1e-300);
}

double fit_loglog_slope(const std::vector<double>& values, int k_begin, int k_end) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int k = k_begin; k < k_end && k < static_cast<int>(values.size()); ++k) {
    if (values[k] <= 0) continue;
    const double lx = std::log(static_cast<double>(k + 1));
    const double ly = std::log(values[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  if (count < 2) return 0.0;
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

}  // namespace

std::vector<QuadraticLocal> gen_noniid_regression(const RegressionDataOptions& opt,
                                                  std::uint64_t seed) {
  if (opt.num_agents < 2) throw std::invalid_argument("gen_noniid_regression: N >= 2");
  for (std::uint64_t sub = 0; sub < 32; ++sub) {
    bool degenerate = false;
    auto agents = gen_noniid_attempt(opt, seed + sub, degenerate);
    if (!degenerate) return agents;
  }
  throw std::runtime_error("gen_noniid_regression: persistent degenerate shard");
}

std::vector<QuadraticLocal> gen_conditioned_consensus(int num_agents, int dim, double kappa,
                                                      std::uint64_t seed) {
  CounterRng rng(seed, 0x636f6e64ull);  // "cond" stream
  // common factor with spectrum linspace(1, kappa)
  Mat gauss(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(gauss);
  Mat q = qr.householderQ();
  Vec spectrum(dim);
  for (int j = 0; j < dim; ++j)
    spectrum[j] = 1.0 + (kappa - 1.0) * j / std::max(1, dim - 1);
  Mat h = q * spectrum.asDiagonal() * q.transpose();
  Mat a_common = Eigen::LLT<Mat>(h).matrixU();  // A'A = h
  std::vector<QuadraticLocal> agents;
  agents.reserve(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    // per-agent orthogonal row mix keeps the Gram identical
    Mat g2(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) g2(r, c) = rng.normal();
    Mat qi = Eigen::HouseholderQR<Mat>(g2).householderQ();
    Vec b(dim);
    for (int r = 0; r < dim; ++r) b[r] = rng.normal();
    agents.emplace_back(qi * a_common, b);
  }
  return agents;
}

double rate_rule_rho(const std::vector<QuadraticLocal>& agents, double eps) {
  double m = std::numeric_limits<double>::infinity(), L = 0.0;
  for (const auto& a : agents) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a.gram());
    m = std::min(m, es.eigenvalues().minCoeff());
    L = std::max(L, es.eigenvalues().maxCoeff());
  }
  const double kap = L / m;
  return std::pow(kap, eps) * std::sqrt(m * L);
}

SweepResult run_tradeoff_sweep(const SweepOptions& opt) {
  auto agents = gen_noniid_regression(opt.data, opt.data_seed);
  ConsensusInstance inst{agents, opt.lambda > 0 ? Regularizer::l1(opt.lambda)
                                                : Regularizer::zero(),
                         opt.rho};
  const auto fp = reference_solution(inst, 1e-12);

  SweepResult result;
  result.f_star = fp.f_star;
  struct Job {
    double delta;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double d : opt.delta_grid)
    for (auto s : opt.seeds) jobs.push_back({d, s});
  result.rows.resize(jobs.size());

  auto run_one = [&](std::size_t idx) {
    const auto& job = jobs[idx];
    ConsensusProblem problem{agents, {}, inst.g, 0};
    ConsensusConfig cfg;
    cfg.rho = opt.rho;
    cfg.alpha = opt.alpha;
    auto schedule = ThresholdSchedule::constant(job.delta);
    cfg.upload_policy = opt.policy == TriggerPolicy::Kind::Randomized
                            ? TriggerPolicy::randomized(schedule, opt.p_trig)
                            : (opt.policy == TriggerPolicy::Kind::RandomOnly
                                   ? TriggerPolicy::random_only(opt.p_trig)
                                   : TriggerPolicy::vanilla(schedule));
    cfg.download_policy = cfg.upload_policy;
    cfg.horizon = opt.horizon;
    cfg.seed = job.seed;
    cfg.reference = fp;
    auto res = run_consensus(problem, cfg);
    SweepRow row;
    row.delta = job.delta;
    row.p_trig = opt.p_trig;
    row.seed = job.seed;
    row.failed = res.failed;
    if (!res.failed) {
      row.final_f_gap = res.trace.back().f_gap;
      row.final_z_err_sq = res.trace.back().z_err_sq;
      row.load = res.log.load();
      row.uploads = res.log.uploads_sent;
      row.downloads = res.log.downloads_sent;
      row.drops = res.log.uploads_dropped + res.log.downloads_dropped;
    }
    result.rows[idx] = row;
  };

  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::vector<std::future<void>> futures;
    std::size_t next = 0;
    while (next < jobs.size()) {
      futures.clear();
      for (int w = 0; w < workers && next < jobs.size(); ++w, ++next)
        futures.push_back(std::async(std::launch::async, run_one, next));
      for (auto& f : futures) f.get();
    }
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# f_star=" << format_double(result.f_star) << "\n";
  out << "delta,p_trig,seed,f_gap,z_err_sq,load,uploads,downloads,drops,failed\n";
  for (const auto& r : result.rows) {
    out << format_double(r.delta) << "," << format_double(r.p_trig) << "," << r.seed << ","
        << format_double(r.final_f_gap) << "," << format_double(r.final_z_err_sq) << ","
        << format_double(r.load) << "," << r.uploads << "," << r.downloads << "," << r.drops
        << "," << (r.failed ? 1 : 0) << "\n";
  }
}

DropStudyResult run_drop_study(const DropStudyOptions& opt) {
  auto agents = gen_noniid_regression(opt.data, opt.data_seed);
  ConsensusInstance inst{agents, Regularizer::l1(opt.lambda), opt.rho};
  const auto fp = reference_solution(inst, 1e-12);
  DropStudyResult out;
  out.f_star = fp.f_star;
  for (int t : opt.reset_periods) {
    for (auto seed : opt.seeds) {
      ConsensusProblem problem{agents, {}, inst.g, 0};
      ConsensusConfig cfg;
      cfg.rho = opt.rho;
      cfg.alpha = opt.alpha;
      cfg.upload_policy = TriggerPolicy::vanilla(opt.delta);
      cfg.download_policy = TriggerPolicy::vanilla(opt.delta);
      cfg.upload_drop = DropModel{opt.p_drop, opt.chi_bar};
      cfg.reset_period = t;
      cfg.horizon = opt.horizon;
      cfg.seed = seed;
      cfg.reference = fp;
      auto res = run_consensus(problem, cfg);
      DropStudyRow row;
      row.reset_period = t;
      row.seed = seed;
      row.failed = res.failed;
      if (!res.failed) {
        row.final_f_gap = res.trace.back().f_gap;
        row.messages = res.log.total_sent();
        row.reset_messages = res.log.reset_messages;
        row.load_with_resets = res.log.load_with_resets();
      }
      out.rows.push_back(row);
      out.traces.push_back(std::move(res.trace));
    }
  }
  return out;
}

DecayStudyResult run_decay_study(const DecayStudyOptions& opt) {
  DecayStudyResult out;
  out.note =
      "k0 uses exponent 1/t: k0 = 1/((2/(1+tau^2))^(1/t) - 1); the induction "
      "requirement ((k0+1)/k0)^t <= 2/(1+tau^2) forces it";
  const int p = opt.dim;
  CounterRng rng(opt.seed, 0x6465636179ull);  // "decay" stream
  Mat gauss(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) gauss(i, j) = rng.normal();
  Mat q = Eigen::HouseholderQR<Mat>(gauss).householderQ();
  Vec spectrum(p);
  for (int j = 0; j < p; ++j)
    spectrum[j] = 1.0 + (opt.kappa - 1.0) * j / std::max(1, p - 1);
  Mat h = q * spectrum.asDiagonal() * q.transpose();
  Vec lin(p);
  for (int j = 0; j < p; ++j) lin[j] = rng.normal();

  GeneralProblem problem;
  problem.A = Mat::Identity(p, p);
  problem.B = -Mat::Identity(p, p);
  problem.c = Vec::Zero(p);
  problem.f_hessian = h;
  problem.f_linear = lin;
  problem.g = Regularizer::l1(opt.lambda);
  const double rho = std::sqrt(1.0 * opt.kappa);  // m=1, L=kappa, sigma(A)=1
  const auto fp = general_reference(problem, rho);
  const Vec xi_star = (Vec(2 * p) << fp.s_star, fp.u_star).finished();

  const auto cert = build_certificate(opt.kappa, 0.0, 1.0);
  const auto lti = LtiSystem::for_alpha(1.0);
  const auto sector = SectorMatrices::for_rate(opt.kappa, 0.0);
  const auto qres = compute_Q(cert, lti, sector);

  for (double t : opt.t_exponents) {
    GeneralConfig cfg;
    cfg.rho = rho;
    cfg.alpha = 1.0;
    // Delta_k^2 = q/(k+1)^t split evenly over the three channels
    auto sched = ThresholdSchedule::power_decay(std::sqrt(opt.q) / 3.0, t / 2.0);
    cfg.r_policy = TriggerPolicy::vanilla(sched);
    cfg.s_policy = TriggerPolicy::vanilla(sched);
    cfg.u_policy = TriggerPolicy::vanilla(sched);
    cfg.horizon = opt.horizon;
    cfg.seed = opt.seed;
    cfg.record = true;
    auto res = run_general(problem, cfg);
    std::vector<double> err_sq(res.record.horizon());
    for (int k = 0; k < res.record.horizon(); ++k)
      err_sq[k] = (res.record.s[k] - fp.s_star).squaredNorm() +
                  (res.record.u[k] - fp.u_star).squaredNorm();
    const auto bound = diminishing_bound(cert.tau, qres.lambda_max, opt.q, t,
                                         cert.sigma_min_P(), cert.sigma_max_P(), err_sq[0]);
    bool dominates = true;
    for (int k = 0; k < static_cast<int>(err_sq.size()); ++k)
      if (err_sq[k] > bound.at(k) + 1e-12) {
        dominates = false;
        break;
      }
    DecayStudyRow row;
    row.t = t;
    row.fitted_slope = fit_loglog_slope(err_sq, opt.horizon / 10, opt.horizon);
    row.bound_dominates = dominates;
    row.k0 = bound.k0;
    row.final_err_sq = err_sq.back();
    row.final_bound = bound.at(static_cast<int>(err_sq.size()) - 1);
    out.rows.push_back(row);
  }
  return out;
}

NonconvexStudyResult run_nonconvex_study(const NonconvexStudyOptions& opt) {
  CounterRng rng(opt.seed, 0x6e637678ull);  // "ncvx" stream
  const int n = opt.dim;
  std::vector<QuadraticLocal> data;
  std::vector<SmoothOracle> oracles;
  double l_max = 0.0;
  for (int i = 0; i < opt.num_agents; ++i) {
    Mat m(6, n);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = rng.normal();
    Mat h = 0.5 * m.transpose() * m + 0.3 * Mat::Identity(n, n);
    Vec q(n);
    for (int j = 0; j < n; ++j) q[j] = rng.normal();
    const double amp = opt.sin_amplitude;
    const double l_i =
        Eigen::SelfAdjointEigenSolver<Mat>(h).eigenvalues().maxCoeff() + amp;
    l_max = std::max(l_max, l_i);
    oracles.emplace_back(
        [h, q, amp](const Vec& x) {
          return 0.5 * x.dot(h * x) + q.dot(x) + amp * x.array().sin().sum();
        },
        [h, q, amp](const Vec& x) { return Vec(h * x + q + amp * x.array().cos().matrix()); },
        l_i, 0.0);
  }
  ConsensusProblem problem;
  problem.oracles = std::move(oracles);
  problem.g = Regularizer::l1(opt.lambda);
  problem.dim = n;
  ConsensusConfig cfg;
  cfg.rho = opt.rho;
  cfg.alpha = 1.0;
  auto sched = ThresholdSchedule::power_decay(opt.delta0, 2.0);
  cfg.upload_policy = TriggerPolicy::vanilla(sched);
  cfg.download_policy = TriggerPolicy::vanilla(sched);
  cfg.horizon = opt.horizon;
  cfg.seed = opt.seed;
  cfg.mode.exact = false;
  cfg.mode.inexact.steps = opt.inner_steps;
  cfg.mode.inexact.learning_rate = 0.4 / (l_max + opt.rho);
  auto res = run_consensus(problem, cfg);
  NonconvexStudyResult out;
  out.cesaro = nonconvex_metrics(res.trace, opt.num_agents);
  for (double v : out.cesaro)
    if (v < 0) out.all_nonnegative = false;
  out.fitted_slope = fit_loglog_slope(out.cesaro, 100, opt.horizon);
  return out;
}

GraphStudyResult run_graph_study(const GraphStudyOptions& opt) {
  RegressionDataOptions data;
  data.num_agents = opt.num_agents;
  data.rows_per_agent = opt.rows_per_agent;
  data.dim = opt.dim;
  auto agents = gen_noniid_regression(data, opt.seed + 0x67);
  ConsensusInstance inst{agents, Regularizer::zero(), opt.rho};
  const auto fp = reference_solution(inst);
  auto graph = AgentGraph::random_connected(opt.num_agents, opt.num_edges, opt.seed);

  auto messages_to_target = [&](const GraphResult& res) -> long {
    for (const auto& row : res.trace.rows)
      if (relative_gap(row.f_value, fp.f_star) <= opt.target_gap) return row.uploads;
    return -1;
  };

  GraphStudyResult out;
  GraphConfig cfg;
  cfg.rho = opt.rho;
  cfg.policy = TriggerPolicy::vanilla(opt.delta);
  cfg.horizon = opt.horizon;
  cfg.seed = opt.seed;
  cfg.reference = fp;
  auto event_res = run_graph(agents, graph, cfg);
  out.event_messages = messages_to_target(event_res);
  out.event_final_gap = relative_gap(event_res.trace.back().f_value, fp.f_star);

  long best = -1;
  for (double p : opt.p_grid) {
    GraphConfig rcfg = cfg;
    rcfg.policy = TriggerPolicy::random_only(p);
    auto res = run_graph(agents, graph, rcfg);
    long m = messages_to_target(res);
    if (m >= 0 && (best < 0 || m < best)) best = m;
  }
  out.random_best_messages = best;
  out.event_wins = out.event_messages >= 0 && (best < 0 || out.event_messages < best);
  return out;
}

}  // namespace evadmm
