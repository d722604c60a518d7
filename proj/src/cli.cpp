#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "evadmm/harness.hpp"

namespace evadmm {

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitSpecError = 2;

const std::set<std::string>& allowed_keys(const std::string& kind) {
  static const std::set<std::string> common{"kind",    "seed",   "seeds",  "out_dir",
                                            "format"};
  static const std::map<std::string, std::set<std::string>> per_kind{
      {"consensus-lasso",
       {"num_agents", "rows_per_agent", "dim", "lambda", "rho", "alpha", "delta", "delta_z",
        "p_trig", "policy", "p_drop", "chi_bar", "reset_period", "horizon", "data_seed"}},
      {"consensus-regression",
       {"num_agents", "rows_per_agent", "dim", "rho", "alpha", "delta", "delta_z", "p_trig",
        "policy", "p_drop", "chi_bar", "reset_period", "horizon", "data_seed"}},
      {"tradeoff-sweep",
       {"num_agents", "rows_per_agent", "dim", "lambda", "rho", "alpha", "delta_grid",
        "p_trig", "policy", "horizon", "data_seed", "workers"}},
      {"drop-study",
       {"num_agents", "rows_per_agent", "dim", "lambda", "rho", "alpha", "delta", "p_drop",
        "chi_bar", "reset_periods", "horizon", "data_seed"}},
      {"decay-study", {"kappa", "lambda", "dim", "q", "t_exponents", "horizon"}},
      {"nonconvex-study",
       {"num_agents", "dim", "sin_amplitude", "lambda", "rho", "delta0", "horizon",
        "inner_steps"}},
      {"graph",
       {"num_agents", "num_edges", "dim", "rows_per_agent", "rho", "delta", "p_grid",
        "target_gap", "horizon", "graph_file"}},
      {"certify-grid", {"kappas", "epsilons", "alphas"}},
      {"gen-data", {"num_agents", "rows_per_agent", "dim", "data_seed"}},
  };
  auto it = per_kind.find(kind);
  if (it == per_kind.end()) return common;
  static thread_local std::set<std::string> merged;
  merged = common;
  merged.insert(it->second.begin(), it->second.end());
  return merged;
}

int validate_spec(const json& spec, const std::string& kind) {
  const auto& allowed = allowed_keys(kind);
  for (auto it = spec.begin(); it != spec.end(); ++it) {
    if (!allowed.count(it.key())) {
      std::cerr << "spec error: unknown key '" << it.key() << "' for kind '" << kind << "'\n";
      return kExitSpecError;
    }
  }
  return kExitOk;
}

json load_spec(const std::string& path, std::string& kind, int& status) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "spec error: cannot open " << path << "\n";
    status = kExitSpecError;
    return {};
  }
  json spec = json::parse(in, nullptr, false);
  if (spec.is_discarded() || !spec.is_object()) {
    std::cerr << "spec error: invalid JSON in " << path << "\n";
    status = kExitSpecError;
    return {};
  }
  if (!spec.contains("kind") || !spec["kind"].is_string()) {
    std::cerr << "spec error: missing 'kind'\n";
    status = kExitSpecError;
    return {};
  }
  kind = spec["kind"].get<std::string>();
  status = validate_spec(spec, kind);
  return spec;
}

template <typename T>
T get_or(const json& spec, const std::string& key, T fallback) {
  if (spec.contains(key)) return spec[key].get<T>();
  return fallback;
}

std::vector<std::uint64_t> seeds_from(const json& spec, std::uint64_t fallback) {
  if (spec.contains("seeds")) return spec["seeds"].get<std::vector<std::uint64_t>>();
  return {get_or<std::uint64_t>(spec, "seed", fallback)};
}

int cmd_certify(double kappa, double eps, double alpha, double delta, int reset_period,
                double chi_bar, const std::string& out_path) {
  json report;
  try {
    const auto cert = build_certificate(kappa, eps, alpha);
    const auto feas = check_feasibility(cert);
    const auto lti = LtiSystem::for_alpha(alpha);
    const auto sector = SectorMatrices::for_rate(kappa, eps);
    const auto q = compute_Q(cert, lti, sector);
    const double t_eff = reset_period > 0 ? reset_period : 0;
    const double chi_term = chi_bar > 0 ? 3.0 * t_eff * chi_bar : 0.0;
    const double delta_agg = 3.0 * delta + chi_term;  // equal per-channel knobs
    report["kappa"] = kappa;
    report["eps"] = eps;
    report["alpha"] = alpha;
    report["feasible"] = feas.feasible;
    report["max_eigenvalue"] = feas.max_eigenvalue;
    report["minors"] = feas.leading_minors;
    report["tau"] = cert.tau;
    report["kappa_P"] = cert.kappa_P;
    report["gamma3"] = cert.gamma3;
    report["gamma4"] = cert.gamma4;
    report["lambda_max_Q"] = q.lambda_max;
    report["delta_aggregate"] = delta_agg;
    report["floor"] = q.floor(delta_agg, cert.sigma_min_P(), cert.tau);
    report["floor_cap"] = cert.floor_cap_coeff * delta_agg * delta_agg;
  } catch (const std::exception& e) {
    std::cerr << "certify failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << text;
  }
  return kExitOk;
}

int run_single(const json& spec, const std::string& kind, const std::string& out_dir) {
  RegressionDataOptions data;
  data.num_agents = get_or(spec, "num_agents", 50);
  data.rows_per_agent = get_or(spec, "rows_per_agent", 30);
  data.dim = get_or(spec, "dim", 10);
  const double lambda = kind == "consensus-lasso" ? get_or(spec, "lambda", 0.1) : 0.0;
  auto agents = gen_noniid_regression(data, get_or<std::uint64_t>(spec, "data_seed", 123));
  ConsensusInstance inst{agents,
                         lambda > 0 ? Regularizer::l1(lambda) : Regularizer::zero(),
                         get_or(spec, "rho", 1.0)};
  const auto fp = reference_solution(inst);
  ConsensusProblem problem{agents, {}, inst.g, 0};
  ConsensusConfig cfg;
  cfg.rho = inst.rho;
  cfg.alpha = get_or(spec, "alpha", 1.0);
  const double delta = get_or(spec, "delta", 0.0);
  const double delta_z = get_or(spec, "delta_z", delta);
  const std::string policy = get_or<std::string>(spec, "policy", "vanilla");
  auto mk = [&](double d) {
    if (policy == "randomized")
      return TriggerPolicy::randomized(ThresholdSchedule::constant(d),
                                       get_or(spec, "p_trig", 0.0));
    if (policy == "random_only") return TriggerPolicy::random_only(get_or(spec, "p_trig", 0.0));
    return TriggerPolicy::vanilla(d);
  };
  cfg.upload_policy = mk(delta);
  cfg.download_policy = mk(delta_z);
  cfg.upload_drop = DropModel{get_or(spec, "p_drop", 0.0), get_or(spec, "chi_bar", 10.0)};
  cfg.reset_period = get_or(spec, "reset_period", 0);
  cfg.horizon = get_or(spec, "horizon", 50);
  cfg.seed = seeds_from(spec, 1)[0];
  cfg.reference = fp;
  auto res = run_consensus(problem, cfg);
  if (res.failed) {
    std::cerr << "run failed: " << res.error << "\n";
    return kExitRunFailure;
  }
  std::filesystem::create_directories(out_dir);
  write_trace_csv(res.trace, out_dir + "/trace.csv");
  std::cout << "final f_gap " << format_double(res.trace.back().f_gap) << ", load "
            << format_double(res.log.load()) << ", trace " << out_dir << "/trace.csv\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"event-based distributed ADMM simulator and certificate checker"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", format = "csv";
  std::uint64_t seed = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--spec", spec_path, "JSON experiment spec");
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--format", format, "output format (csv)");
  };

  auto* c_run = app.add_subcommand("run", "single consensus run");
  add_common(c_run);
  auto* c_sweep = app.add_subcommand("sweep", "communication/accuracy trade-off sweep");
  add_common(c_sweep);
  auto* c_drop = app.add_subcommand("drop-study", "packet-drop and reset-period study");
  add_common(c_drop);
  auto* c_decay = app.add_subcommand("decay-study", "decaying-threshold rate study");
  add_common(c_decay);
  auto* c_ncvx = app.add_subcommand("nonconvex-study", "nonconvex stationarity-rate study");
  add_common(c_ncvx);
  auto* c_graph = app.add_subcommand("graph-run", "decentralized graph study");
  add_common(c_graph);
  auto* c_gen = app.add_subcommand("gen-data", "emit a non-iid regression dataset");
  add_common(c_gen);

  auto* c_cert = app.add_subcommand("certify", "closed-form certificate report");
  double kappa = 1e4, eps = 0.0, alpha = 1.0, delta = 0.0, chi_bar = 0.0;
  int reset_period = 0;
  std::string cert_out;
  c_cert->add_option("--kappa", kappa, "condition number")->required();
  c_cert->add_option("--eps", eps, "step-size exponent");
  c_cert->add_option("--alpha", alpha, "relaxation parameter");
  c_cert->add_option("--delta", delta, "per-channel threshold");
  c_cert->add_option("--T", reset_period, "reset period");
  c_cert->add_option("--chi", chi_bar, "per-channel drop bound");
  c_cert->add_option("--out", cert_out, "report path (stdout when empty)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSpecError;
  }

  if (c_cert->parsed())
    return cmd_certify(kappa, eps, alpha, delta, reset_period, chi_bar, cert_out);

  json spec = json::object();
  std::string kind;
  if (!spec_path.empty()) {
    int status = kExitOk;
    spec = load_spec(spec_path, kind, status);
    if (status != kExitOk) return status;
  }

  try {
    if (c_run->parsed()) {
      if (kind.empty()) kind = "consensus-lasso";
      if (kind != "consensus-lasso" && kind != "consensus-regression") {
        std::cerr << "spec error: run expects a consensus kind\n";
        return kExitSpecError;
      }
      return run_single(spec, kind, out_dir);
    }
    if (c_sweep->parsed()) {
      if (!kind.empty() && kind != "tradeoff-sweep") {
        std::cerr << "spec error: sweep expects kind tradeoff-sweep\n";
        return kExitSpecError;
      }
      SweepOptions opt;
      opt.data.num_agents = get_or(spec, "num_agents", 50);
      opt.data.rows_per_agent = get_or(spec, "rows_per_agent", 30);
      opt.data.dim = get_or(spec, "dim", 10);
      opt.lambda = get_or(spec, "lambda", 0.1);
      opt.rho = get_or(spec, "rho", 1.0);
      opt.alpha = get_or(spec, "alpha", 1.0);
      opt.horizon = get_or(spec, "horizon", 50);
      opt.data_seed = get_or<std::uint64_t>(spec, "data_seed", 123);
      opt.workers = get_or(spec, "workers", 1);
      opt.delta_grid = get_or<std::vector<double>>(
          spec, "delta_grid", {0.0, 1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2});
      opt.seeds = seeds_from(spec, seed);
      auto result = run_tradeoff_sweep(opt);
      std::filesystem::create_directories(out_dir);
      write_sweep_csv(result, out_dir + "/sweep.csv");
      std::cout << "wrote " << out_dir << "/sweep.csv (" << result.rows.size() << " rows)\n";
      for (const auto& r : result.rows)
        if (r.failed) return kExitRunFailure;
      return kExitOk;
    }
    if (c_drop->parsed()) {
      DropStudyOptions opt;
      opt.data.num_agents = get_or(spec, "num_agents", 50);
      opt.data.rows_per_agent = get_or(spec, "rows_per_agent", 30);
      opt.data.dim = get_or(spec, "dim", 10);
      opt.lambda = get_or(spec, "lambda", 0.1);
      opt.rho = get_or(spec, "rho", 1.0);
      opt.alpha = get_or(spec, "alpha", 1.0);
      opt.delta = get_or(spec, "delta", 1e-3);
      opt.p_drop = get_or(spec, "p_drop", 0.3);
      opt.chi_bar = get_or(spec, "chi_bar", 10.0);
      opt.horizon = get_or(spec, "horizon", 50);
      opt.data_seed = get_or<std::uint64_t>(spec, "data_seed", 123);
      if (spec.contains("reset_periods"))
        opt.reset_periods = spec["reset_periods"].get<std::vector<int>>();
      opt.seeds = seeds_from(spec, seed);
      auto result = run_drop_study(opt);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(out_dir + "/drop_study.csv", std::ios::binary);
      out << "# f_star=" << format_double(result.f_star) << "\n";
      out << "T,seed,f_gap,messages,reset_messages,load_with_resets,failed\n";
      bool any_failed = false;
      for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        out << r.reset_period << "," << r.seed << "," << format_double(r.final_f_gap) << ","
            << r.messages << "," << r.reset_messages << ","
            << format_double(r.load_with_resets) << "," << (r.failed ? 1 : 0) << "\n";
        write_trace_csv(result.traces[i], out_dir + "/drop_T" +
                                              std::to_string(r.reset_period) + "_seed" +
                                              std::to_string(r.seed) + ".csv");
        any_failed = any_failed || r.failed;
      }
      std::cout << "wrote " << out_dir << "/drop_study.csv\n";
      return any_failed ? kExitRunFailure : kExitOk;
    }
    if (c_decay->parsed()) {
      DecayStudyOptions opt;
      opt.kappa = get_or(spec, "kappa", 100.0);
      opt.lambda = get_or(spec, "lambda", 0.3);
      opt.dim = get_or(spec, "dim", 6);
      opt.q = get_or(spec, "q", 1e-4);
      opt.horizon = get_or(spec, "horizon", 20000);
      if (spec.contains("t_exponents"))
        opt.t_exponents = spec["t_exponents"].get<std::vector<double>>();
      opt.seed = seeds_from(spec, seed)[0];
      auto result = run_decay_study(opt);
      json report;
      report["note"] = result.note;
      for (const auto& r : result.rows)
        report["rows"].push_back({{"t", r.t},
                                  {"slope", r.fitted_slope},
                                  {"bound_dominates", r.bound_dominates},
                                  {"k0", r.k0},
                                  {"final_err_sq", r.final_err_sq},
                                  {"final_bound", r.final_bound}});
      std::filesystem::create_directories(out_dir);
      std::ofstream out(out_dir + "/decay_study.json", std::ios::binary);
      out << report.dump(2) << "\n";
      std::cout << report.dump(2) << "\n";
      return kExitOk;
    }
    if (c_ncvx->parsed()) {
      NonconvexStudyOptions opt;
      opt.num_agents = get_or(spec, "num_agents", 10);
      opt.dim = get_or(spec, "dim", 4);
      opt.sin_amplitude = get_or(spec, "sin_amplitude", 1.0);
      opt.lambda = get_or(spec, "lambda", 0.05);
      opt.rho = get_or(spec, "rho", 2.0);
      opt.delta0 = get_or(spec, "delta0", 0.5);
      opt.horizon = get_or(spec, "horizon", 10000);
      opt.inner_steps = get_or(spec, "inner_steps", 30);
      opt.seed = seeds_from(spec, seed)[0];
      auto result = run_nonconvex_study(opt);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(out_dir + "/nonconvex_cesaro.csv", std::ios::binary);
      out << "K,cesaro\n";
      for (std::size_t k = 0; k < result.cesaro.size(); ++k)
        out << k + 1 << "," << format_double(result.cesaro[k]) << "\n";
      std::cout << "slope " << format_double(result.fitted_slope) << ", wrote " << out_dir
                << "/nonconvex_cesaro.csv\n";
      return kExitOk;
    }
    if (c_graph->parsed()) {
      GraphStudyOptions opt;
      opt.num_agents = get_or(spec, "num_agents", 10);
      opt.num_edges = get_or(spec, "num_edges", 35);
      opt.dim = get_or(spec, "dim", 5);
      opt.rows_per_agent = get_or(spec, "rows_per_agent", 30);
      opt.rho = get_or(spec, "rho", 1.0);
      opt.delta = get_or(spec, "delta", 5e-4);
      opt.target_gap = get_or(spec, "target_gap", 1e-3);
      opt.horizon = get_or(spec, "horizon", 3000);
      if (spec.contains("p_grid")) opt.p_grid = spec["p_grid"].get<std::vector<double>>();
      opt.seed = seeds_from(spec, seed)[0];
      auto result = run_graph_study(opt);
      json report{{"event_messages", result.event_messages},
                  {"random_best_messages", result.random_best_messages},
                  {"event_final_gap", result.event_final_gap},
                  {"event_wins", result.event_wins}};
      std::cout << report.dump(2) << "\n";
      return result.event_messages >= 0 ? kExitOk : kExitRunFailure;
    }
    if (c_gen->parsed()) {
      RegressionDataOptions opt;
      opt.num_agents = get_or(spec, "num_agents", 50);
      opt.rows_per_agent = get_or(spec, "rows_per_agent", 30);
      opt.dim = get_or(spec, "dim", 10);
      auto agents =
          gen_noniid_regression(opt, get_or<std::uint64_t>(spec, "data_seed", seed));
      std::filesystem::create_directories(out_dir);
      for (std::size_t i = 0; i < agents.size(); ++i) {
        std::ofstream out(out_dir + "/agent_" + std::to_string(i) + ".csv",
                          std::ios::binary);
        for (Eigen::Index r = 0; r < agents[i].design.rows(); ++r) {
          for (Eigen::Index c = 0; c < agents[i].design.cols(); ++c)
            out << format_double(agents[i].design(r, c)) << ",";
          out << format_double(agents[i].targets[r]) << "\n";
        }
      }
      std::cout << "wrote " << agents.size() << " agent files to " << out_dir << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitSpecError;
}

}  // namespace evadmm
