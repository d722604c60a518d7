#include <doctest.h>

#include <cmath>

#include "evadmm/harness.hpp"

using namespace evadmm;

TEST_CASE("data generation is deterministic and shaped per spec") {
  RegressionDataOptions opt;
  opt.num_agents = 12;
  opt.rows_per_agent = 20;
  opt.dim = 6;
  auto a = gen_noniid_regression(opt, 5);
  auto b = gen_noniid_regression(opt, 5);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].design == b[i].design);
    CHECK(a[i].targets == b[i].targets);
    CHECK(a[i].design.rows() == 20);
    CHECK(a[i].design.cols() == 6);
    // centered unit-norm columns and targets
    for (int j = 0; j < 6; ++j) {
      CHECK(std::abs(a[i].design.col(j).mean()) < 1e-12);
      CHECK(a[i].design.col(j).norm() == doctest::Approx(1.0));
    }
    CHECK(a[i].targets.norm() == doctest::Approx(1.0));
  }
  auto c = gen_noniid_regression(opt, 6);
  CHECK(a[0].design != c[0].design);
}

TEST_CASE("local minimizers are mutually distant on the default config") {
  RegressionDataOptions opt;  // defaults: N=50, 30 rows, dim 10
  auto agents = gen_noniid_regression(opt, 123);
  std::vector<Vec> minimizers;
  double mean_norm = 0.0;
  for (const auto& a : agents) {
    Vec x = a.gram().ldlt().solve(a.design.transpose() * a.targets);
    mean_norm += x.norm();
    minimizers.push_back(std::move(x));
  }
  mean_norm /= minimizers.size();
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < minimizers.size(); ++i)
    for (std::size_t j = i + 1; j < minimizers.size(); ++j)
      min_dist = std::min(min_dist, (minimizers[i] - minimizers[j]).norm());
  CHECK(min_dist > 0.1 * mean_norm);
}

TEST_CASE("conditioned instances hit the requested kappa with identical Grams") {
  auto agents = gen_conditioned_consensus(8, 5, 64.0, 3);
  Mat g0 = agents[0].gram();
  for (const auto& a : agents) CHECK((a.gram() - g0).norm() < 1e-8 * g0.norm());
  Eigen::SelfAdjointEigenSolver<Mat> es(g0);
  CHECK(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff() ==
        doctest::Approx(64.0).epsilon(1e-6));
  CHECK(rate_rule_rho(agents) ==
        doctest::Approx(std::sqrt(es.eigenvalues().minCoeff() *
                                  es.eigenvalues().maxCoeff())).epsilon(1e-6));
}

TEST_CASE("tradeoff sweep: full-communication row and monotone load") {
  SweepOptions opt;
  opt.data.num_agents = 10;
  opt.data.rows_per_agent = 20;
  opt.data.dim = 5;
  opt.delta_grid = {0.0, 1e-4, 1e-3, 1e-2};
  opt.seeds = {3};
  auto res = run_tradeoff_sweep(opt);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].load == doctest::Approx(1.0));
  double best_gap = res.rows[0].final_f_gap;
  for (const auto& r : res.rows) {
    CHECK_FALSE(r.failed);
    CHECK(r.final_f_gap >= best_gap - 1e-12);
  }
  for (std::size_t i = 1; i < res.rows.size(); ++i)
    CHECK(res.rows[i].load <= res.rows[i - 1].load + 1e-12);
}

TEST_CASE("sweep rows are deterministic and parallel execution matches serial") {
  SweepOptions opt;
  opt.data.num_agents = 8;
  opt.data.rows_per_agent = 16;
  opt.data.dim = 4;
  opt.delta_grid = {0.0, 1e-3, 1e-2};
  opt.seeds = {1, 2};
  auto serial = run_tradeoff_sweep(opt);
  opt.workers = 4;
  auto parallel = run_tradeoff_sweep(opt);
  REQUIRE(serial.rows.size() == parallel.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i].final_f_gap == parallel.rows[i].final_f_gap);
    CHECK(serial.rows[i].uploads == parallel.rows[i].uploads);
  }
}

TEST_CASE("drop study: p_drop = 0 makes all reset periods coincide") {
  DropStudyOptions opt;
  opt.data.num_agents = 10;
  opt.data.rows_per_agent = 20;
  opt.data.dim = 5;
  opt.p_drop = 0.0;
  opt.seeds = {4};
  auto res = run_drop_study(opt);
  REQUIRE(res.rows.size() == 4);
  for (const auto& r : res.rows) {
    CHECK_FALSE(r.failed);
    // resets only repair event-induced drift here; curves stay within the
    // Delta-floor of one another
    CHECK(std::abs(r.final_f_gap - res.rows[0].final_f_gap) < 1e-4);
  }
}

TEST_CASE("drop study qualitative ordering at reduced scale") {
  DropStudyOptions opt;
  opt.data.num_agents = 12;
  opt.data.rows_per_agent = 20;
  opt.data.dim = 5;
  opt.seeds = {1};
  auto res = run_drop_study(opt);
  REQUIRE(res.rows.size() == 4);
  double t5 = res.rows[1].final_f_gap;
  double tinf = res.rows[3].final_f_gap;
  CHECK(tinf > 10.0 * t5);
}

TEST_CASE("decay study slopes and bound domination at reduced scale") {
  DecayStudyOptions opt;
  opt.horizon = 4000;
  auto res = run_decay_study(opt);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].fitted_slope == doctest::Approx(-1.0).epsilon(0.3));
  CHECK(res.rows[1].fitted_slope == doctest::Approx(-2.0).epsilon(0.15));
  CHECK(res.rows[0].bound_dominates);
  CHECK(res.rows[1].bound_dominates);
  CHECK(res.note.find("1/t") != std::string::npos);
}

TEST_CASE("constant threshold plateaus at a positive floor") {
  // t = 0 analogue of the decay study: error stalls above zero
  auto agents = gen_conditioned_consensus(10, 5, 100.0, 7);
  const double rho = rate_rule_rho(agents);
  ConsensusInstance inst{agents, Regularizer::zero(), rho};
  auto fp = reference_solution(inst);
  ConsensusConfig cfg;
  cfg.rho = rho;
  cfg.upload_policy = TriggerPolicy::vanilla(1e-4);
  cfg.download_policy = TriggerPolicy::vanilla(1e-4);
  cfg.horizon = 3000;
  cfg.reference = fp;
  auto res = run_consensus({agents, {}, inst.g, 0}, cfg);
  REQUIRE_FALSE(res.failed);
  double tail_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = res.trace.rows.size() - 500; k < res.trace.rows.size(); ++k)
    tail_min = std::min(tail_min, res.trace.rows[k].z_err_sq);
  CHECK(tail_min > 1e-18);
}

TEST_CASE("nonconvex study metric is nonnegative with a roughly 1/K slope") {
  NonconvexStudyOptions opt;
  opt.horizon = 2000;
  auto res = run_nonconvex_study(opt);
  CHECK(res.all_nonnegative);
  CHECK(res.fitted_slope < -0.7);
  CHECK(res.fitted_slope > -1.3);
}

TEST_CASE("zero-threshold nonconvex run decays at least as fast") {
  NonconvexStudyOptions opt;
  opt.horizon = 800;
  auto noisy = run_nonconvex_study(opt);
  opt.delta0 = 0.0;
  auto clean = run_nonconvex_study(opt);
  CHECK(clean.cesaro.back() <= noisy.cesaro.back() * (1.0 + 1e-9));
}

TEST_CASE("graph study: event-based beats pure random selection") {
  GraphStudyOptions opt;
  opt.horizon = 2500;
  auto res = run_graph_study(opt);
  CHECK(res.event_messages > 0);
  CHECK(res.event_wins);
}
