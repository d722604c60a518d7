#include <doctest.h>

#include <cmath>

#include "evadmm/certify.hpp"
#include "evadmm/general.hpp"

using namespace evadmm;

namespace {

Mat random_matrix(int r, int c, CounterRng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Vec random_vec(int n, CounterRng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

GeneralProblem lasso_shape(int p, double kappa, double lambda, CounterRng& rng) {
  Mat g = random_matrix(p, p, rng);
  Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
  Vec spec(p);
  for (int j = 0; j < p; ++j) spec[j] = 1.0 + (kappa - 1.0) * j / std::max(1, p - 1);
  GeneralProblem problem;
  problem.A = Mat::Identity(p, p);
  problem.B = -Mat::Identity(p, p);
  problem.c = Vec::Zero(p);
  problem.f_hessian = q * spec.asDiagonal() * q.transpose();
  problem.f_linear = random_vec(p, rng);
  problem.g = lambda > 0 ? Regularizer::l1(lambda) : Regularizer::zero();
  return problem;
}

}  // namespace

TEST_CASE("certificate closed forms") {
  auto cert = build_certificate(100.0, 0.0, 1.0);
  CHECK(cert.tau == doctest::Approx(0.975));  // 1 - 1/40
  CHECK(cert.kappa_P == doctest::Approx(20.0 / 18.0));
  // eigenvalue-ratio cross-check of the kappa_P formula
  CHECK(cert.kappa_P == doctest::Approx(cert.sigma_max_P() / cert.sigma_min_P()));
  CHECK(cert.floor_cap_coeff == doctest::Approx(60.0 * 100.0 * 100.0));
}

TEST_CASE("kappa_P equals the eigenvalue ratio away from alpha = 1") {
  for (double alpha : {0.8, 1.2, 1.5}) {
    auto cert = build_certificate(400.0, 0.5, alpha);
    CHECK(cert.kappa_P ==
          doctest::Approx(cert.sigma_max_P() / cert.sigma_min_P()).epsilon(1e-10));
  }
}

TEST_CASE("parameter range validation") {
  CHECK_THROWS(build_certificate(0.5, 0.0, 1.0));
  CHECK_THROWS(build_certificate(100.0, -0.1, 1.0));
  CHECK_THROWS(build_certificate(100.0, 0.0, 0.5));
  CHECK_THROWS(build_certificate(100.0, 0.0, 2.5));
}

TEST_CASE("lmi feasible at large kappa, returns a matrix at tiny kappa") {
  auto feas = check_feasibility(build_certificate(1e4, 0.0, 1.0));
  CHECK(feas.feasible);
  CHECK(feas.max_eigenvalue <= 1e-9 * feas.matrix_norm);
  // kappa = 2 is far below the onset; no feasibility claim, just a matrix
  auto small = check_feasibility(build_certificate(2.0, 0.0, 1.0));
  CHECK(std::isfinite(small.max_eigenvalue));
}

TEST_CASE("lmi P-blocks scale linearly in P") {
  auto cert = build_certificate(300.0, 0.0, 1.2);
  auto lti = LtiSystem::for_alpha(1.2);
  auto sector = SectorMatrices::for_rate(300.0, 0.0);
  Mat4 base = lmi_matrix(cert, lti, sector);
  Certificate scaled = cert;
  scaled.P *= 2.0;
  Mat4 twice = lmi_matrix(scaled, lti, sector);
  // subtract the sector part (independent of P): difference must equal the
  // P-quadratic part once more
  Certificate zeroed = cert;
  zeroed.Lambda1 = zeroed.Lambda2 = 0.0;
  Mat4 p_part = lmi_matrix(zeroed, lti, sector);
  CHECK((twice - base - p_part).norm() < 1e-12 * base.norm());
}

TEST_CASE("feasibility is monotone in kappa along alpha = 1, eps = 0") {
  bool seen_feasible = false;
  for (double k = 5.0; k < 2e5; k *= 1.35) {
    bool f = check_feasibility(build_certificate(k, 0.0, 1.0)).feasible;
    if (seen_feasible) CHECK(f);
    seen_feasible = seen_feasible || f;
  }
  CHECK(seen_feasible);
}

TEST_CASE("sector matrices match the hat-constant parameterization") {
  const double kappa = 50.0, eps = 0.5;
  auto a = SectorMatrices::for_rate(kappa, eps);
  // with the rate rule: m_hat = kappa^{-eps-1/2}, L_hat = kappa^{1/2-eps}
  auto b = SectorMatrices::from_constants(std::pow(kappa, -eps - 0.5),
                                          std::pow(kappa, 0.5 - eps));
  CHECK((a.M1 - b.M1).norm() < 1e-12 * a.M1.norm());
  CHECK((a.M2 - b.M2).norm() == 0.0);
}

TEST_CASE("Q floor: zero at Delta 0, quadruples with doubled Delta, capped") {
  auto cert = build_certificate(10.0, 0.0, 1.0);
  auto lti = LtiSystem::for_alpha(1.0);
  auto sector = SectorMatrices::for_rate(10.0, 0.0);
  auto q = compute_Q(cert, lti, sector);
  CHECK(q.floor(0.0, cert.sigma_min_P(), cert.tau) == 0.0);
  double f1 = q.floor(0.01, cert.sigma_min_P(), cert.tau);
  double f2 = q.floor(0.02, cert.sigma_min_P(), cert.tau);
  CHECK(f2 == doctest::Approx(4.0 * f1));
  // paper cap at kappa = 10: 60 * 100 * 1e-4 = 0.6
  CHECK(min_floor_over_gamma_grid(10.0, 0.0, 1.0, 0.01) <= 0.6);
}

TEST_CASE("floor cap holds over the parameter grid") {
  for (double kappa : {10.0, 100.0, 1000.0}) {
    for (double alpha : {0.8, 1.0, 1.2, 1.5}) {
      for (double eps : {0.0, 0.5}) {
        auto cert = build_certificate(kappa, eps, alpha);
        double floor = min_floor_over_gamma_grid(kappa, eps, alpha, 1.0);
        CHECK(floor <= cert.floor_cap_coeff);
      }
    }
  }
}

TEST_CASE("state recursion replay is exact, also with events and drops") {
  CounterRng rng(23);
  auto problem = lasso_shape(5, 60.0, 0.3, rng);
  const double rho = std::sqrt(60.0);
  GeneralConfig cfg;
  cfg.rho = rho;
  cfg.r_policy = cfg.s_policy = cfg.u_policy = TriggerPolicy::vanilla(0.0);
  cfg.horizon = 50;
  auto clean = run_general(problem, cfg);
  REQUIRE_FALSE(clean.failed);
  auto r1 = verify_state_recursion(clean.record);
  CHECK(r1.max_relative < 1e-12);

  cfg.r_policy = cfg.s_policy = cfg.u_policy = TriggerPolicy::vanilla(0.1);
  cfg.r_drop = cfg.s_drop = cfg.u_drop = DropModel{0.3, 100.0};
  cfg.reset_period = 7;
  auto noisy = run_general(problem, cfg);
  REQUIRE_FALSE(noisy.failed);
  auto r2 = verify_state_recursion(noisy.record);
  CHECK(r2.max_relative < 1e-12);
}

TEST_CASE("mutating one recorded error breaks the replay (test of the test)") {
  CounterRng rng(29);
  auto problem = lasso_shape(4, 25.0, 0.2, rng);
  GeneralConfig cfg;
  cfg.rho = 5.0;
  cfg.r_policy = cfg.s_policy = cfg.u_policy = TriggerPolicy::vanilla(0.05);
  cfg.horizon = 30;
  auto res = run_general(problem, cfg);
  REQUIRE_FALSE(res.failed);
  res.record.e[10][2][0] += 1e-3;
  auto r = verify_state_recursion(res.record);
  CHECK(r.max_relative >= 1e-4);
}

TEST_CASE("sector inequalities hold along strongly convex runs") {
  CounterRng rng(31);
  const double kappa = 80.0;
  auto problem = lasso_shape(5, kappa, 0.25, rng);
  const double rho = std::sqrt(kappa);
  auto fp = general_reference(problem, rho);
  GeneralConfig cfg;
  cfg.rho = rho;
  cfg.r_policy = cfg.s_policy = cfg.u_policy = TriggerPolicy::vanilla(1e-3);
  cfg.horizon = 200;
  auto res = run_general(problem, cfg);
  REQUIRE_FALSE(res.failed);
  auto [m_hat, l_hat] = problem.scaled_constants(rho);
  auto sector = SectorMatrices::from_constants(m_hat, l_hat);
  for (int k = 0; k < res.record.horizon(); ++k) {
    // w1 = (r_{k+1} - c, grad fhat), w2 = (s_{k+1}, gamma)
    Vec a1 = res.record.r_next[k] - res.record.c - (fp.r_star - res.record.c);
    Vec b1 = res.record.grad_fhat[k] - fp.beta_star;
    double q1 = sector.M1(0, 0) * a1.squaredNorm() + 2.0 * sector.M1(0, 1) * a1.dot(b1) +
                sector.M1(1, 1) * b1.squaredNorm();
    CHECK(q1 >= -1e-9 * (1.0 + a1.squaredNorm() + b1.squaredNorm()));
    Vec a2 = res.record.s[k + 1] - fp.s_star;
    Vec b2 = res.record.gamma[k] - fp.gamma_star;
    double q2 = 2.0 * a2.dot(b2);
    CHECK(q2 >= -1e-9 * (1.0 + a2.squaredNorm() + b2.squaredNorm()));
  }
}

TEST_CASE("lyapunov decrease along a certified trajectory") {
  CounterRng rng(37);
  const double kappa = 100.0;
  auto problem = lasso_shape(6, kappa, 0.3, rng);
  const double rho = std::sqrt(kappa);
  auto fp = general_reference(problem, rho);
  auto cert = build_certificate(kappa, 0.0, 1.0);
  auto lti = LtiSystem::for_alpha(1.0);
  auto sector = SectorMatrices::for_rate(kappa, 0.0);
  auto q = compute_Q(cert, lti, sector);
  GeneralConfig cfg;
  cfg.rho = rho;
  const double delta = 1e-3;
  cfg.r_policy = cfg.s_policy = cfg.u_policy = TriggerPolicy::vanilla(delta / 3.0);
  cfg.horizon = 600;
  auto res = run_general(problem, cfg);
  REQUIRE_FALSE(res.failed);
  auto v_of = [&](int k) {
    Vec ds = res.record.s[k] - fp.s_star;
    Vec du = res.record.u[k] - fp.u_star;
    return cert.P(0, 0) * ds.squaredNorm() + 2.0 * cert.P(0, 1) * ds.dot(du) +
           cert.P(1, 1) * du.squaredNorm();
  };
  const double floor_term = q.lambda_max * delta * delta;
  for (int k = 0; k < res.record.horizon(); ++k)
    CHECK(v_of(k + 1) <= cert.tau * cert.tau * v_of(k) + floor_term + 1e-10);
}

TEST_CASE("diminishing bound basic properties") {
  CHECK_THROWS(diminishing_bound(1.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
  // t -> large: the curve collapses geometrically, bound.at(k) ~ c^{-k}
  auto big_t = diminishing_bound(0.9, 1.0, 1e-4, 50.0, 1.0, 1.0, 1.0);
  CHECK(big_t.at(20) / big_t.at(0) < std::pow((1.0 + 0.81) / 2.0, 15.0));
  auto b = diminishing_bound(0.9, 1.0, 1e-4, 2.0, 1.0, 1.0, 1.0);
  CHECK(b.at(0) == doctest::Approx(b.c0));
  CHECK(b.at(1000) < b.at(10));
  // k0 consistency: ((k0+1)/k0)^t == 2/(1+tau^2)
  double lhs = std::pow((b.k0 + 1.0) / b.k0, 2.0);
  CHECK(lhs == doctest::Approx(2.0 / (1.0 + 0.81)).epsilon(1e-10));
}

TEST_CASE("scalar recursion lemma bound on saturating sequences") {
  // V_{k+1} = (1-a)V_k + a b exactly (hypothesis saturated)
  const double a = 0.07, bb = 2.5;
  double v = 10.0;
  for (int k = 0; k <= 200; ++k) {
    CHECK(v <= recursion_bound(10.0, a, bb, k) + 1e-12);
    v = (1.0 - a) * v + a * bb;
  }
}
