#pragma once

#include <optional>
#include <string>

#include "evadmm/certify.hpp"
#include "evadmm/events.hpp"
#include "evadmm/logging.hpp"
#include "evadmm/objectives.hpp"

namespace evadmm {

/// min f(x) + g(z) s.t. A x + B z = c with A square invertible and B of
/// full column rank. Quadratic f (Hessian + linear term) enables exact
/// minimization; otherwise the smooth oracle is driven by inner gradient
/// descent.
struct GeneralProblem {
  Mat A, B;
  Vec c;
  std::optional<Mat> f_hessian;  // f = 0.5 x'Hx + q'x when set
  Vec f_linear;
  SmoothOracle f;  // used when f_hessian is absent
  Regularizer g;

  int p() const { return static_cast<int>(A.cols()); }
  int r() const { return static_cast<int>(A.rows()); }
  int q() const { return static_cast<int>(B.cols()); }

  double sigma_max_A() const;
  double sigma_min_A() const;
  /// (m_hat, L_hat) of the scaled fhat = (f/rho) o A^{-1}.
  std::pair<double, double> scaled_constants(double rho) const;
  double condition_number() const;
};

/// States and estimates of the three logical agents.
struct TriAgentWorld {
  Vec x, z;
  Vec r, s, u;
  Vec r_hat_s, r_hat_u;  // estimates of r at the s-/u-agents
  Vec s_hat_r, s_hat_u;
  Vec u_hat_r, u_hat_s;
  Vec r_sent, s_sent, u_sent;  // last-sent registers
};

struct GeneralConfig {
  double rho = 1.0;
  double alpha = 1.0;
  TriggerPolicy r_policy, s_policy, u_policy;
  DropModel r_drop, s_drop, u_drop;
  int reset_period = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  int inner_steps = 2000;       // inner solver caps (non-quadratic / general B)
  double inner_tol = 1e-12;
  bool record = true;           // keep the replayable trajectory
  bool blind_mode = false;      // engine path must not read true eps values
};

/// Aggregate threshold of the three-knob decomposition:
/// Delta = Dr + Ds + Du + T(chibar_r + chibar_s + chibar_u).
double aggregate_delta(const GeneralConfig& cfg);

struct GeneralResult {
  GeneralRunRecord record;   // replayable trajectory (e, v, xi, r)
  CommLog log;
  TriAgentWorld world;
  double max_e_norm = 0.0;
  double max_chi = 0.0;
  bool failed = false;
  std::string error;
};

/// Fixed point of the general problem under the algorithm's scaling:
/// xi_* = (s_*, u_*), beta_* = grad fhat(r_*), gamma_* = -u_*.
struct GeneralFixedPoint {
  Vec x_star, z_star;
  Vec r_star, s_star, u_star;
  Vec beta_star, gamma_star;
  double f_star = 0.0;
};

/// Reference solution for the supported instance families: quadratic f with
/// g = 0 (any A, B), or A = I, B = -I, c = 0 with g in {zero, l1}.
GeneralFixedPoint general_reference(const GeneralProblem& problem, double rho,
                                    double tol = 1e-13);

GeneralResult run_general(const GeneralProblem& problem, const GeneralConfig& cfg);

}  // namespace evadmm
