#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace evadmm {

using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat27 = Eigen::Matrix<double, 2, 7>;
using Mat7 = Eigen::Matrix<double, 7, 7>;

/// Scalar-block LTI representation of the event-based iteration with state
/// xi = (s, u), input v = (grad fhat(r_{k+1}), gamma_{k+1}), disturbance e.
/// All blocks act per Kronecker factor, so every certificate computation is
/// dimension independent.
struct LtiSystem {
  Mat2 A, B, C, D;
  Mat27 E, Ey;
  Mat2 C1, D1, C2, D2;
  Mat27 E1, E2;

  static LtiSystem for_alpha(double alpha);
};

/// Sector matrices of the feedback nonlinearity: M1 encodes strong
/// convexity/smoothness of fhat (scaled problem with rho0 = kappa^eps),
/// M2 monotonicity of the subdifferential of ghat.
struct SectorMatrices {
  Mat2 M1, M2;

  static SectorMatrices for_rate(double kappa, double eps);
  static SectorMatrices from_constants(double m_hat, double L_hat);
};

/// Closed-form certificate parameters of the symbolic rate theorem.
struct Certificate {
  double kappa = 0.0, eps = 0.0, alpha = 1.0;
  Mat2 P;
  double tau = 0.0;
  double Lambda1 = 0.0, Lambda2 = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0, gamma3 = 1.0, gamma4 = 1.0;
  double lambda1 = 0.0, lambda2 = 0.0;  // lambda^i = Lambda^i/(1+gamma^{i+2})
  double kappa_P = 0.0;
  double floor_cap_coeff = 0.0;  // 60 kappa^{2+2eps} / (alpha (1-|alpha-1|))

  double sigma_min_P() const;
  double sigma_max_P() const;
};

Certificate build_certificate(double kappa, double eps, double alpha, double gamma3 = 1.0,
                              double gamma4 = 1.0);

/// Right-hand side of the certificate LMI; the certificate is feasible when
/// this matrix is negative semidefinite.
Mat4 lmi_matrix(const Certificate& cert, const LtiSystem& lti, const SectorMatrices& sector);

struct Feasibility {
  bool feasible = false;
  double max_eigenvalue = 0.0;
  double matrix_norm = 0.0;
  std::array<double, 4> leading_minors{};  // of -LMI, for diagnostics
};

Feasibility check_feasibility(const Certificate& cert);

struct QResult {
  Mat7 Q;
  double lambda_max = 0.0;

  double floor(double delta, double sigma_min_p, double tau) const {
    return lambda_max * delta * delta / (sigma_min_p * (1.0 - tau * tau));
  }
};

QResult compute_Q(const Certificate& cert, const LtiSystem& lti, const SectorMatrices& sector);

/// Smallest floor over a log-spaced (gamma3, gamma4) grid; used to verify
/// the 60 kappa^{2+2eps} cap.
double min_floor_over_gamma_grid(double kappa, double eps, double alpha, double delta);

/// Recorded trajectory of one general-form run, block layout:
/// e = (eps_rs+, eps_ru+, eps_su+, eps_sr, eps_su, eps_ur, eps_us).
struct GeneralRunRecord {
  int block_dim = 0;
  double alpha = 1.0;
  Eigen::VectorXd c;
  std::vector<Eigen::VectorXd> s, u;       // horizon+1 entries
  std::vector<Eigen::VectorXd> r_next;     // r_{k+1}
  std::vector<Eigen::VectorXd> grad_fhat;  // v first block
  std::vector<Eigen::VectorXd> gamma;      // v second block
  std::vector<std::array<Eigen::VectorXd, 7>> e;
  std::vector<double> e_norm;

  int horizon() const { return static_cast<int>(r_next.size()); }
};

struct RecursionResiduals {
  double state = 0.0;  // xi_{k+1} = A xi + B v + E e
  double output = 0.0; // y_k
  double w1 = 0.0, w2 = 0.0;
  double max_relative = 0.0;
};

RecursionResiduals verify_state_recursion(const GeneralRunRecord& rec);

/// Cor.-style curve for decaying thresholds Delta_k^2 = q/(k+1)^t:
/// bound(k) = (k0/(k+k0))^t c0 / sigma_min(P) with
/// k0 = 1/((2/(1+tau^2))^{1/t} - 1) and
/// c0 = max(2 lambda_max(Q) q/(1-tau^2), sigma_max(P) |xi_0-xi_*|^2).
struct DiminishingBound {
  double k0 = 0.0;
  double c0 = 0.0;
  double t = 0.0;
  double sigma_min_p = 1.0;

  double at(int k) const;
};

DiminishingBound diminishing_bound(double tau, double lambda_max_q, double q, double t,
                                   double sigma_min_p, double sigma_max_p,
                                   double xi0_err_sq);

/// Lemma of the scalar recursion V_{k+1} <= (1-a)V_k + a b: the bound
/// V_k <= V_0 (1-a)^k + b.
double recursion_bound(double v0, double a, double b, int k);

}  // namespace evadmm
