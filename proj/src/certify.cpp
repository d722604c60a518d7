#include "evadmm/certify.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace evadmm {

LtiSystem LtiSystem::for_alpha(double alpha) {
  LtiSystem s;
  const double a = alpha;
  s.A << 1, a - 1, 0, 0;
  s.B << a, -1, 0, -1;
  s.C << -1, -1, 1, a - 1;
  s.D << -1, 0, a, -1;
  s.E << -a, 0, 0, a, 0, a, -1,
         -a, a, 1, 0, a - 1, 0, -1;
  s.Ey << 0, 0, 0, -1, 0, -1, 0,
          -a, 0, 0, a, 0, a, -1;
  s.C1 << -1, -1, 0, 0;
  s.D1 << -1, 0, 1, 0;
  s.E1 << 0, 0, 0, -1, 0, -1, 0,
          0, 0, 0, 0, 0, 0, 0;
  s.C2 << 1, a - 1, 0, 0;
  s.D2 << a, -1, 0, 1;
  s.E2 << -a, 0, 0, a, 0, a, -1,
          0, 0, 0, 0, 0, 0, 0;
  return s;
}

SectorMatrices SectorMatrices::for_rate(double kappa, double eps) {
  const double rho0 = std::pow(kappa, eps);
  SectorMatrices m;
  const double off = (std::pow(kappa, -0.5) + std::pow(kappa, 0.5)) / rho0;
  m.M1 << -2.0 / (rho0 * rho0), off, off, -2.0;
  m.M2 << 0, 1, 1, 0;
  return m;
}

SectorMatrices SectorMatrices::from_constants(double m_hat, double L_hat) {
  SectorMatrices m;
  m.M1 << -2.0 * m_hat * L_hat, m_hat + L_hat, m_hat + L_hat, -2.0;
  m.M2 << 0, 1, 1, 0;
  return m;
}

double Certificate::sigma_min_P() const {
  return Eigen::SelfAdjointEigenSolver<Mat2>(P).eigenvalues().minCoeff();
}

double Certificate::sigma_max_P() const {
  return Eigen::SelfAdjointEigenSolver<Mat2>(P).eigenvalues().maxCoeff();
}

Certificate build_certificate(double kappa, double eps, double alpha, double gamma3,
                              double gamma4) {
  if (kappa <= 1.0) throw std::invalid_argument("build_certificate: kappa > 1 required");
  if (eps < 0.0) throw std::invalid_argument("build_certificate: eps >= 0 required");
  if (alpha <= 0.675 || alpha >= 2.0)
    throw std::invalid_argument("build_certificate: alpha outside (0.675, 2)");
  if (gamma3 <= 0.0 || gamma4 <= 0.0)
    throw std::invalid_argument("build_certificate: gamma3, gamma4 > 0 required");
  Certificate c;
  c.kappa = kappa;
  c.eps = eps;
  c.alpha = alpha;
  c.gamma3 = gamma3;
  c.gamma4 = gamma4;
  const double sk = std::sqrt(kappa);
  c.P << 1.0, alpha - 1.0, alpha - 1.0, 1.0 - 1.0 / sk;
  c.tau = 1.0 - alpha / (4.0 * std::pow(kappa, eps + 0.5));
  c.Lambda1 = alpha * std::pow(kappa, eps - 0.5);
  c.Lambda2 = alpha;
  c.gamma1 = alpha / std::pow(kappa, eps + 1.5);
  c.gamma2 = 1.0 / kappa;
  c.lambda1 = c.Lambda1 / (1.0 + gamma3);
  c.lambda2 = c.Lambda2 / (1.0 + gamma4);
  const double root = std::sqrt(4.0 * kappa * (alpha - 1.0) * (alpha - 1.0) + 1.0);
  c.kappa_P = (2.0 * sk - 1.0 + root) / (2.0 * sk - 1.0 - root);
  c.floor_cap_coeff =
      60.0 * std::pow(kappa, 2.0 + 2.0 * eps) / (alpha * (1.0 - std::abs(alpha - 1.0)));
  return c;
}

Mat4 lmi_matrix(const Certificate& cert, const LtiSystem& lti, const SectorMatrices& sector) {
  Mat4 top = Mat4::Zero();
  top.topLeftCorner<2, 2>() =
      (1.0 + cert.gamma1) * lti.A.transpose() * cert.P * lti.A - cert.tau * cert.tau * cert.P;
  top.topRightCorner<2, 2>() = lti.A.transpose() * cert.P * lti.B;
  top.bottomLeftCorner<2, 2>() = lti.B.transpose() * cert.P * lti.A;
  top.bottomRightCorner<2, 2>() = (1.0 + cert.gamma2) * lti.B.transpose() * cert.P * lti.B;

  Mat4 cd = Mat4::Zero();
  cd.topLeftCorner<2, 2>() = lti.C1;
  cd.topRightCorner<2, 2>() = lti.D1;
  cd.bottomLeftCorner<2, 2>() = lti.C2;
  cd.bottomRightCorner<2, 2>() = lti.D2;

  Mat4 mid = Mat4::Zero();
  mid.topLeftCorner<2, 2>() = cert.Lambda1 * sector.M1;
  mid.bottomRightCorner<2, 2>() = cert.Lambda2 * sector.M2;

  Mat4 lmi = top + cd.transpose() * mid * cd;
  return 0.5 * (lmi + lmi.transpose());
}

Feasibility check_feasibility(const Certificate& cert) {
  const auto lti = LtiSystem::for_alpha(cert.alpha);
  const auto sector = SectorMatrices::for_rate(cert.kappa, cert.eps);
  const Mat4 lmi = lmi_matrix(cert, lti, sector);
  Feasibility f;
  Eigen::SelfAdjointEigenSolver<Mat4> es(lmi);
  f.max_eigenvalue = es.eigenvalues().maxCoeff();
  f.matrix_norm = std::max(std::abs(es.eigenvalues().minCoeff()),
                           std::abs(es.eigenvalues().maxCoeff()));
  f.feasible = f.max_eigenvalue <= 1e-9 * f.matrix_norm;
  const Mat4 neg = -lmi;
  for (int d = 1; d <= 4; ++d)
    f.leading_minors[d - 1] = neg.topLeftCorner(d, d).determinant();
  return f;
}

QResult compute_Q(const Certificate& cert, const LtiSystem& lti, const SectorMatrices& sector) {
  QResult q;
  Mat7 qm = (1.0 + 1.0 / cert.gamma1 + 1.0 / cert.gamma2) * lti.E.transpose() * cert.P * lti.E;
  const double w = 1.0 + 1.0 / cert.gamma3 + 1.0 / cert.gamma4;
  qm += w * cert.lambda1 * lti.E1.transpose() * sector.M1 * lti.E1;
  qm += w * cert.lambda2 * lti.E2.transpose() * sector.M2 * lti.E2;
  q.Q = 0.5 * (qm + qm.transpose());
  q.lambda_max = Eigen::SelfAdjointEigenSolver<Mat7>(q.Q).eigenvalues().maxCoeff();
  return q;
}

double min_floor_over_gamma_grid(double kappa, double eps, double alpha, double delta) {
  const auto lti = LtiSystem::for_alpha(alpha);
  const auto sector = SectorMatrices::for_rate(kappa, eps);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const double g3 = std::pow(10.0, i);
      const double g4 = std::pow(10.0, j);
      const auto cert = build_certificate(kappa, eps, alpha, g3, g4);
      const auto q = compute_Q(cert, lti, sector);
      best = std::min(best, q.floor(delta, cert.sigma_min_P(), cert.tau));
    }
  }
  return best;
}

RecursionResiduals verify_state_recursion(const GeneralRunRecord& rec) {
  RecursionResiduals out;
  const auto lti = LtiSystem::for_alpha(rec.alpha);
  const int p = rec.block_dim;
  using V = Eigen::VectorXd;
  auto combine2 = [&](const Mat2& m, const V& a, const V& b) -> std::array<V, 2> {
    return {m(0, 0) * a + m(0, 1) * b, m(1, 0) * a + m(1, 1) * b};
  };
  auto combineE = [&](const Mat27& m, const std::array<V, 7>& e) {
    std::array<V, 2> out_{V::Zero(p), V::Zero(p)};
    for (int r = 0; r < 2; ++r)
      for (int cidx = 0; cidx < 7; ++cidx) out_[r] += m(r, cidx) * e[cidx];
    return out_;
  };
  for (int k = 0; k < rec.horizon(); ++k) {
    const double scale = 1.0 + std::sqrt(rec.s[k].squaredNorm() + rec.u[k].squaredNorm());
    auto ax = combine2(lti.A, rec.s[k], rec.u[k]);
    auto bv = combine2(lti.B, rec.grad_fhat[k], rec.gamma[k]);
    auto ee = combineE(lti.E, rec.e[k]);
    const double rs = (rec.s[k + 1] - ax[0] - bv[0] - ee[0]).norm();
    const double ru = (rec.u[k + 1] - ax[1] - bv[1] - ee[1]).norm();
    out.state = std::max(out.state, std::max(rs, ru));
    out.max_relative = std::max(out.max_relative, std::max(rs, ru) / scale);

    auto cx = combine2(lti.C, rec.s[k], rec.u[k]);
    auto dv = combine2(lti.D, rec.grad_fhat[k], rec.gamma[k]);
    auto ey = combineE(lti.Ey, rec.e[k]);
    const double y0 = (rec.r_next[k] - rec.c - cx[0] - dv[0] - ey[0]).norm();
    const double y1 = (rec.s[k + 1] - cx[1] - dv[1] - ey[1]).norm();
    out.output = std::max(out.output, std::max(y0, y1));
    out.max_relative = std::max(out.max_relative, std::max(y0, y1) / scale);

    auto c1x = combine2(lti.C1, rec.s[k], rec.u[k]);
    auto d1v = combine2(lti.D1, rec.grad_fhat[k], rec.gamma[k]);
    auto e1 = combineE(lti.E1, rec.e[k]);
    const double w10 = (rec.r_next[k] - rec.c - c1x[0] - d1v[0] - e1[0]).norm();
    const double w11 = (rec.grad_fhat[k] - c1x[1] - d1v[1] - e1[1]).norm();
    out.w1 = std::max(out.w1, std::max(w10, w11));

    auto c2x = combine2(lti.C2, rec.s[k], rec.u[k]);
    auto d2v = combine2(lti.D2, rec.grad_fhat[k], rec.gamma[k]);
    auto e2 = combineE(lti.E2, rec.e[k]);
    const double w20 = (rec.s[k + 1] - c2x[0] - d2v[0] - e2[0]).norm();
    const double w21 = (rec.gamma[k] - c2x[1] - d2v[1] - e2[1]).norm();
    out.w2 = std::max(out.w2, std::max(w20, w21));
    out.max_relative = std::max({out.max_relative, std::max(w10, w11) / scale,
                                 std::max(w20, w21) / scale});
  }
  return out;
}

double DiminishingBound::at(int k) const {
  return std::pow(k0 / (static_cast<double>(k) + k0), t) * c0 / sigma_min_p;
}

DiminishingBound diminishing_bound(double tau, double lambda_max_q, double q, double t,
                                   double sigma_min_p, double sigma_max_p, double xi0_err_sq) {
  if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("diminishing_bound: tau in (0,1)");
  if (t <= 0.0) throw std::invalid_argument("diminishing_bound: t > 0");
  DiminishingBound b;
  b.t = t;
  b.sigma_min_p = sigma_min_p;
  // exponent 1/t: the induction needs ((k0+1)/k0)^t <= 2/(1+tau^2)
  b.k0 = 1.0 / (std::pow(2.0 / (1.0 + tau * tau), 1.0 / t) - 1.0);
  b.c0 = std::max(2.0 * lambda_max_q * q / (1.0 - tau * tau), sigma_max_p * xi0_err_sq);
  return b;
}

double recursion_bound(double v0, double a, double b, int k) {
  return v0 * std::pow(1.0 - a, k) + b;
}

}  // namespace evadmm
