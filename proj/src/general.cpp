#include "evadmm/general.hpp"

#include <cmath>
#include <stdexcept>

namespace evadmm {

namespace {

bool is_scaled_orthonormal(const Mat& B, double& scale) {
  Mat btb = B.transpose() * B;
  scale = btb.diagonal().mean();
  return (btb - scale * Mat::Identity(btb.rows(), btb.cols())).norm() <= 1e-10 * scale;
}

}  // namespace

double GeneralProblem::sigma_max_A() const {
  return A.jacobiSvd().singularValues().maxCoeff();
}

double GeneralProblem::sigma_min_A() const {
  return A.jacobiSvd().singularValues().minCoeff();
}

std::pair<double, double> GeneralProblem::scaled_constants(double rho) const {
  double m, L;
  if (f_hessian) {
    Eigen::SelfAdjointEigenSolver<Mat> es(*f_hessian);
    m = es.eigenvalues().minCoeff();
    L = es.eigenvalues().maxCoeff();
  } else {
    m = f.strong_convexity();
    L = f.smoothness();
  }
  const double smax = sigma_max_A(), smin = sigma_min_A();
  return {m / (rho * smax * smax), L / (rho * smin * smin)};
}

double GeneralProblem::condition_number() const {
  auto [m_hat, L_hat] = scaled_constants(1.0);
  return L_hat / m_hat;
}

double aggregate_delta(const GeneralConfig& cfg) {
  const double t = cfg.reset_period > 0 ? static_cast<double>(cfg.reset_period) : 0.0;
  double d = cfg.r_policy.schedule.max_value() + cfg.s_policy.schedule.max_value() +
             cfg.u_policy.schedule.max_value();
  auto chi = [&](const DropModel& m) { return m.p_drop > 0 ? m.chi_bar : 0.0; };
  return d + t * (chi(cfg.r_drop) + chi(cfg.s_drop) + chi(cfg.u_drop));
}

GeneralFixedPoint general_reference(const GeneralProblem& problem, double rho, double tol) {
  GeneralFixedPoint fp;
  const int p = problem.p();
  const Mat& A = problem.A;
  const Mat& B = problem.B;
  if (!problem.f_hessian)
    throw std::invalid_argument("general_reference: quadratic f required");
  const Mat& H = *problem.f_hessian;
  const Vec& q = problem.f_linear;

  if (problem.g.kind == Regularizer::Kind::Zero && B.rows() == B.cols()) {
    fp.x_star = H.ldlt().solve(-q);
    fp.z_star = B.lu().solve(problem.c - A * fp.x_star);
  } else {
    const bool consensus_shape = A.isIdentity(1e-12) &&
                                 (B + Mat::Identity(B.rows(), B.cols())).norm() < 1e-12 &&
                                 problem.c.norm() < 1e-12;
    if (!consensus_shape)
      throw std::invalid_argument(
          "general_reference: nonsmooth g supported for A=I, B=-I, c=0 only");
    const double L = Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().maxCoeff();
    const double step = 1.0 / L;
    Vec x = Vec::Zero(p), x_prev = x;
    double t_acc = 1.0;
    for (int it = 0; it < 2000000; ++it) {
      Vec xn = problem.g.prox(x - step * (H * x + q), step);
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      x = xn + ((t_acc - 1.0) / t_next) * (xn - x_prev);
      x_prev = xn;
      t_acc = t_next;
      if (it % 64 == 0 &&
          (xn - problem.g.prox(xn - (H * xn + q), 1.0)).norm() <= tol)
        break;
    }
    fp.x_star = x_prev;
    fp.z_star = fp.x_star;
  }
  fp.r_star = A * fp.x_star;
  fp.s_star = B * fp.z_star;
  fp.beta_star = (1.0 / rho) * A.transpose().lu().solve(H * fp.x_star + q);
  fp.u_star = -fp.beta_star;
  fp.gamma_star = fp.beta_star;
  fp.f_star = 0.5 * fp.x_star.dot(H * fp.x_star) + q.dot(fp.x_star) +
              problem.g.value(fp.z_star);
  return fp;
}

GeneralResult run_general(const GeneralProblem& problem, const GeneralConfig& cfg) {
  const int p = problem.p();
  const int r_dim = problem.r();
  const int q_dim = problem.q();
  if (r_dim != p) throw std::invalid_argument("run_general: A must be square");
  GeneralResult res;

  // Assumption checks: invertible A, full column rank B.
  {
    auto svA = problem.A.jacobiSvd().singularValues();
    if (svA.minCoeff() <= 1e-12 * svA.maxCoeff())
      throw std::invalid_argument("run_general: A numerically singular");
    Eigen::JacobiSVD<Mat> svB(problem.B);
    if (svB.singularValues().minCoeff() <= 1e-12 * svB.singularValues().maxCoeff() ||
        q_dim > r_dim)
      throw std::invalid_argument("run_general: B must have full column rank");
  }

  CounterRng rng(cfg.seed);
  const double rho = cfg.rho;
  const double alpha = cfg.alpha;
  const Mat& A = problem.A;
  const Mat& B = problem.B;
  const Vec& c = problem.c;

  Eigen::PartialPivLU<Mat> a_lu(A);
  Eigen::PartialPivLU<Mat> at_lu(A.transpose());
  const bool quad = problem.f_hessian.has_value();
  Eigen::LDLT<Mat> x_solver;
  Mat ata = A.transpose() * A;
  if (quad) x_solver.compute(*problem.f_hessian + rho * ata);

  double b_scale = 1.0;
  const bool b_orth = is_scaled_orthonormal(B, b_scale);
  Eigen::LDLT<Mat> btb_solver;
  if (!b_orth) btb_solver.compute(B.transpose() * B);
  const double btb_lmax =
      Eigen::SelfAdjointEigenSolver<Mat>(B.transpose() * B).eigenvalues().maxCoeff();

  TriAgentWorld w;
  w.x = Vec::Zero(p);
  w.z = Vec::Zero(q_dim);
  w.r = A * w.x;
  w.s = B * w.z;
  w.u = Vec::Zero(r_dim);
  w.r_hat_s = w.r_hat_u = w.r;
  w.s_hat_r = w.s_hat_u = w.s;
  w.u_hat_r = w.u_hat_s = w.u;
  w.r_sent = w.r;
  w.s_sent = w.s;
  w.u_sent = w.u;

  if (cfg.record && !cfg.blind_mode) {
    res.record.block_dim = r_dim;
    res.record.alpha = alpha;
    res.record.c = c;
    res.record.s.push_back(w.s);
    res.record.u.push_back(w.u);
  }

  const double delta_agg = aggregate_delta(cfg);
  auto slot_bound = [&](const TriggerPolicy& pol, const DropModel& drop) {
    const double t = cfg.reset_period > 0 ? static_cast<double>(cfg.reset_period) : 0.0;
    return pol.schedule.max_value() + t * (drop.p_drop > 0 ? drop.chi_bar : 0.0);
  };
  const bool check_bounds =
      !cfg.blind_mode && cfg.r_policy.has_finite_threshold() &&
      cfg.s_policy.has_finite_threshold() && cfg.u_policy.has_finite_threshold() &&
      (cfg.r_drop.p_drop == 0 || cfg.r_drop.declared()) &&
      (cfg.s_drop.p_drop == 0 || cfg.s_drop.declared()) &&
      (cfg.u_drop.p_drop == 0 || cfg.u_drop.declared());

  auto fail = [&](const std::string& msg, int k) {
    res.failed = true;
    res.error = msg + " at iteration " + std::to_string(k);
    res.world = w;
  };

  for (int k = 0; k < cfg.horizon; ++k) {
    // r-agent
    const Vec eps_sr = w.s_hat_r - w.s;
    const Vec eps_ur = w.u_hat_r - w.u;
    const Vec w_r = w.s_hat_r - c + w.u_hat_r;
    if (quad) {
      w.x = x_solver.solve(-problem.f_linear - rho * A.transpose() * w_r);
    } else {
      const double L_tot = problem.f.smoothness() + rho * problem.sigma_max_A() *
                                                        problem.sigma_max_A();
      const double step = 1.0 / L_tot;
      Vec x = w.x;
      for (int it = 0; it < cfg.inner_steps; ++it) {
        Vec g = problem.f.gradient(x) + rho * A.transpose() * (A * x + w_r);
        if (g.norm() <= cfg.inner_tol * (1.0 + x.norm())) break;
        x -= step * g;
      }
      w.x = x;
    }
    if (!w.x.allFinite()) return fail("inner-solver divergence", k), res;
    const Vec r_new = A * w.x;
    const Vec grad_fhat =
        (1.0 / rho) * at_lu.solve(quad ? Vec(*problem.f_hessian * w.x + problem.f_linear)
                                       : problem.f.gradient(w.x));

    // r-agent send (one decision, both outgoing channels, per-channel drops)
    {
      auto out = maybe_trigger(r_new, w.r_sent, cfg.r_policy, k, rng);
      if (out.sent) {
        ++res.log.uploads_sent;
        for (Vec* est : {&w.r_hat_s, &w.r_hat_u}) {
          if (rng.bernoulli(cfg.r_drop.p_drop)) {
            ++res.log.uploads_dropped;
            res.max_chi = std::max(res.max_chi, out.delta.norm());
            if (cfg.r_drop.declared() && out.delta.norm() > cfg.r_drop.chi_bar)
              return fail("chi_bar^r exceeded", k), res;
          } else {
            *est += out.delta;
          }
        }
      }
    }
    const Vec eps_rs_new = w.r_hat_s - r_new;
    const Vec eps_ru_new = w.r_hat_u - r_new;

    // s-agent
    const Vec eps_us = w.u_hat_s - w.u;
    const Vec w_s = alpha * w.r_hat_s - (1.0 - alpha) * w.s - alpha * c + w.u_hat_s;
    Vec z_new;
    if (problem.g.kind == Regularizer::Kind::Zero && !b_orth) {
      z_new = btb_solver.solve(-B.transpose() * w_s);
    } else if (b_orth) {
      z_new = problem.g.prox(-B.transpose() * w_s / b_scale, 1.0 / (rho * b_scale));
    } else if (problem.g.kind == Regularizer::Kind::L1) {
      // FISTA on min lam|z|_1 + rho/2 |Bz + w_s|^2
      const double lam = problem.g.lambda;
      const double step = 1.0 / (rho * btb_lmax);
      Vec z = w.z, z_prev = z;
      double t_acc = 1.0;
      for (int it = 0; it < cfg.inner_steps; ++it) {
        Vec grad = rho * B.transpose() * (B * z + w_s);
        Vec zn = prox_l1(z - step * grad, step * lam);
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
        z = zn + ((t_acc - 1.0) / t_next) * (zn - z_prev);
        if ((zn - z_prev).norm() <= cfg.inner_tol * (1.0 + zn.norm()) && it > 2) {
          z_prev = zn;
          break;
        }
        z_prev = zn;
        t_acc = t_next;
      }
      z_new = z_prev;
    } else {
      throw std::invalid_argument("run_general: unsupported g for non-orthogonal B");
    }
    w.z = z_new;
    const Vec s_new = B * z_new;
    const Vec gamma = -(alpha * w.r_hat_s - (1.0 - alpha) * w.s + s_new - alpha * c +
                        w.u_hat_s);

    const Vec s_hat_u_prev = w.s_hat_u;
    const Vec eps_su_old = s_hat_u_prev - w.s;
    {
      auto out = maybe_trigger(s_new, w.s_sent, cfg.s_policy, k, rng);
      if (out.sent) {
        ++res.log.uploads_sent;
        for (Vec* est : {&w.s_hat_u, &w.s_hat_r}) {
          if (rng.bernoulli(cfg.s_drop.p_drop)) {
            ++res.log.uploads_dropped;
            res.max_chi = std::max(res.max_chi, out.delta.norm());
            if (cfg.s_drop.declared() && out.delta.norm() > cfg.s_drop.chi_bar)
              return fail("chi_bar^s exceeded", k), res;
          } else {
            *est += out.delta;
          }
        }
      }
    }
    const Vec eps_su_new = w.s_hat_u - s_new;

    // u-agent
    const Vec u_new =
        w.u + alpha * w.r_hat_u - (1.0 - alpha) * s_hat_u_prev + w.s_hat_u - alpha * c;
    {
      auto out = maybe_trigger(u_new, w.u_sent, cfg.u_policy, k, rng);
      if (out.sent) {
        ++res.log.uploads_sent;
        for (Vec* est : {&w.u_hat_r, &w.u_hat_s}) {
          if (rng.bernoulli(cfg.u_drop.p_drop)) {
            ++res.log.uploads_dropped;
            res.max_chi = std::max(res.max_chi, out.delta.norm());
            if (cfg.u_drop.declared() && out.delta.norm() > cfg.u_drop.chi_bar)
              return fail("chi_bar^u exceeded", k), res;
          } else {
            *est += out.delta;
          }
        }
      }
    }

    if (!cfg.blind_mode) {
      double e_sq = eps_rs_new.squaredNorm() + eps_ru_new.squaredNorm() +
                    eps_su_new.squaredNorm() + eps_sr.squaredNorm() +
                    eps_su_old.squaredNorm() + eps_ur.squaredNorm() + eps_us.squaredNorm();
      const double e_norm = std::sqrt(e_sq);
      res.max_e_norm = std::max(res.max_e_norm, e_norm);
      if (check_bounds) {
        const double br = slot_bound(cfg.r_policy, cfg.r_drop);
        const double bs = slot_bound(cfg.s_policy, cfg.s_drop);
        const double bu = slot_bound(cfg.u_policy, cfg.u_drop);
        const double slack = 1e-9;
        auto bad = [&](const Vec& e_slot, double b) {
          return e_slot.norm() > b * (1.0 + slack) + 1e-12;
        };
        if (bad(eps_rs_new, br) || bad(eps_ru_new, br) || bad(eps_su_new, bs) ||
            bad(eps_sr, bs) || bad(eps_su_old, bs) || bad(eps_ur, bu) || bad(eps_us, bu))
          return fail("per-channel error bound violated", k), res;
        if (e_norm > delta_agg * (1.0 + slack) + 1e-12)
          return fail("aggregate error bound |e_k| <= Delta violated", k), res;
      }
      if (cfg.record) {
        res.record.r_next.push_back(r_new);
        res.record.grad_fhat.push_back(grad_fhat);
        res.record.gamma.push_back(gamma);
        res.record.e.push_back(
            {eps_rs_new, eps_ru_new, eps_su_new, eps_sr, eps_su_old, eps_ur, eps_us});
        res.record.e_norm.push_back(e_norm);
      }
    }

    w.r = r_new;
    w.s = s_new;
    w.u = u_new;

    if (cfg.reset_period > 0 && (k + 1) % cfg.reset_period == 0) {
      w.r_hat_s = w.r_hat_u = w.r;
      w.s_hat_r = w.s_hat_u = w.s;
      w.u_hat_r = w.u_hat_s = w.u;
      w.r_sent = w.r;
      w.s_sent = w.s;
      w.u_sent = w.u;
      res.log.reset_messages += 6;
    }

    if (cfg.record && !cfg.blind_mode) {
      res.record.s.push_back(w.s);
      res.record.u.push_back(w.u);
    }
  }
  res.log.full_comm_messages = 3L * cfg.horizon;  // three agents, one package each per round
  res.world = w;
  return res;
}

}  // namespace evadmm
