#include "evadmm/objectives.hpp"

#include <cmath>
#include <limits>

namespace evadmm {

SmoothOracle SmoothOracle::from_quadratic(const QuadraticLocal& q) {
  Eigen::SelfAdjointEigenSolver<Mat> es(q.gram());
  double m = es.eigenvalues().minCoeff();
  double L = es.eigenvalues().maxCoeff();
  if (m < 0 && m > -1e-12) m = 0.0;
  QuadraticLocal copy = q;
  return SmoothOracle([copy](const Vec& x) { return copy.value(x); },
                      [copy](const Vec& x) { return copy.gradient(x); }, L, m);
}

Regularizer Regularizer::l1(double lam) {
  if (lam < 0) throw std::invalid_argument("l1 weight must be >= 0");
  Regularizer r;
  r.kind = Kind::L1;
  r.lambda = lam;
  return r;
}

Regularizer Regularizer::ball(double rad) {
  if (rad <= 0) throw std::invalid_argument("ball radius must be > 0");
  Regularizer r;
  r.kind = Kind::BallIndicator;
  r.radius = rad;
  return r;
}

double Regularizer::value(const Vec& z) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::L1:
      return lambda * z.lpNorm<1>();
    case Kind::BallIndicator:
      return z.norm() <= radius * (1 + 1e-12) ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

Vec Regularizer::prox(const Vec& point, double weight) const {
  switch (kind) {
    case Kind::Zero:
      return point;
    case Kind::L1:
      return prox_l1(point, lambda * weight);
    case Kind::BallIndicator: {
      double n = point.norm();
      if (n <= radius) return point;
      return point * (radius / n);
    }
  }
  return point;
}

Vec prox_l1(const Vec& v, double threshold) {
  if (threshold < 0) throw std::invalid_argument("prox_l1: threshold must be >= 0");
  Vec out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    double a = std::abs(v[j]) - threshold;
    out[j] = a > 0 ? (v[j] > 0 ? a : -a) : 0.0;
  }
  return out;
}

QuadraticProxSolver::QuadraticProxSolver(const QuadraticLocal& f, double rho)
    : atb_(f.design.transpose() * f.targets), rho_(rho) {
  if (rho <= 0) throw std::invalid_argument("rho must be > 0");
  Mat reg = f.gram();
  reg.diagonal().array() += rho;
  llt_.compute(reg);
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("QuadraticProxSolver: factorization failed");
}

Vec QuadraticProxSolver::solve(const Vec& anchor) const {
  return llt_.solve(atb_ + rho_ * anchor);
}

Vec solve_local_exact(const QuadraticLocal& f, const Vec& anchor, double rho) {
  return QuadraticProxSolver(f, rho).solve(anchor);
}

Vec solve_local_inexact(const SmoothOracle& f, const Vec& anchor, double rho,
                        const InexactOptions& opt, const Vec& warm_start, CounterRng& rng,
                        const QuadraticLocal* data) {
  if (opt.steps < 1) throw std::invalid_argument("steps must be >= 1");
  Vec x = warm_start;
  const bool stochastic = opt.batch_size.has_value() && data != nullptr;
  const int rows = data ? static_cast<int>(data->design.rows()) : 0;
  for (int t = 0; t < opt.steps; ++t) {
    Vec g;
    if (stochastic) {
      int bs = std::min(*opt.batch_size, rows);
      g = Vec::Zero(x.size());
      for (int b = 0; b < bs; ++b) {
        int row = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(rows));
        double resid = data->design.row(row).dot(x) - data->targets[row];
        g += data->design.row(row).transpose() * resid;
      }
      g *= static_cast<double>(rows) / bs;
    } else {
      g = f.gradient(x);
    }
    g += rho * (x - anchor);
    x -= opt.learning_rate * g;
  }
  return x;
}

FixedPoint reference_solution(const ConsensusInstance& problem, double tol, int max_iters) {
  const int N = static_cast<int>(problem.agents.size());
  if (N == 0) throw std::invalid_argument("reference_solution: no agents");
  const int n = problem.agents[0].dim();
  Mat H = Mat::Zero(n, n);
  Vec q = Vec::Zero(n);
  for (const auto& a : problem.agents) {
    H += a.gram();
    q -= a.design.transpose() * a.targets;
  }

  FixedPoint fp;
  if (problem.g.kind == Regularizer::Kind::Zero) {
    fp.z_star = H.ldlt().solve(-q);
    fp.kkt_residual = (H * fp.z_star + q).norm();
  } else if (problem.g.kind == Regularizer::Kind::L1) {
    const double lam = problem.g.lambda;
    const double L = Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().maxCoeff();
    const double step = 1.0 / L;
    Vec x = Vec::Zero(n), x_prev = x;
    double t_acc = 1.0;
    double kkt = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
      Vec xn = prox_l1(x - step * (H * x + q), step * lam);
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      x = xn + ((t_acc - 1.0) / t_next) * (xn - x_prev);
      x_prev = xn;
      t_acc = t_next;
      if (it % 50 == 0) {
        kkt = (xn - prox_l1(xn - (H * xn + q), lam)).norm();
        if (kkt <= tol) break;
      }
    }
    if (kkt > tol) throw std::runtime_error("reference_solution: no convergence within cap");
    fp.z_star = x_prev;
    fp.kkt_residual = kkt;
  } else {
    throw std::invalid_argument("reference_solution: unsupported regularizer");
  }

  fp.f_star = problem.g.value(fp.z_star);
  for (const auto& a : problem.agents) fp.f_star += a.value(fp.z_star);
  fp.x_star.assign(N, fp.z_star);
  fp.u_star.resize(N);
  for (int i = 0; i < N; ++i)
    fp.u_star[i] = -problem.agents[i].gradient(fp.z_star) / problem.rho;
  return fp;
}

}  // namespace evadmm
