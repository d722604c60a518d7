#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "evadmm/rng.hpp"

namespace evadmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Local least-squares term f^i(x) = 0.5 |A x - b|^2.
struct QuadraticLocal {
  Mat design;   // m_i x n
  Vec targets;  // m_i

  QuadraticLocal() = default;
  QuadraticLocal(Mat a, Vec b) : design(std::move(a)), targets(std::move(b)) {
    if (design.rows() != targets.size())
      throw std::invalid_argument("QuadraticLocal: row count mismatch");
  }

  int dim() const { return static_cast<int>(design.cols()); }
  double value(const Vec& x) const { return 0.5 * (design * x - targets).squaredNorm(); }
  Vec gradient(const Vec& x) const { return design.transpose() * (design * x - targets); }
  Mat gram() const { return design.transpose() * design; }
};

/// Smooth function handle: value, gradient, and (L, m) constants.
/// m = 0 declares unknown or absent strong convexity.
class SmoothOracle {
 public:
  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;

  SmoothOracle() = default;
  SmoothOracle(ValueFn value, GradFn grad, double smoothness, double strong_convexity = 0.0)
      : value_(std::move(value)),
        grad_(std::move(grad)),
        smoothness_(smoothness),
        strong_convexity_(strong_convexity) {}

  static SmoothOracle from_quadratic(const QuadraticLocal& q);

  double value(const Vec& x) const { return value_(x); }
  Vec gradient(const Vec& x) const { return grad_(x); }
  double smoothness() const { return smoothness_; }
  double strong_convexity() const { return strong_convexity_; }

 private:
  ValueFn value_;
  GradFn grad_;
  double smoothness_ = 0.0;
  double strong_convexity_ = 0.0;
};

/// Nonsmooth term g with a closed-form proximal map.
struct Regularizer {
  enum class Kind { Zero, L1, BallIndicator };

  Kind kind = Kind::Zero;
  double lambda = 0.0;  // l1 weight
  double radius = 0.0;  // indicator ball radius

  static Regularizer zero() { return {}; }
  static Regularizer l1(double lam);
  static Regularizer ball(double r);

  double value(const Vec& z) const;

  /// argmin_z g(z) + 1/(2 weight) |z - point|^2.
  Vec prox(const Vec& point, double weight) const;
};

/// Componentwise soft threshold sign(v) max(|v| - t, 0).
Vec prox_l1(const Vec& v, double threshold);

/// Optimality data for a consensus instance min sum f^i(x^i) + g(z), x^i = z.
struct FixedPoint {
  Vec z_star;
  std::vector<Vec> x_star;  // all equal to z_star for consensus
  std::vector<Vec> u_star;  // scaled duals, -grad f^i(z_star)/rho
  double f_star = 0.0;
  double kkt_residual = 0.0;
};

/// Cached factorization for the Alg. 1 x-update with fixed rho:
/// argmin_x f^i(x) + rho/2 |x - anchor|^2 = (A'A + rho I)^{-1}(A'b + rho anchor).
class QuadraticProxSolver {
 public:
  QuadraticProxSolver(const QuadraticLocal& f, double rho);
  Vec solve(const Vec& anchor) const;

 private:
  Eigen::LLT<Mat> llt_;
  Vec atb_;
  double rho_;
};

Vec solve_local_exact(const QuadraticLocal& f, const Vec& anchor, double rho);

struct InexactOptions {
  int steps = 1;
  double learning_rate = 0.0;
  std::optional<int> batch_size;  // row subsampling; requires quadratic data
};

/// Fixed number of (stochastic) gradient steps on f(x) + rho/2|x - anchor|^2
/// from warm_start. Deterministic given the generator state.
Vec solve_local_inexact(const SmoothOracle& f, const Vec& anchor, double rho,
                        const InexactOptions& opt, const Vec& warm_start, CounterRng& rng,
                        const QuadraticLocal* data = nullptr);

struct ConsensusInstance {
  std::vector<QuadraticLocal> agents;
  Regularizer g;
  double rho = 1.0;
};

/// High-precision centralized solution. lambda = 0 instances are solved by
/// normal equations; l1 instances by FISTA until the prox-gradient fixed
/// point residual drops below tol.
FixedPoint reference_solution(const ConsensusInstance& problem, double tol = 1e-12,
                              int max_iters = 2000000);

}  // namespace evadmm
