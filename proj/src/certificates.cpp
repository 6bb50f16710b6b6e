#include "contingency/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "contingency/error.hpp"

namespace contingency {

QuadraticCLF::QuadraticCLF(Vec center, Mat P, double level)
    : center_(std::move(center)), P_(std::move(P)), level_(level) {
  const auto n = center_.size();
  if (n == 0 || P_.rows() != n || P_.cols() != n)
    throw ConstructionError("CLF matrix must be n x n matching the center");
  if ((P_ - P_.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw ConstructionError("CLF matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(P_);
  lambda_min_ = eig.eigenvalues().minCoeff();
  lambda_max_ = eig.eigenvalues().maxCoeff();
  if (!(lambda_min_ > 0.0)) throw ConstructionError("CLF matrix is not positive definite");
  if (!(level_ > 0.0)) throw ConstructionError("CLF level must be positive");
}

double QuadraticCLF::value(const Vec& x) const {
  const Vec e = x - center_;
  return e.dot(P_ * e);
}

Vec QuadraticCLF::gradient(const Vec& x) const { return 2.0 * (P_ * (x - center_)); }

double CircleObstacle::penetration(const Vec& x) const {
  return radius - std::hypot(x(0) - center(0), x(1) - center(1));
}

double CircleObstacle::clearance(double px, double py) const {
  return std::hypot(px - center(0), py - center(1)) - radius;
}

Mat solve_continuous_lyapunov(const Mat& M, const Mat& Q) {
  const auto n = M.rows();
  if (M.cols() != n || Q.rows() != n || Q.cols() != n)
    throw ConstructionError("Lyapunov operands must be square and of equal size");
  // vec(M^T P + P M) = (I kron M^T + M^T kron I) vec(P)
  const Mat I = Mat::Identity(n, n);
  const Mat Mt = M.transpose();
  Mat K = Mat::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) += I(i, j) * Mt;
      K.block(i * n, j * n, n, n) += Mt(i, j) * I;
    }
  }
  Eigen::FullPivLU<Mat> lu(K);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw ConstructionError("Lyapunov system is singular (M not Hurwitz or degenerate)");
  const Vec rhs = -Eigen::Map<const Vec>(Q.data(), n * n);
  const Vec p = lu.solve(rhs);
  Mat P = Eigen::Map<const Mat>(p.data(), n, n);
  P = 0.5 * (P + P.transpose()).eval();
  const double residual = (Mt * P + P * M + Q).norm();
  if (residual > 1e-10 * std::max(1.0, Q.norm()))
    throw ConstructionError("Lyapunov residual too large: " + std::to_string(residual));
  return P;
}

EquilibriumInput equilibrium_input(const LinearSystemSpec& sys, const Vec& x_star) {
  const Mat& A = sys.A;
  const Mat& B = sys.B;
  auto ls_input = [&](const Vec& x) -> Vec {
    return B.completeOrthogonalDecomposition().solve(-A * x);
  };
  EquilibriumInput out;
  out.x_star = x_star;
  out.u_star = ls_input(x_star);
  out.residual = (A * x_star + B * out.u_star).norm();
  out.exact = out.residual <= 1e-6;
  if (out.exact || x_star.size() < 2) return out;

  // Pi A x = 0 characterizes equilibria, Pi the projector onto range(B)^perp.
  const auto n = A.rows();
  const Mat Bpinv = B.completeOrthogonalDecomposition().pseudoInverse();
  const Mat Pi = Mat::Identity(n, n) - B * Bpinv;
  const Mat PiA = Pi * A;
  const Mat free_cols = PiA.rightCols(n - 1);
  const Vec delta_rest = free_cols.completeOrthogonalDecomposition().solve(-PiA * x_star);
  Vec projected = x_star;
  projected.tail(n - 1) += delta_rest;
  out.x_star = projected;
  out.snap_distance = delta_rest.norm();
  out.u_star = ls_input(projected);
  return out;
}

double min_on_circle(const Vec& center, const Mat& P, const CircleObstacle& circle) {
  if (center.size() != 2) throw std::invalid_argument("min_on_circle is planar only");
  auto v_at = [&](double phi) {
    Vec x(2);
    x << circle.center(0) + circle.radius * std::cos(phi),
        circle.center(1) + circle.radius * std::sin(phi);
    const Vec e = x - center;
    return e.dot(P * e);
  };
  constexpr int samples = 720;
  const double step = 2.0 * std::numbers::pi / samples;
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double v = v_at(i * step);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  // golden-section on the bracket around the best sample
  double a = (best - 1) * step, b = (best + 1) * step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = v_at(c), fd = v_at(d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = v_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = v_at(d);
    }
  }
  return std::min(best_v, v_at(0.5 * (a + b)));
}

double level_from_obstacles(const Vec& center, const Mat& P,
                            std::span<const CircleObstacle> obstacles, double nu) {
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
  if (obstacles.empty())
    throw ConstructionError("no obstacles: the CLF level must be supplied explicitly");
  double inner = std::numeric_limits<double>::infinity();
  for (const auto& obs : obstacles) {
    if (obs.penetration(center) >= 0.0)
      throw ConstructionError("equilibrium lies inside an obstacle");
    inner = std::min(inner, min_on_circle(center, P, obs));
  }
  return nu * inner;
}

double pivot(std::span<const double> values, int r) {
  const int p = static_cast<int>(values.size());
  if (r < 1 || r > p)
    throw std::invalid_argument("pivot order r=" + std::to_string(r) + " outside [1, " +
                                std::to_string(p) + "]");
  std::vector<double> v(values.begin(), values.end());
  std::nth_element(v.begin(), v.begin() + (r - 1), v.end(), std::greater<>());
  return v[r - 1];
}

int membership_count(std::span<const double> values) {
  return static_cast<int>(std::count_if(values.begin(), values.end(),
                                        [](double h) { return h >= 0.0; }));
}

}  // namespace contingency
