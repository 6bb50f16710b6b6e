#pragma once

#include <span>
#include <vector>

#include "contingency/dynamics.hpp"

namespace contingency {

// V(x) = (x - x*)^T P (x - x*) with a sublevel cutoff c.
//
// For quadratic V the class-K sandwich lambda_min(P)|x-x*|^2 <= V(x) <= lambda_max(P)|x-x*|^2
// holds by construction; lambda_min()/lambda_max() expose the two constants.
class QuadraticCLF {
 public:
  QuadraticCLF() = default;
  // Throws ConstructionError unless P is symmetric (1e-10) and positive definite, and level > 0
  // (an infinite level is accepted).
  QuadraticCLF(Vec center, Mat P, double level);

  const Vec& center() const { return center_; }
  const Mat& matrix() const { return P_; }
  double level() const { return level_; }
  int dim() const { return static_cast<int>(center_.size()); }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  // h(x) = c - V(x)
  double barrier(const Vec& x) const { return level_ - value(x); }
  Vec barrier_gradient(const Vec& x) const { return -gradient(x); }

  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }

 private:
  Vec center_;
  Mat P_;
  double level_ = 0.0;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

// Read-only view of a CLF as the barrier h = c - V, whose zero superlevel set is the
// certified sublevel set R = {V <= c}.
class BarrierView {
 public:
  explicit BarrierView(const QuadraticCLF& clf) : clf_(&clf) {}
  double value(const Vec& x) const { return clf_->barrier(x); }
  Vec gradient(const Vec& x) const { return clf_->barrier_gradient(x); }
  bool contains(const Vec& x) const { return value(x) >= 0.0; }
  const QuadraticCLF& clf() const { return *clf_; }

 private:
  const QuadraticCLF* clf_;
};

// Closed disk obstacle in the plane (first two coordinates of a state).
struct CircleObstacle {
  Eigen::Vector2d center;
  double radius = 0.0;

  // Positive inside the open disk: radius - distance.
  double penetration(const Vec& x) const;
  bool contains(const Vec& x) const { return penetration(x) > 0.0; }
  // distance - radius, the signed clearance used for obstacle level maps.
  double clearance(double px, double py) const;
};

// Solves M^T P + P M = -Q via the vectorized Kronecker system, symmetrizes P and checks the
// residual (Frobenius, relative to |Q|). Throws ConstructionError when the system is singular
// or the residual exceeds 1e-10 |Q|.
Mat solve_continuous_lyapunov(const Mat& M, const Mat& Q);

struct EquilibriumInput {
  Vec u_star;       // least-squares solution of B u = -A x*
  Vec x_star;       // input point, or the projected equilibrium when not exact
  bool exact = true;
  double residual = 0.0;    // |A x* + B u*| at the input point
  double snap_distance = 0.0;
};

// Equilibrium input for a linear plant. When the residual exceeds 1e-6 the result is flagged
// and x_star is projected onto the equilibrium set holding the leading coordinate fixed;
// u_star then refers to the projected point.
EquilibriumInput equilibrium_input(const LinearSystemSpec& sys, const Vec& x_star);

// min of (x - x*)^T P (x - x*) over the circle |x - p| = R (2-D). 720 angle samples, then a
// golden-section refinement of the best bracket to 1e-10.
double min_on_circle(const Vec& center, const Mat& P, const CircleObstacle& circle);

// c = nu * min_q min_{|x-p_q|=R_q} V(x). Throws ConstructionError when the center lies inside
// an obstacle or the obstacle list is empty (the level then has to be supplied explicitly).
double level_from_obstacles(const Vec& center, const Mat& P,
                            std::span<const CircleObstacle> obstacles, double nu);

// r-th largest value (1-based r, duplicates counted). Throws std::invalid_argument for r
// outside [1, p].
double pivot(std::span<const double> values, int r);

// Number of nonnegative entries.
int membership_count(std::span<const double> values);

}  // namespace contingency
