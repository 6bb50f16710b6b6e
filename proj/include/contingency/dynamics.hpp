#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace contingency {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

// Control-affine plant xdot = f(x) + g(x) u with a (possibly unbounded) box U.
struct ControlAffineSystem {
  std::string id;
  int state_dim = 0;
  int input_dim = 0;
  std::function<Vec(const Vec&)> drift;      // f, length n
  std::function<Mat(const Vec&)> input_map;  // g, n x m
  Vec control_lo;                            // -inf allowed
  Vec control_hi;                            // +inf allowed
  std::vector<std::string> state_names;
  std::vector<int> periodic_dims;            // angles, period 2*pi

  Vec rate(const Vec& x, const Vec& u) const;
  bool is_periodic(int dim) const;
  // True when every channel of U has finite bounds.
  bool control_bounded() const;
  void wrap_periodic(Vec& x) const;
  void validate() const;
};

struct LinearSystemSpec {
  Mat A;
  Mat B;
};

// Linear plant drift(x)=Ax, input_map(x)=B. Bounds default to unbounded.
ControlAffineSystem make_linear_system(const LinearSystemSpec& spec);
ControlAffineSystem make_linear_system(const LinearSystemSpec& spec, const Vec& lo, const Vec& hi);

// Aircraft with elevation control, state (x, y, z, theta, v), input (turn rate, thrust,
// vertical velocity) each in [-1, 1].
struct AircraftModelSpec {
  double drag = 0.3;
};
ControlAffineSystem make_aircraft(const AircraftModelSpec& spec);

// Planar constant-speed reduction of the aircraft: state (x, y, theta), input turn rate.
ControlAffineSystem make_planar_dubins(double speed, double turn_limit = 1.0);

// Single integrator xdot = u per axis, |u_i| <= speed.
ControlAffineSystem make_integrator(int dim, double speed = 1.0);

// Clamps u to U. Sets *clamped when some channel was outside U by more than 1e-9.
Vec clamp_control(const ControlAffineSystem& sys, const Vec& u, bool* clamped = nullptr);

// Classical RK4 with u held constant over the step; periodic dims wrapped afterwards.
// Throws IntegrationError on non-finite state or control.
Vec rk4_step(const ControlAffineSystem& sys, const Vec& x, const Vec& u, double dt,
             bool* clamped = nullptr);

struct TrajectorySample {
  double t = 0.0;
  Vec x;
  Vec u;
};

using StateFeedback = std::function<Vec(const Vec& x, double t)>;

// Number of integration steps for a horizon, ceil(t_end/dt) with rounding slack.
std::size_t step_count(double t_end, double dt);

// Zero-order-hold closed loop; ceil(t_end/dt)+1 samples, the first at (0, x0, k(x0, 0)).
std::vector<TrajectorySample> simulate_zoh(const ControlAffineSystem& sys,
                                           const StateFeedback& controller, const Vec& x0,
                                           double t_end, double dt);

}  // namespace contingency
