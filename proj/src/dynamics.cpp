#include "contingency/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "contingency/error.hpp"

namespace contingency {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift back
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

Vec ControlAffineSystem::rate(const Vec& x, const Vec& u) const {
  return drift(x) + input_map(x) * u;
}

bool ControlAffineSystem::is_periodic(int dim) const {
  return std::find(periodic_dims.begin(), periodic_dims.end(), dim) != periodic_dims.end();
}

bool ControlAffineSystem::control_bounded() const {
  return control_lo.allFinite() && control_hi.allFinite();
}

void ControlAffineSystem::wrap_periodic(Vec& x) const {
  for (int d : periodic_dims) x(d) = wrap_angle(x(d));
}

void ControlAffineSystem::validate() const {
  if (state_dim <= 0 || input_dim <= 0) throw ConstructionError("system dimensions must be positive");
  if (!drift || !input_map) throw ConstructionError("system '" + id + "' is missing f or g");
  if (control_lo.size() != input_dim || control_hi.size() != input_dim)
    throw ConstructionError("control bounds must have length m");
  for (int i = 0; i < input_dim; ++i) {
    if (std::isfinite(control_lo(i)) && std::isfinite(control_hi(i)) && control_lo(i) > control_hi(i))
      throw ConstructionError("control_lo > control_hi on channel " + std::to_string(i));
  }
  for (int d : periodic_dims) {
    if (d < 0 || d >= state_dim) throw ConstructionError("periodic dim out of range");
  }
  const Vec probe = Vec::Zero(state_dim);
  if (drift(probe).size() != state_dim) throw ConstructionError("drift output length != n");
  const Mat g = input_map(probe);
  if (g.rows() != state_dim || g.cols() != input_dim)
    throw ConstructionError("input_map output shape != n x m");
}

ControlAffineSystem make_linear_system(const LinearSystemSpec& spec) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto m = spec.B.cols();
  return make_linear_system(spec, Vec::Constant(m, -inf), Vec::Constant(m, inf));
}

ControlAffineSystem make_linear_system(const LinearSystemSpec& spec, const Vec& lo, const Vec& hi) {
  if (spec.A.rows() != spec.A.cols()) throw ConstructionError("A must be square");
  if (spec.B.rows() != spec.A.rows()) throw ConstructionError("B must have n rows");
  ControlAffineSystem sys;
  sys.id = "linear";
  sys.state_dim = static_cast<int>(spec.A.rows());
  sys.input_dim = static_cast<int>(spec.B.cols());
  sys.drift = [A = spec.A](const Vec& x) -> Vec { return A * x; };
  sys.input_map = [B = spec.B](const Vec&) -> Mat { return B; };
  sys.control_lo = lo;
  sys.control_hi = hi;
  for (int i = 0; i < sys.state_dim; ++i) sys.state_names.push_back("x" + std::to_string(i));
  sys.validate();
  return sys;
}

ControlAffineSystem make_aircraft(const AircraftModelSpec& spec) {
  if (!(spec.drag >= 0.0)) throw ConstructionError("drag must be nonnegative");
  ControlAffineSystem sys;
  sys.id = "aircraft5";
  sys.state_dim = 5;
  sys.input_dim = 3;
  const double cv = spec.drag;
  sys.drift = [cv](const Vec& s) -> Vec {
    Vec f(5);
    const double th = s(3), v = s(4);
    f << v * std::cos(th), v * std::sin(th), 0.0, 0.0, -cv * v;
    return f;
  };
  sys.input_map = [](const Vec&) -> Mat {
    Mat g = Mat::Zero(5, 3);
    g(3, 0) = 1.0;  // turn rate
    g(4, 1) = 1.0;  // thrust
    g(2, 2) = 1.0;  // vertical velocity
    return g;
  };
  sys.control_lo = Vec::Constant(3, -1.0);
  sys.control_hi = Vec::Constant(3, 1.0);
  sys.state_names = {"x", "y", "z", "theta", "v"};
  sys.periodic_dims = {3};
  sys.validate();
  return sys;
}

ControlAffineSystem make_planar_dubins(double speed, double turn_limit) {
  if (!(turn_limit > 0.0)) throw ConstructionError("turn limit must be positive");
  ControlAffineSystem sys;
  sys.id = "dubins3(v=" + std::to_string(speed) + ")";
  sys.state_dim = 3;
  sys.input_dim = 1;
  sys.drift = [speed](const Vec& s) -> Vec {
    Vec f(3);
    f << speed * std::cos(s(2)), speed * std::sin(s(2)), 0.0;
    return f;
  };
  sys.input_map = [](const Vec&) -> Mat {
    Mat g = Mat::Zero(3, 1);
    g(2, 0) = 1.0;
    return g;
  };
  sys.control_lo = Vec::Constant(1, -turn_limit);
  sys.control_hi = Vec::Constant(1, turn_limit);
  sys.state_names = {"x", "y", "theta"};
  sys.periodic_dims = {2};
  sys.validate();
  return sys;
}

ControlAffineSystem make_integrator(int dim, double speed) {
  ControlAffineSystem sys;
  sys.id = "integrator" + std::to_string(dim);
  sys.state_dim = dim;
  sys.input_dim = dim;
  sys.drift = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
  sys.input_map = [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); };
  sys.control_lo = Vec::Constant(dim, -speed);
  sys.control_hi = Vec::Constant(dim, speed);
  for (int i = 0; i < dim; ++i) sys.state_names.push_back("x" + std::to_string(i));
  sys.validate();
  return sys;
}

Vec clamp_control(const ControlAffineSystem& sys, const Vec& u, bool* clamped) {
  constexpr double tol = 1e-9;
  Vec out = u;
  bool flagged = false;
  for (int i = 0; i < u.size(); ++i) {
    if (out(i) < sys.control_lo(i)) {
      flagged = flagged || out(i) < sys.control_lo(i) - tol;
      out(i) = sys.control_lo(i);
    } else if (out(i) > sys.control_hi(i)) {
      flagged = flagged || out(i) > sys.control_hi(i) + tol;
      out(i) = sys.control_hi(i);
    }
  }
  if (clamped) *clamped = flagged;
  return out;
}

Vec rk4_step(const ControlAffineSystem& sys, const Vec& x, const Vec& u, double dt, bool* clamped) {
  if (!(dt > 0.0)) throw IntegrationError("dt must be positive", 0);
  if (!x.allFinite() || !u.allFinite()) throw IntegrationError("non-finite state or control", 0);
  const Vec uc = clamp_control(sys, u, clamped);
  const Vec k1 = sys.rate(x, uc);
  const Vec k2 = sys.rate(x + 0.5 * dt * k1, uc);
  const Vec k3 = sys.rate(x + 0.5 * dt * k2, uc);
  const Vec k4 = sys.rate(x + dt * k3, uc);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw IntegrationError("integration produced a non-finite state", 0);
  sys.wrap_periodic(next);
  return next;
}

std::size_t step_count(double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw IntegrationError("need dt > 0 and t_end >= 0", 0);
  return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
}

std::vector<TrajectorySample> simulate_zoh(const ControlAffineSystem& sys,
                                           const StateFeedback& controller, const Vec& x0,
                                           double t_end, double dt) {
  const std::size_t steps = step_count(t_end, dt);
  std::vector<TrajectorySample> out;
  out.reserve(steps + 1);
  Vec x = x0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    Vec u = controller(x, t);
    out.push_back({t, x, u});
    if (k == steps) break;
    try {
      x = rk4_step(sys, x, u, dt);
    } catch (const IntegrationError&) {
      throw IntegrationError("simulate_zoh failed", k);
    }
  }
  return out;
}

}  // namespace contingency
