#include <cmath>
#include <numbers>

#include "doctest.h"

#include "contingency/dynamics.hpp"
#include "contingency/error.hpp"

using namespace contingency;

TEST_CASE("wrap_angle lands in [-pi, pi)") {
  const double pi = std::numbers::pi;
  CHECK(wrap_angle(pi) == doctest::Approx(-pi));
  CHECK(wrap_angle(-pi) == doctest::Approx(-pi));
  CHECK(wrap_angle(3 * pi + 0.25) == doctest::Approx(-pi + 0.25));
  CHECK(wrap_angle(-0.5) == doctest::Approx(-0.5));
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w >= -pi);
    CHECK(w < pi);
    CHECK(std::abs(std::remainder(w - a, 2 * pi)) < 1e-12);
  }
}

TEST_CASE("aircraft rates") {
  const auto sys = make_aircraft({0.3});
  Vec x(5), u(3);
  x << 1.0, 2.0, 0.5, 0.0, 2.0;
  u << 0.5, 1.0, -1.0;
  const Vec xd = sys.rate(x, u);
  CHECK(xd(0) == doctest::Approx(2.0));
  CHECK(xd(1) == doctest::Approx(0.0));
  CHECK(xd(2) == doctest::Approx(-1.0));
  CHECK(xd(3) == doctest::Approx(0.5));
  CHECK(xd(4) == doctest::Approx(1.0 - 0.3 * 2.0));
  CHECK(sys.control_bounded());
  CHECK(sys.is_periodic(3));
}

TEST_CASE("rk4 is fourth order on a linear oscillator") {
  LinearSystemSpec spec{Mat(2, 2), Mat::Zero(2, 1)};
  spec.A << 0, 1, -1, 0;
  const auto sys = make_linear_system(spec);
  const Vec x0 = Vec::Unit(2, 0);
  const Vec u = Vec::Zero(1);
  auto err = [&](double dt) {
    Vec x = x0;
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < n; ++i) x = rk4_step(sys, x, u, dt);
    Vec exact(2);
    exact << std::cos(1.0), -std::sin(1.0);
    return (x - exact).norm();
  };
  const double e1 = err(0.1), e2 = err(0.05);
  const double order = std::log2(e1 / e2);
  CHECK(order > 3.8);
  CHECK(order < 4.2);
}

TEST_CASE("rk4 wraps periodic coordinates and rejects non-finite input") {
  const auto sys = make_planar_dubins(1.0);
  Vec x(3);
  x << 0.0, 0.0, 3.1;
  Vec u = Vec::Constant(1, 1.0);
  const Vec next = rk4_step(sys, x, u, 0.1);
  CHECK(next(2) == doctest::Approx(wrap_angle(3.2)));
  u(0) = std::nan("");
  CHECK_THROWS_AS(rk4_step(sys, x, u, 0.1), IntegrationError);
}

TEST_CASE("clamp_control flags saturation") {
  const auto sys = make_integrator(2, 1.0);
  bool clamped = false;
  Vec u(2);
  u << 0.5, -1.0;
  CHECK((clamp_control(sys, u, &clamped) - u).norm() == 0.0);
  CHECK_FALSE(clamped);
  u << 2.0, -3.0;
  const Vec c = clamp_control(sys, u, &clamped);
  CHECK(clamped);
  CHECK(c(0) == 1.0);
  CHECK(c(1) == -1.0);
}

TEST_CASE("simulate_zoh sample count and first sample") {
  const auto sys = make_integrator(1, 1.0);
  const auto traj = simulate_zoh(sys, [](const Vec&, double) { return Vec::Constant(1, 0.5); },
                                 Vec::Zero(1), 1.0, 0.3);
  CHECK(traj.size() == 5);  // ceil(1/0.3) + 1
  CHECK(traj.front().t == 0.0);
  CHECK(traj[1].x(0) == doctest::Approx(0.15));
  CHECK(step_count(1.0, 0.1) == 10);
  CHECK(step_count(0.3, 0.1) == 3);
}
