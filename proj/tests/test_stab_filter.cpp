#include <cmath>

#include "doctest.h"

#include "contingency/error.hpp"
#include "contingency/stab_filter.hpp"

using namespace contingency;

namespace {

// Planar single integrator, unbounded input, two unit disks centred at (0,0) and (2,0).
struct Toy {
  ControlAffineSystem sys = make_linear_system({Mat::Zero(2, 2), Mat::Identity(2, 2)});
  StabFilterConfig cfg;
  Toy() {
    Vec c1 = Vec::Zero(2), c2(2);
    c2 << 2.0, 0.0;
    cfg.clfs = {QuadraticCLF(c1, Mat::Identity(2, 2), 1.0), QuadraticCLF(c2, Mat::Identity(2, 2), 1.0)};
    cfg.r = 1;
    cfg.j_dagger = 1;
    cfg.alpha_clf = linear_rate(1.0);
    cfg.alpha_cbf = linear_rate(1.0);
    cfg.rho = scaled_square(1.0);
    cfg.c_omega = 1.0;
    cfg.nominal = [](const Vec&, int) { Vec u(2); u << 0.0, 1.0; return u; };
  }
};

}  // namespace

TEST_CASE("two-CLF toy: the pivot row binds and the KKT point is the hand solution") {
  // x = (0, 1) sits on the boundary of disk 1 (h1 = 0) and far outside disk 2 (h2 = -4).
  // Rows over z = (u1, u2, w):
  //   CLF of target 2:  -4 u1 + 2 u2 - 4 w <= -5
  //   h1 (pivot):        2 u2 + 0 w       <= 0
  //   h2:               -4 u1 + 2 u2 - 16 w <= -4
  // With u2 = 0 the CLF row is the only other active one: u1 = 4 l, 2 w = 4 l, u1 + w = 5/4
  // gives l = 5/24, u1 = 5/6, w = 5/12, and the u2 stationarity -1 + 2 l + 2 m = 0 gives
  // m = 7/24 > 0.
  Toy toy;
  Vec x(2);
  x << 0.0, 1.0;
  const auto out = combo_stab_filter(toy.sys, toy.cfg, x, true);
  REQUIRE(out.status == QPStatus::optimal);
  CHECK(out.control(0) == doctest::Approx(5.0 / 6.0));
  CHECK(std::abs(out.control(1)) < 1e-12);
  CHECK(out.omega == doctest::Approx(5.0 / 12.0));
  CHECK(out.qp.multipliers(0) == doctest::Approx(5.0 / 24.0));
  CHECK(out.qp.multipliers(1) == doctest::Approx(7.0 / 24.0));
  CHECK(out.pivot_value == 0.0);
  CHECK(out.membership == 1);
  CHECK(out.relu_coefficient == doctest::Approx(4.0));
  // pivot row carries an exactly zero omega coefficient
  CHECK(out.omega_column(1) == 0.0);
  CHECK(out.omega_column(2) == doctest::Approx(-16.0));
  // hdot_1 = -2 x . u = -2 u2 >= -alpha(h1) = 0 holds with equality
  CHECK(std::abs(-2.0 * x.dot(out.control)) < 1e-12);
  REQUIRE(out.margin.has_value());
  CHECK(out.margin->margin > 0.0);
}

TEST_CASE("inside the active set the CLF row has no relaxation") {
  Toy toy;
  toy.cfg.j_dagger = 0;
  Vec x(2);
  x << 0.3, 0.2;
  const DenseQP qp = assemble_stab_qp(toy.sys, toy.cfg, x);
  CHECK(qp.ineq_matrix(0, 2) == 0.0);
  CHECK(qp.lower(2) == 0.0);
  CHECK(qp.hessian(2, 2) == doctest::Approx(2.0));
  const auto out = combo_stab_filter(toy.sys, toy.cfg, x);
  REQUIRE(out.status == QPStatus::optimal);
  CHECK(out.relu_coefficient == 0.0);
  CHECK(out.omega_column(0) == 0.0);
}

TEST_CASE("plain CLF-QP projects the nominal onto the decrease half-space") {
  Toy toy;
  Vec x(2);
  x << 1.0, 0.0;
  const auto out = clf_qp_control(toy.sys, toy.cfg.clfs[0], linear_rate(1.0), Vec::Zero(2), x);
  REQUIRE(out.status == QPStatus::optimal);
  // 2 u1 <= -1
  CHECK(out.control(0) == doctest::Approx(-0.5));
  CHECK(out.control(1) == doctest::Approx(0.0));
}

TEST_CASE("combinatorial CBF-QP leaves a safe nominal alone") {
  Toy toy;
  toy.cfg.nominal = [](const Vec&, int) { Vec u(2); u << 0.1, 0.0; return u; };
  toy.cfg.clfs.resize(1);
  toy.cfg.j_dagger = 0;
  Vec x(2);
  x << 0.5, 0.0;
  const auto out = combo_cbf_filter(toy.sys, toy.cfg, x);
  REQUIRE(out.status == QPStatus::optimal);
  CHECK(out.control(0) == doctest::Approx(0.1));
  CHECK(out.control(1) == doctest::Approx(0.0));
}

TEST_CASE("switching") {
  Toy toy;
  Vec x(2);
  x << 0.0, 1.0;
  CHECK(switch_target(toy.cfg, 0).j_dagger == 0);
  CHECK(switch_target_checked(toy.cfg, 0, x).j_dagger == 0);
  CHECK_THROWS_AS(switch_target_checked(toy.cfg, 1, x), SwitchError);
  CHECK_THROWS_AS(switch_target(toy.cfg, 2), std::invalid_argument);
}

TEST_CASE("config validation") {
  Toy toy;
  toy.cfg.r = 3;
  CHECK_THROWS_AS(toy.cfg.validate(), std::invalid_argument);
  toy.cfg.r = 1;
  toy.cfg.rho = nullptr;
  CHECK_THROWS_AS(toy.cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(linear_rate(0.0), std::invalid_argument);
  CHECK(scaled_square(0.18)(0.0) == 0.0);
}
