#include <cmath>
#include <random>

#include "doctest.h"

#include "contingency/qp.hpp"
#include "oracles.hpp"

using namespace contingency;

namespace {

// Bounds folded into plain rows for the oracle.
void expand(const DenseQP& qp, Mat& G, Vec& h) {
  const int d = qp.dim(), k = qp.rows();
  std::vector<std::pair<Vec, double>> rows;
  for (int i = 0; i < k; ++i) rows.push_back({qp.ineq_matrix.row(i).transpose(), qp.ineq_rhs(i)});
  for (int i = 0; i < d; ++i) {
    if (qp.lower.size() && std::isfinite(qp.lower(i))) rows.push_back({-Vec::Unit(d, i), -qp.lower(i)});
    if (qp.upper.size() && std::isfinite(qp.upper(i))) rows.push_back({Vec::Unit(d, i), qp.upper(i)});
  }
  G.resize(rows.size(), d);
  h.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    G.row(i) = rows[i].first.transpose();
    h(i) = rows[i].second;
  }
}

DenseQP random_qp(std::mt19937& rng, bool bounds) {
  std::uniform_int_distribution<int> D(1, 4), K(0, 8);
  std::normal_distribution<double> N(0.0, 1.0);
  const int d = D(rng), k = K(rng);
  DenseQP qp;
  Mat L = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) L(i, j) = N(rng);
  qp.hessian = L * L.transpose() + 0.1 * Mat::Identity(d, d);
  qp.linear = Vec::NullaryExpr(d, [&] { return 3.0 * N(rng); });
  qp.ineq_matrix = Mat::NullaryExpr(k, d, [&] { return N(rng); });
  const Vec z0 = Vec::NullaryExpr(d, [&] { return 0.5 * N(rng); });
  qp.ineq_rhs = qp.ineq_matrix * z0 + Vec::NullaryExpr(k, [&] { return std::abs(N(rng)); });
  if (bounds) {
    qp.lower = z0 - Vec::NullaryExpr(d, [&] { return 0.2 + std::abs(N(rng)); });
    qp.upper = z0 + Vec::NullaryExpr(d, [&] { return 0.2 + std::abs(N(rng)); });
  }
  return qp;
}

}  // namespace

TEST_CASE("unconstrained minimizer") {
  DenseQP qp;
  qp.hessian = Mat::Identity(2, 2) * 2.0;
  qp.linear = Vec(2);
  qp.linear << -2.0, 4.0;
  qp.ineq_matrix = Mat::Zero(0, 2);
  qp.ineq_rhs = Vec::Zero(0);
  QPSolver s;
  const auto r = s.solve(qp);
  REQUIRE(r.status == QPStatus::optimal);
  CHECK(r.solution(0) == doctest::Approx(1.0));
  CHECK(r.solution(1) == doctest::Approx(-2.0));
  CHECK(r.active_set.empty());
}

TEST_CASE("projection onto a half-plane, multiplier and active set") {
  DenseQP qp;
  qp.hessian = Mat::Identity(2, 2);
  qp.linear = Vec(2);
  qp.linear << -1.0, -1.0;  // unconstrained optimum (1, 1)
  qp.ineq_matrix = Mat(1, 2);
  qp.ineq_matrix << 1.0, 1.0;
  qp.ineq_rhs = Vec::Constant(1, 1.0);
  QPSolver s;
  const auto r = s.solve(qp);
  REQUIRE(r.status == QPStatus::optimal);
  CHECK(r.solution(0) == doctest::Approx(0.5));
  CHECK(r.solution(1) == doctest::Approx(0.5));
  REQUIRE(r.active_set.size() == 1);
  CHECK(r.active_set[0] == 0);
  CHECK(r.multipliers(0) == doctest::Approx(0.5));
  CHECK(r.kkt_residual < 1e-10);
}

TEST_CASE("bounds use the expanded numbering") {
  DenseQP qp;
  qp.hessian = Mat::Identity(2, 2);
  qp.linear = Vec(2);
  qp.linear << -3.0, 3.0;
  qp.ineq_matrix = Mat::Zero(0, 2);
  qp.ineq_rhs = Vec::Zero(0);
  qp.lower = Vec::Constant(2, -1.0);
  qp.upper = Vec::Constant(2, 1.0);
  QPSolver s;
  const auto r = s.solve(qp);
  REQUIRE(r.status == QPStatus::optimal);
  CHECK(r.solution(0) == doctest::Approx(1.0));
  CHECK(r.solution(1) == doctest::Approx(-1.0));
  // lower bound of z1 is row k + 1 = 1, upper bound of z0 is row k + d + 0 = 2
  REQUIRE(r.active_set == std::vector<int>{1, 2});
  CHECK(r.multipliers(1) == doctest::Approx(2.0));
  CHECK(r.multipliers(2) == doctest::Approx(2.0));
}

TEST_CASE("infeasible rows give a Farkas certificate") {
  DenseQP qp;
  qp.hessian = Mat::Identity(1, 1);
  qp.linear = Vec::Zero(1);
  qp.ineq_matrix = Mat(2, 1);
  qp.ineq_matrix << 1.0, -1.0;
  qp.ineq_rhs = Vec(2);
  qp.ineq_rhs << -1.0, -1.0;  // z <= -1 and z >= 1
  QPSolver s;
  const auto r = s.solve(qp);
  CHECK(r.status == QPStatus::infeasible);
  REQUIRE(r.farkas.has_value());
  const Vec& y = *r.farkas;
  CHECK(y.minCoeff() >= 0.0);
  CHECK(std::abs(y(0) * 1.0 + y(1) * -1.0) < 1e-12);
  CHECK(y(0) * -1.0 + y(1) * -1.0 < 0.0);
}

TEST_CASE("validate rejects bad shapes and data") {
  DenseQP qp;
  qp.hessian = Mat::Identity(2, 2);
  qp.linear = Vec::Zero(3);
  qp.ineq_matrix = Mat::Zero(0, 2);
  qp.ineq_rhs = Vec::Zero(0);
  CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
  qp.linear = Vec::Zero(2);
  qp.hessian(0, 0) = std::nan("");
  CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
}

TEST_CASE("random QPs agree with active-set enumeration") {
  std::mt19937 rng(2024);
  QPSolver s;
  int compared_solutions = 0;
  for (int t = 0; t < 300; ++t) {
    const DenseQP qp = random_qp(rng, t % 2 == 1);
    Mat G;
    Vec h;
    expand(qp, G, h);
    const auto ref = oracle::enumerate_qp(qp.hessian, qp.linear, G, h);
    REQUIRE(ref.feasible);
    const auto r = s.solve(qp);
    REQUIRE(r.status == QPStatus::optimal);
    CHECK(r.objective == doctest::Approx(ref.objective).epsilon(1e-6));
    if (ref.optimal_sets == 1) {
      CHECK((r.solution - ref.z).lpNorm<Eigen::Infinity>() < 1e-6);
      ++compared_solutions;
    }
    // warm start from the optimal set reproduces the optimum
    const auto w = s.solve(qp, r.active_set);
    CHECK((w.solution - r.solution).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  CHECK(compared_solutions > 200);
}

TEST_CASE("strict feasibility margin") {
  Mat A(2, 1);
  A << 1.0, -1.0;
  Vec b(2);
  b << 1.0, 1.0;  // |z| <= 1: margin 1 at z = 0
  auto m = strict_feasibility_margin(A, b);
  CHECK(m.margin == doctest::Approx(1.0));
  b << -1.0, -1.0;
  m = strict_feasibility_margin(A, b);
  CHECK(m.margin == doctest::Approx(-1.0));
  // hard bound z >= 0.5 pushes the witness
  b << 1.0, 1.0;
  m = strict_feasibility_margin(A, b, Vec::Constant(1, 0.5), Vec::Constant(1, 2.0));
  CHECK(m.margin == doctest::Approx(0.5));
  CHECK(m.witness(0) == doctest::Approx(0.5));
  // a single half-space never closes
  Mat one(1, 2);
  one << 1.0, 2.0;
  m = strict_feasibility_margin(one, Vec::Constant(1, 0.0));
  CHECK(std::isinf(m.margin));
  CHECK(m.margin > 0.0);
}
