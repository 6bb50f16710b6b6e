#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "doctest.h"

#include "contingency/error.hpp"
#include "contingency/hj_solver.hpp"

using namespace contingency;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "contingency_tests";
  fs::create_directories(dir);
  return dir / name;
}

// zero crossing of a 1-D slice by linear interpolation, scanning outward from the centre
double right_zero(const Grid& g, std::span<const double> v) {
  for (std::uint32_t i = g.nodes(0) / 2; i + 1 < g.nodes(0); ++i) {
    if (v[i] >= 0.0 && v[i + 1] < 0.0)
      return g.coordinate(0, i) + v[i] / (v[i] - v[i + 1]) * g.spacing(0);
  }
  return std::nan("");
}

}  // namespace

TEST_CASE("grid layout, periodic axis and hash") {
  const Grid g({-1.0, -std::numbers::pi}, {1.0, std::numbers::pi}, {5, 8}, {false, true});
  CHECK(g.size() == 40);
  CHECK(g.spacing(0) == doctest::Approx(0.5));
  CHECK(g.spacing(1) == doctest::Approx(2 * std::numbers::pi / 8));
  CHECK(g.stride(1) == 1);
  CHECK(g.stride(0) == 8);
  double c[2];
  g.node_coordinates(9, c);
  CHECK(c[0] == doctest::Approx(-0.5));
  CHECK(c[1] == doctest::Approx(-std::numbers::pi + g.spacing(1)));
  const double out_theta[] = {0.0, 10.0};
  CHECK(g.contains(out_theta));  // periodic dims never leave the grid
  const double out_x[] = {1.2, 0.0};
  CHECK_FALSE(g.contains(out_x));
  const Grid same({-1.0, -std::numbers::pi}, {1.0, std::numbers::pi}, {5, 8}, {false, true});
  const Grid other({-1.0, -std::numbers::pi}, {1.0, std::numbers::pi}, {6, 8}, {false, true});
  CHECK(g == same);
  CHECK(g.hash() == same.hash());
  CHECK(g.hash() != other.hash());
}

TEST_CASE("soft_min bounds") {
  CHECK(soft_min(1.0, 1.0, 20.0) == doctest::Approx(1.0 - std::log(2.0) / 20.0));
  CHECK(soft_min(0.0, 5.0, 20.0) <= 0.0);
  CHECK(soft_min(0.0, 5.0, 20.0) > -1e-40);
  CHECK(std::isfinite(soft_min(-1e3, 1e3, 50.0)));
}

TEST_CASE("Hamiltonian of the planar Dubins reduction") {
  const auto sys = make_planar_dubins(1.0, 1.0);
  Vec x(3), p(3);
  x << 0.0, 0.0, 0.0;
  p << 2.0, 5.0, -0.5;
  CHECK(hamiltonian(sys, x, p) == doctest::Approx(2.0 + 0.5));
  const auto lin = make_linear_system({Mat::Zero(1, 1), Mat::Identity(1, 1)});
  CHECK_THROWS_AS(hamiltonian(lin, Vec::Zero(1), Vec::Ones(1)), std::invalid_argument);
}

TEST_CASE("1-D integrator: zero level grows as 1 + |tau|") {
  const auto sys = make_integrator(1, 1.0);
  const Grid g({-5.0}, {5.0}, {501}, {false});
  const auto target = make_ball_target(Vec::Zero(1), 1.0);
  const auto free = make_free_space();
  const auto t = solve_bra(sys, target, free, 2.0, g, {0.0, 1.0, 1});
  // terminal slice is min(l, s)
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x[] = {g.coordinate(0, static_cast<std::uint32_t>(i))};
    CHECK(t.slice(0)[i] == std::min(target.level(x), free.level(x)));
  }
  CHECK(t.horizon_length() == doctest::Approx(2.0));
  for (double tau : {-0.5, -1.0, -2.0}) {
    // rebuild the slice at tau from the interpolant
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x[] = {g.coordinate(0, static_cast<std::uint32_t>(i))};
      v[i] = t.value(x, tau);
    }
    CHECK(std::abs(right_zero(g, v) - (1.0 - tau)) <= 2 * g.spacing(0));
  }
}

TEST_CASE("obstacle clamp and monotonicity") {
  const auto sys = make_integrator(1, 1.0);
  const Grid g({-3.0}, {3.0}, {121}, {false});
  const auto target = make_ball_target(Vec::Zero(1), 0.5);
  ObstacleSpec obs;
  obs.level = [](std::span<const double> x) { return std::abs(x[0] - 1.5) - 0.2; };
  const auto t = solve_bra(sys, target, obs, 2.0, g, {0.25, 0.5, 1});
  for (std::size_t k = 0; k + 1 < t.slice_count(); ++k) {
    const auto a = t.slice(k), b = t.slice(k + 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x[] = {g.coordinate(0, static_cast<std::uint32_t>(i))};
      REQUIRE(b[i] >= a[i]);
      REQUIRE(b[i] <= obs.level(x));
    }
  }
  // behind the wall the target is not reachable in 2 s even though the distance is 1.5
  const double behind[] = {2.1};
  CHECK(t.value(behind, -2.0) < 0.0);
  const double front[] = {0.9};
  CHECK(t.value(front, -2.0) > 0.0);
  CHECK_THROWS_AS(t.value(front, -3.0), DomainError);
  const double outside[] = {3.5};
  CHECK_THROWS_AS(t.value(outside, -1.0), DomainError);
}

TEST_CASE("interpolation, gradient and tau derivative on an affine field") {
  const Grid g({-1.0, -1.0}, {1.0, 1.0}, {11, 11}, {false, false});
  std::vector<double> data;
  const std::vector<double> horizons = {0.0, -1.0};
  for (double tau : horizons) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double c[2];
      g.node_coordinates(i, c);
      data.push_back(2.0 * c[0] - c[1] + 0.5 - 3.0 * tau);
    }
  }
  const ValueFunctionTable t(g, horizons, data);
  const double x[] = {0.33, -0.71};
  CHECK(t.value(x, -0.4) == doctest::Approx(2 * 0.33 + 0.71 + 0.5 + 1.2));
  const Vec grad = t.gradient(x, -0.4);
  CHECK(grad(0) == doctest::Approx(2.0));
  CHECK(grad(1) == doctest::Approx(-1.0));
  CHECK(t.tau_derivative(x, -0.4) == doctest::Approx(-3.0));
  CHECK(t.cell_variation(x, -0.4) == doctest::Approx(0.2 * 2 + 0.2 * 1 + 3.0));
}

TEST_CASE("periodic interpolation wraps across -pi") {
  const Grid g({-std::numbers::pi}, {std::numbers::pi}, {16}, {true});
  std::vector<double> data(16);
  for (std::uint32_t i = 0; i < 16; ++i) data[i] = std::cos(g.coordinate(0, i));
  const ValueFunctionTable t(g, {0.0}, data);
  const double a[] = {std::numbers::pi - 0.01};
  const double b[] = {-std::numbers::pi - 0.01};
  CHECK(t.value(a, 0.0) == doctest::Approx(t.value(b, 0.0)));
  CHECK(t.value(a, 0.0) == doctest::Approx(-1.0).epsilon(0.03));
}

TEST_CASE("CBRA files round-trip bit-identically") {
  const auto sys = make_planar_dubins(1.0, 1.0);
  const Grid g({-2.0, -2.0, -std::numbers::pi}, {2.0, 2.0, std::numbers::pi}, {9, 9, 8},
               {false, false, true});
  const auto target = make_runway_target(0.0, 0.0, 0.0, 0.5, 0.5);
  const auto t = solve_bra(sys, target, make_free_space(), 1.0, g, {0.5, 1.0, 1});
  const fs::path a = scratch("roundtrip_a.cbra"), b = scratch("roundtrip_b.cbra");
  t.write(a);
  const auto back = ValueFunctionTable::read(a);
  CHECK(back.grid() == t.grid());
  CHECK(back.horizons() == t.horizons());
  CHECK(back.data() == t.data());
  back.write(b);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).substr(0, 4) == "CBRA");

  // truncated files are rejected
  const std::string bytes = slurp(a);
  {
    std::ofstream out(b, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS(ValueFunctionTable::read(b));
}

TEST_CASE("lax_friedrichs_step rejects steps above the CFL bound") {
  const auto sys = make_integrator(1, 1.0);
  const Grid g({-1.0}, {1.0}, {21}, {false});
  const GridDynamics dyn(g, sys);
  CHECK(cfl_dt(g, dyn) == doctest::Approx(0.8 * 0.1));
  std::vector<double> slice(g.size(), 0.0), s(g.size(), 1.0);
  CHECK_THROWS_AS(lax_friedrichs_step(g, dyn, slice, s, 0.1, 1), std::invalid_argument);
  CHECK_NOTHROW(lax_friedrichs_step(g, dyn, slice, s, 0.05, 1));
}

TEST_CASE("thread count does not change the solution") {
  const auto sys = make_planar_dubins(1.0, 1.0);
  const Grid g({-2.0, -2.0, -std::numbers::pi}, {2.0, 2.0, std::numbers::pi}, {15, 15, 12},
               {false, false, true});
  const auto target = make_runway_target(0.5, 0.0, 0.0, 0.5, 0.5);
  const auto obs = make_disk_obstacles({{{-0.5, 0.5}, 0.4}});
  const auto a = solve_bra(sys, target, obs, 1.0, g, {0.25, 1.0, 1});
  const auto b = solve_bra(sys, target, obs, 1.0, g, {0.25, 1.0, 3});
  CHECK(a.data() == b.data());
  CHECK(a.metadata.obstacle_hash == obstacle_hash(g, obs));
}
