#include <string>

#include "doctest.h"

#include "contingency/config.hpp"
#include "contingency/error.hpp"

using namespace contingency;

namespace {

const std::string kStab = R"(
schema_version = 1
kind = "stabilization"
name = "tiny"

[sim]
x0 = [0.1, 0.0]
t_end = 1.0
dt = 0.01
r = 1
j_dagger = 1

[[events]]
time = 0.5
set_target = 2

[stabilization]
A = [[0.9, -3.0], [4.0, -0.1]]
B = [[1.0], [1.0]]
K = [[1.0, 0.0]]
equilibria = [[0.0, 0.0], [0.29, -0.31]]
obstacles = [{ center = [2.0, 0.0], radius = 0.5 }]
)";

std::string with(const std::string& base, const std::string& from, const std::string& to) {
  std::string s = base;
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  s.replace(at, from.size(), to);
  return s;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("a minimal stabilization config parses") {
  const auto cfg = parse_config(kStab);
  CHECK(cfg.kind == ConfigKind::stabilization);
  CHECK(cfg.name == "tiny");
  REQUIRE(cfg.stab.has_value());
  const auto& sc = cfg.stab->scenario;
  CHECK(sc.filter.p() == 2);
  CHECK(sc.filter.j_dagger == 0);  // configs count from 1
  REQUIRE(sc.events.size() == 1);
  CHECK(sc.events[0].value == 1);
  CHECK((cfg.stab->P - 5.0 * Mat::Identity(2, 2)).norm() < 1e-10);
  // level: nu = 0.9 times the squared gap to the obstacle, scaled by P = 5 I
  CHECK(sc.filter.clfs[0].level() == doctest::Approx(0.9 * 5.0 * 1.5 * 1.5).epsilon(1e-9));
  CHECK(cfg.paths.output == "out");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(error_of(kStab + "bogus = 1\n").find("stabilization.bogus: unknown key") != std::string::npos);
  CHECK(error_of(with(kStab, "t_end = 1.0", "t_end = 1.0\nspeed = 3")).find("sim.speed: unknown key") !=
        std::string::npos);
  CHECK(error_of(with(kStab, "schema_version = 1", "schema_version = 1\nextra = true")).find("extra: unknown key") !=
        std::string::npos);
}

TEST_CASE("bad values are rejected") {
  CHECK(error_of(with(kStab, "schema_version = 1", "schema_version = 7")).find("schema_version") != std::string::npos);
  CHECK(error_of(with(kStab, "r = 1", "r = 3")).find("sim.r") != std::string::npos);
  CHECK(error_of(with(kStab, "j_dagger = 1", "j_dagger = 0")).find("sim.j_dagger") != std::string::npos);
  CHECK(error_of(with(kStab, "dt = 0.01", "dt = \"fast\"")).find("sim.dt") != std::string::npos);
  CHECK(error_of(with(kStab, "set_target = 2", "set_target = 2\nset_r = 1")).find("exactly one") != std::string::npos);
  CHECK(error_of(with(kStab, "set_target = 2", "enable_auto_switch = true")).find("reach_avoid") != std::string::npos);
  CHECK(error_of(with(kStab, "kind = \"stabilization\"", "kind = \"other\"")).find("kind") != std::string::npos);
  CHECK(error_of(with(kStab, "x0 = [0.1, 0.0]", "x0 = [0.1]")).find("sim.x0") != std::string::npos);
  // non-Hurwitz closed loop
  CHECK(!error_of(with(kStab, "K = [[1.0, 0.0]]", "K = [[-5.0, 0.0]]")).empty());
  CHECK(!error_of("not toml [").empty());
}

#ifdef CONTINGENCY_TEST_CONFIG_DIR
TEST_CASE("shipped configs load") {
  const std::string dir = CONTINGENCY_TEST_CONFIG_DIR;
  const auto ex1 = load_config(dir + "/ex1.toml");
  REQUIRE(ex1.stab.has_value());
  CHECK(ex1.stab->scenario.filter.p() == 3);
  for (const char* name : {"ex2_a.toml", "ex2_b.toml", "ex2_c.toml", "ex2_d.toml"}) {
    const auto cfg = load_config(dir + "/" + name);
    REQUIRE(cfg.reach.has_value());
    CHECK(cfg.reach->runways.size() == 6);
    CHECK(cfg.reach->grid.size() == 81u * 81u * 41u);
  }
  const auto hj = load_config(dir + "/hj_1d.toml");
  CHECK(hj.kind == ConfigKind::hj_integrator);
  CHECK_THROWS_AS(load_config(dir + "/missing.toml"), ConfigError);
}
#endif
