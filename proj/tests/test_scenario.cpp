#include <cmath>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "contingency/config.hpp"
#include "contingency/error.hpp"
#include "contingency/log_io.hpp"
#include "contingency/scenario.hpp"

using namespace contingency;

namespace {

const char* kStab = R"(
schema_version = 1
kind = "stabilization"

[sim]
x0 = [0.05, 0.1]
t_end = 2.0
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
alpha_clf = 0.15
equilibria = [[0.0, 0.0], [0.29, -0.31]]
obstacles = [{ center = [2.0, 0.0], radius = 0.5 }]
)";

StabScenario tiny() { return parse_config(kStab).stab->scenario; }

StepRecord rec_at(double t, double x, double y, int count = 1) {
  StepRecord r;
  r.t = t;
  r.x = Vec(2);
  r.x << x, y;
  r.u = Vec::Zero(1);
  r.values = Vec::Zero(1);
  r.count = count;
  r.pivot = 0.0;
  r.qp_status = "optimal";
  return r;
}

}  // namespace

TEST_CASE("linear nominal is u* - K (x - x*)") {
  Mat K(1, 2);
  K << 1.0, 0.0;
  Vec e(2), u(1);
  e << 0.29, -0.31;
  u << 0.3;
  const auto pol = make_linear_nominal(K, {e}, {u});
  Vec x(2);
  x << 0.5, 0.0;
  CHECK(pol(x, 0)(0) == doctest::Approx(0.3 - 0.21));
}

TEST_CASE("closed loop: record count, switch, summary recompute") {
  const auto sc = tiny();
  const auto log = run(sc);
  CHECK(log.records.size() == 201);
  CHECK(log.records.front().t == 0.0);
  CHECK(log.records.back().t == doctest::Approx(2.0));
  REQUIRE(log.switch_events.size() == 1);
  CHECK(log.switch_events[0].to == 1);
  CHECK(log.records[49].j_dagger == 0);
  CHECK(log.records[50].j_dagger == 1);
  const auto again = summarize(log.records, summary_context(sc));
  CHECK(again.min_membership == log.summary.min_membership);
  CHECK(again.steps_below_r == log.summary.steps_below_r);
  CHECK(again.infeasible_steps == log.summary.infeasible_steps);
  CHECK(again.penetration_events.size() == log.summary.penetration_events.size());
  // the min over records is what the summary reports
  int min_count = 1 << 30;
  for (const auto& r : log.records) min_count = std::min(min_count, r.count);
  CHECK(log.summary.min_membership == min_count);
  CHECK(log.summary.infeasible_steps == 0);
  // heading for the second equilibrium after the switch
  CHECK(log.summary.final_target == 1);
  Vec e2(2);
  e2 << 0.29, -0.31;
  CHECK(log.summary.final_distance < (log.records[50].x - e2).norm());
}

TEST_CASE("runs are byte-for-byte deterministic") {
  const auto sc = tiny();
  std::ostringstream a, b;
  write_csv(run(sc), a);
  write_csv(run(sc), b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("t,x0,x1,u0,omega1,omega2,h_1,h_2,pivot,count,j_dagger,tau1,tau2,qp_status,margin\n", 0) == 0);
}

TEST_CASE("nominal-only run and comparison") {
  auto sc = tiny();
  const auto filtered = run(sc);
  sc.nominal_only = true;
  const auto nominal = run(sc);
  CHECK_FALSE(nominal.filtered);
  CHECK(nominal.records[3].qp_status == "nominal");
  const auto rep = compare(filtered, filtered);
  CHECK_FALSE(rep.first_divergence.has_value());
  CHECK(rep.max_state_deviation == 0.0);
  const auto diff = compare(filtered, nominal);
  CHECK(diff.control_deviation.size() == filtered.records.size());
  auto shorter = sc;
  shorter.t_end = 1.0;
  CHECK_THROWS_AS(compare(filtered, run(shorter)), std::invalid_argument);
}

TEST_CASE("config errors surface from run") {
  auto sc = tiny();
  sc.dt = 0.0;
  CHECK_THROWS_AS(run(sc), ConfigError);
  sc = tiny();
  sc.events.push_back({0.2, EventType::enable_auto_switch, 0});
  CHECK_THROWS_AS(run(sc), ConfigError);
}

TEST_CASE("penetration monitor on synthetic records") {
  SummaryContext ctx;
  ctx.obstacles = {CircleObstacle{{1.0, 0.0}, 0.5}};
  ctx.target_points = {Vec::Zero(2)};
  std::vector<StepRecord> recs = {rec_at(0.0, 0.0, 0.0), rec_at(0.1, 0.6, 0.0), rec_at(0.2, 0.8, 0.0),
                                  rec_at(0.3, 1.5, 0.0), rec_at(0.4, 1.2, 0.0), rec_at(0.5, 2.0, 0.0, 0)};
  const auto s = summarize(recs, ctx);
  REQUIRE(s.penetration_events.size() == 2);
  CHECK(s.penetration_events[0].start == 0.1);
  CHECK(s.penetration_events[0].end == 0.2);
  CHECK(s.penetration_events[0].max_depth == doctest::Approx(0.3));
  CHECK(s.penetration_events[1].start == 0.4);  // the boundary point 1.5 closes the first event
  CHECK(s.min_membership == 0);
  CHECK(s.steps_below_r == 1);
  CHECK(s.target_reach_time == 0.0);
  CHECK(s.final_distance == doctest::Approx(2.0));

  // soundness: every sample inside the disk lies in some reported interval and vice versa
  for (const auto& r : recs) {
    const bool inside = ctx.obstacles[0].contains(r.x);
    bool covered = false;
    for (const auto& e : s.penetration_events) covered |= (r.t >= e.start && r.t <= e.end);
    CHECK(inside == covered);
  }
}

TEST_CASE("CSV and summary formats") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-INFINITY) == "-inf");
  CHECK(format_double(3.0) == "3");
  const auto log = run(tiny());
  const auto doc = nlohmann::json::parse(summary_json(log));
  CHECK(doc["kind"] == "stabilization");
  CHECK(doc["records"] == 201);
  CHECK(doc["switch_events"][0]["to"] == 2);  // 1-based in files
  CHECK(doc["min_membership"] == log.summary.min_membership);
  std::ostringstream csv;
  write_csv(log, csv);
  std::istringstream in(csv.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 202);
}
