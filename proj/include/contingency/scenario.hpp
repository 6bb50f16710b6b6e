#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "contingency/certificates.hpp"
#include "contingency/dynamics.hpp"
#include "contingency/hj_solver.hpp"
#include "contingency/reach_filter.hpp"
#include "contingency/stab_filter.hpp"

namespace contingency {

enum class EventType { set_target, set_r, enable_auto_switch };

struct ScenarioEvent {
  double time = 0.0;
  EventType type = EventType::set_target;
  int value = 0;  // 0-based target for set_target, r for set_r
};

// Combinatorial stabilization run (Example 1 style).
struct StabScenario {
  ControlAffineSystem system;
  StabFilterConfig filter;  // initial r and j_dagger live here
  std::vector<CircleObstacle> obstacles;
  Vec x0;
  double t_end = 1.0;
  double dt = 0.01;
  std::vector<ScenarioEvent> events;
  bool nominal_only = false;
  double reach_tolerance = 1e-2;  // |x - x*_j| counted as arrival
};

// Combinatorial reach-avoid run (Example 2 style).
struct ReachScenario {
  std::shared_ptr<const ReachFilter> filter;
  ReachFilterState initial;
  NominalPolicy nominal;
  NominalPolicy landing;  // used once the active target is reached; empty means keep the nominal
  std::vector<TargetSpec> targets;        // on the projected state, same order as the tables
  std::vector<Eigen::Vector2d> target_points;  // planar positions for distance reporting
  std::vector<CircleObstacle> obstacles;
  Vec x0;
  double t_end = 1.0;
  double dt = 0.01;
  std::vector<ScenarioEvent> events;
  bool nominal_only = false;
  bool auto_switch = false;
};

using Scenario = std::variant<StabScenario, ReachScenario>;

struct StepRecord {
  double t = 0.0;
  Vec x;
  Vec u;
  double omega1 = 0.0;
  double omega2 = 0.0;
  Vec values;   // h_j(x) or V_j(x, tau2); NaN outside the table grid
  double pivot = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
  int j_dagger = 0;
  double tau1 = std::numeric_limits<double>::quiet_NaN();
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  std::string qp_status;  // optimal, infeasible, max_iter, nominal, domain
  double margin = std::numeric_limits<double>::quiet_NaN();
  // not exported to CSV
  int r = 1;
  double steer_value = std::numeric_limits<double>::quiet_NaN();  // h_{j_dagger} or V_{j_dagger}(x, tau1)
  double steer_relu = 0.0;   // omega entry of the CLF / steering row
  double target_level = std::numeric_limits<double>::quiet_NaN();  // l_{j_dagger}(x), reach only
  double cell_variation = 0.0;  // max table cell variation at this state, reach only
  bool clamped = false;
};

struct PenetrationEvent {
  double start = 0.0;
  double end = 0.0;
  double max_depth = 0.0;
  int obstacle = 0;
};

struct SwitchEvent {
  double time = 0.0;
  int from = 0;
  int to = 0;
  bool automatic = false;
  bool accepted = true;
  std::string reason;
};

struct PhaseMembership {
  double start = 0.0;
  double end = 0.0;
  int r = 1;
  int min_membership = 0;
};

struct RunSummary {
  double min_pivot = std::numeric_limits<double>::infinity();
  int min_membership = 0;
  std::vector<PhaseMembership> phases;  // one per constant-r stretch
  int steps_below_r = 0;
  std::vector<PenetrationEvent> penetration_events;
  int infeasible_steps = 0;
  int domain_violations = 0;
  int clamped_steps = 0;
  std::optional<double> target_reach_time;
  int final_target = 0;
  double final_distance = 0.0;
  double min_steer_value = std::numeric_limits<double>::infinity();
  double tol_grid = 0.0;
  std::optional<std::size_t> aborted_at;  // integration blew up at this step
};

struct TrajectoryLog {
  std::string kind;          // stabilization or reach_avoid
  std::string value_prefix;  // "h" or "V"
  int state_dim = 0;
  int input_dim = 0;
  int targets = 0;
  bool filtered = true;
  std::vector<StepRecord> records;
  std::vector<SwitchEvent> switch_events;
  RunSummary summary;
};

struct SummaryContext {
  std::vector<CircleObstacle> obstacles;
  std::vector<Vec> target_points;  // compared against the leading coordinates of x
  double reach_tolerance = 1e-2;   // stabilization: distance; reach: target level >= 0 is used
  bool level_based_reach = false;
};

// Deterministic closed loop with monitors. Configuration problems throw ConfigError; runtime
// violations are logged.
TrajectoryLog run(const Scenario& scenario);
TrajectoryLog run(const StabScenario& scenario);
TrajectoryLog run(const ReachScenario& scenario);

// Recomputes the summary from the step records (switch events are not summarized).
RunSummary summarize(const std::vector<StepRecord>& records, const SummaryContext& ctx);
SummaryContext summary_context(const StabScenario& scenario);
SummaryContext summary_context(const ReachScenario& scenario);

struct DivergenceReport {
  std::optional<double> first_divergence;  // first t where x or u differ by more than tol
  std::vector<double> control_deviation;   // |u_a - u_b| per step
  std::vector<int> membership_delta;       // count_a - count_b per step
  double max_state_deviation = 0.0;
};

// Throws std::invalid_argument when the two logs do not share a timebase.
DivergenceReport compare(const TrajectoryLog& a, const TrajectoryLog& b, double tol = 1e-9);

// u = u*_j - K (x - x*_j) towards the active equilibrium.
NominalPolicy make_linear_nominal(const Mat& K, std::vector<Vec> equilibria, std::vector<Vec> inputs);

struct RunwayNominalGains {
  double heading_gain = 2.0;
  double switch_radius = 0.5;
  double speed_gain = 1.0;
  double cruise_speed = 1.0;
  double drag = 0.3;
};

struct Runway {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

// Aircraft nominal: head for the runway, then align with it while bleeding speed and altitude.
NominalPolicy make_runway_nominal(const RunwayNominalGains& gains, std::vector<Runway> runways);
// Rollout after touchdown: hold the runway heading, stop, descend.
NominalPolicy make_runway_landing(const RunwayNominalGains& gains, std::vector<Runway> runways);

}  // namespace contingency
