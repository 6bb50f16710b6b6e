#include "contingency/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "contingency/error.hpp"

namespace contingency {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kEventSlack = 1e-9;

void check_common(const Vec& x0, double t_end, double dt, const std::vector<ScenarioEvent>& events,
                  int p, int r0, int state_dim) {
  if (x0.size() != state_dim) throw ConfigError("x0 has the wrong dimension");
  if (!x0.allFinite()) throw ConfigError("x0 must be finite");
  if (!(dt > 0.0) || !(t_end > 0.0)) throw ConfigError("dt and t_end must be positive");
  const double ratio = t_end / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio))
    throw ConfigError("dt must divide t_end");
  if (r0 < 1 || r0 > p) throw ConfigError("r must lie in [1, p]");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (i > 0 && e.time < events[i - 1].time) throw ConfigError("events must be time-sorted");
    if (e.type == EventType::set_r && (e.value < 1 || e.value > p))
      throw ConfigError("set_r outside [1, p]");
    if (e.type == EventType::set_target && (e.value < 0 || e.value >= p))
      throw ConfigError("set_target index out of range");
  }
}

double planar_distance(const Vec& x, const Vec& target) {
  const Eigen::Index k = target.size();
  return (x.head(k) - target).norm();
}

}  // namespace

TrajectoryLog run(const Scenario& scenario) {
  return std::visit([](const auto& s) { return run(s); }, scenario);
}

SummaryContext summary_context(const StabScenario& sc) {
  SummaryContext ctx;
  ctx.obstacles = sc.obstacles;
  for (const auto& clf : sc.filter.clfs) ctx.target_points.push_back(clf.center());
  ctx.reach_tolerance = sc.reach_tolerance;
  return ctx;
}

SummaryContext summary_context(const ReachScenario& sc) {
  SummaryContext ctx;
  ctx.obstacles = sc.obstacles;
  for (const auto& p : sc.target_points) ctx.target_points.push_back(Vec(p));
  ctx.level_based_reach = true;
  return ctx;
}

RunSummary summarize(const std::vector<StepRecord>& records, const SummaryContext& ctx) {
  RunSummary s;
  if (records.empty()) return s;
  s.min_membership = std::numeric_limits<int>::max();
  std::vector<std::optional<PenetrationEvent>> open(ctx.obstacles.size());

  for (std::size_t k = 0; k < records.size(); ++k) {
    const StepRecord& rec = records[k];
    if (rec.qp_status == "infeasible" || rec.qp_status == "max_iter") ++s.infeasible_steps;
    if (rec.qp_status == "domain") ++s.domain_violations;
    if (rec.clamped) ++s.clamped_steps;
    // monitors cover the flight; after landing only geometry is tracked
    const bool flying = rec.qp_status != "landed";
    if (flying) {
      if (!std::isnan(rec.pivot)) s.min_pivot = std::min(s.min_pivot, rec.pivot);
      if (!std::isnan(rec.steer_value)) s.min_steer_value = std::min(s.min_steer_value, rec.steer_value);
      s.tol_grid = std::max(s.tol_grid, rec.cell_variation);
      s.min_membership = std::min(s.min_membership, rec.count);
      if (rec.count < rec.r) ++s.steps_below_r;
    }

    if (flying && (s.phases.empty() || s.phases.back().r != rec.r)) {
      s.phases.push_back({rec.t, rec.t, rec.r, rec.count});
    } else if (flying) {
      auto& ph = s.phases.back();
      ph.end = rec.t;
      ph.min_membership = std::min(ph.min_membership, rec.count);
    }

    const Eigen::Vector2d q(rec.x(0), rec.x(1));
    for (std::size_t o = 0; o < ctx.obstacles.size(); ++o) {
      const auto& ob = ctx.obstacles[o];
      if (ob.contains(q)) {
        const double depth = ob.penetration(q);
        if (!open[o]) open[o] = PenetrationEvent{rec.t, rec.t, depth, static_cast<int>(o)};
        open[o]->end = rec.t;
        open[o]->max_depth = std::max(open[o]->max_depth, depth);
      } else if (open[o]) {
        s.penetration_events.push_back(*open[o]);
        open[o].reset();
      }
    }

    if (!s.target_reach_time && rec.j_dagger >= 0 &&
        rec.j_dagger < static_cast<int>(ctx.target_points.size())) {
      const bool arrived = ctx.level_based_reach
                               ? (!std::isnan(rec.target_level) && rec.target_level >= 0.0)
                               : planar_distance(rec.x, ctx.target_points[rec.j_dagger]) <= ctx.reach_tolerance;
      if (arrived) s.target_reach_time = rec.t;
    }
  }
  for (auto& ev : open) {
    if (ev) s.penetration_events.push_back(*ev);
  }
  std::sort(s.penetration_events.begin(), s.penetration_events.end(),
            [](const PenetrationEvent& a, const PenetrationEvent& b) {
              return a.start != b.start ? a.start < b.start : a.obstacle < b.obstacle;
            });
  const StepRecord& last = records.back();
  s.final_target = last.j_dagger;
  if (last.j_dagger >= 0 && last.j_dagger < static_cast<int>(ctx.target_points.size()))
    s.final_distance = planar_distance(last.x, ctx.target_points[last.j_dagger]);
  return s;
}

TrajectoryLog run(const StabScenario& sc) {
  sc.system.validate();
  try {
    sc.filter.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  check_common(sc.x0, sc.t_end, sc.dt, sc.events, sc.filter.p(), sc.filter.r, sc.system.state_dim);
  for (const auto& e : sc.events) {
    if (e.type == EventType::enable_auto_switch)
      throw ConfigError("enable_auto_switch applies to reach-avoid scenarios only");
  }

  TrajectoryLog log;
  log.kind = "stabilization";
  log.value_prefix = "h";
  log.state_dim = sc.system.state_dim;
  log.input_dim = sc.system.input_dim;
  log.targets = sc.filter.p();
  log.filtered = !sc.nominal_only;

  StabFilterConfig cfg = sc.filter;
  const int p = cfg.p();
  Vec x = sc.x0;
  Vec u_prev;
  const std::size_t steps = step_count(sc.t_end, sc.dt);
  std::size_t next_event = 0;

  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * sc.dt;
    while (next_event < sc.events.size() && sc.events[next_event].time <= t + kEventSlack) {
      const ScenarioEvent& ev = sc.events[next_event++];
      if (ev.type == EventType::set_r) {
        cfg.r = ev.value;
      } else if (ev.type == EventType::set_target) {
        SwitchEvent sw{t, cfg.j_dagger, ev.value, false, true, "scheduled"};
        try {
          // the unfiltered loop carries no certificate, so its switch is unconditional
          cfg = sc.nominal_only ? switch_target(cfg, ev.value) : switch_target_checked(cfg, ev.value, x);
          if (sc.nominal_only) sw.reason = "scheduled, unchecked";
        } catch (const SwitchError& e) {
          sw.accepted = false;
          sw.reason = e.what();
        }
        log.switch_events.push_back(sw);
      }
    }

    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.r = cfg.r;
    rec.j_dagger = cfg.j_dagger;
    rec.values.resize(p);
    for (int j = 0; j < p; ++j) rec.values(j) = cfg.clfs[j].barrier(x);
    rec.pivot = pivot(std::span<const double>(rec.values.data(), p), cfg.r);
    rec.count = membership_count(std::span<const double>(rec.values.data(), p));
    rec.steer_value = rec.values(cfg.j_dagger);

    const Vec u_nom = cfg.nominal(x, cfg.j_dagger);
    Vec u;
    if (sc.nominal_only) {
      u = clamp_control(sc.system, u_nom, &rec.clamped);
      rec.qp_status = "nominal";
    } else {
      const FilterOutput out = combo_stab_filter(sc.system, cfg, x, true);
      rec.qp_status = to_string(out.status);
      rec.omega1 = out.omega;
      rec.steer_relu = out.relu_coefficient;
      if (out.margin) rec.margin = out.margin->margin;
      if (out.status == QPStatus::optimal) {
        u = out.control;
      } else {
        u = u_prev.size() ? u_prev : clamp_control(sc.system, u_nom);
      }
    }
    rec.u = u;
    log.records.push_back(rec);
    u_prev = u;

    if (k < steps) {
      try {
        bool clamped = false;
        x = rk4_step(sc.system, x, u, sc.dt, &clamped);
      } catch (const IntegrationError&) {
        log.summary.aborted_at = k;
        break;
      }
    }
  }
  const auto aborted = log.summary.aborted_at;
  log.summary = summarize(log.records, summary_context(sc));
  log.summary.aborted_at = aborted;
  return log;
}

TrajectoryLog run(const ReachScenario& sc) {
  if (!sc.filter) throw ConfigError("reach scenario needs a filter");
  const ReachFilter& filter = *sc.filter;
  const ControlAffineSystem& plant = filter.plant();
  const int p = filter.p();
  check_common(sc.x0, sc.t_end, sc.dt, sc.events, p, sc.initial.r, plant.state_dim);
  if (static_cast<int>(sc.targets.size()) != p || static_cast<int>(sc.target_points.size()) != p)
    throw ConfigError("target geometry must match the value tables");
  if (!sc.nominal) throw ConfigError("reach scenario needs a nominal controller");
  if (sc.initial.j_dagger < 0 || sc.initial.j_dagger >= p) throw ConfigError("j_dagger out of range");

  TrajectoryLog log;
  log.kind = "reach_avoid";
  log.value_prefix = "V";
  log.state_dim = plant.state_dim;
  log.input_dim = plant.input_dim;
  log.targets = p;
  log.filtered = !sc.nominal_only;

  ReachFilterState state = sc.initial;
  bool auto_switch = sc.auto_switch;
  bool landed = false;  // the active target was reached; the nominal landing law takes over
  Vec x = sc.x0;
  Vec u_prev;
  const std::size_t steps = step_count(sc.t_end, sc.dt);
  std::size_t next_event = 0;

  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * sc.dt;
    state.t = t;
    const Vec s = filter.project(x);
    const bool in_grid = filter.table(0).contains(std::span<const double>(s.data(), s.size()));

    while (next_event < sc.events.size() && sc.events[next_event].time <= t + kEventSlack) {
      const ScenarioEvent& ev = sc.events[next_event++];
      if (ev.type == EventType::set_r) {
        state.r = ev.value;
      } else if (ev.type == EventType::enable_auto_switch) {
        auto_switch = true;
      } else {
        SwitchEvent sw{t, state.j_dagger, ev.value, false, true, "scheduled"};
        try {
          if (!in_grid) throw SwitchError("state outside the value-table grid");
          state = filter.switch_target(state, ev.value, x);
        } catch (const SwitchError& e) {
          sw.accepted = false;
          sw.reason = e.what();
        }
        log.switch_events.push_back(sw);
      }
    }

    if (auto_switch && in_grid && !sc.nominal_only && !landed &&
        filter.value(state.j_dagger, x, state.tau1) < filter.params().eps_switch) {
      if (const auto j_new = filter.auto_switch_policy(state, x)) {
        log.switch_events.push_back({t, state.j_dagger, *j_new, true, true, "steering target infeasible"});
        state = filter.switch_target(state, *j_new, x);
      }
    }

    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.r = state.r;
    rec.j_dagger = state.j_dagger;
    rec.tau1 = state.tau1;
    rec.tau2 = state.tau2_now();
    rec.values = Vec::Constant(p, kNaN);
    rec.target_level = sc.targets[state.j_dagger].level(std::span<const double>(s.data(), s.size()));

    if (in_grid) {
      const std::span<const double> q(s.data(), s.size());
      for (int j = 0; j < p; ++j) {
        rec.values(j) = filter.table(j).value(q, rec.tau2);
        rec.cell_variation = std::max(rec.cell_variation, filter.table(j).cell_variation(q, rec.tau2));
      }
      rec.cell_variation =
          std::max(rec.cell_variation, filter.table(state.j_dagger).cell_variation(q, state.tau1));
      rec.pivot = pivot(std::span<const double>(rec.values.data(), p), state.r);
      rec.count = membership_count(std::span<const double>(rec.values.data(), p));
      rec.steer_value = filter.value(state.j_dagger, x, state.tau1);
    }

    if (!landed && rec.target_level >= 0.0) landed = true;
    const Vec u_nom = (landed && sc.landing) ? sc.landing(x, state.j_dagger) : sc.nominal(x, state.j_dagger);
    Vec u;
    if (landed) {
      u = clamp_control(plant, u_nom, &rec.clamped);
      rec.qp_status = "landed";
    } else if (!in_grid) {
      rec.qp_status = sc.nominal_only ? "nominal" : "domain";
      u = clamp_control(plant, u_nom, &rec.clamped);
      if (!sc.nominal_only && u_prev.size()) u = u_prev;
    } else {
      if (sc.nominal_only) {
        u = clamp_control(plant, u_nom, &rec.clamped);
        rec.qp_status = "nominal";
      } else {
        const ReachFilterOutput out = filter.step_control(state, x, u_nom, true);
        rec.qp_status = to_string(out.status);
        rec.omega1 = out.omega1;
        rec.omega2 = out.omega2;
        rec.steer_relu = out.steer_relu;
        if (out.margin) rec.margin = out.margin->margin;
        if (out.status == QPStatus::optimal) {
          u = out.control;
        } else {
          u = u_prev.size() ? u_prev : clamp_control(plant, u_nom);
        }
      }
    }
    rec.u = u;
    log.records.push_back(rec);
    u_prev = u;

    if (k < steps) {
      try {
        x = rk4_step(plant, x, u, sc.dt);
      } catch (const IntegrationError&) {
        log.summary.aborted_at = k;
        break;
      }
      state = ReachFilter::advance_clocks(state, sc.dt);
    }
  }
  const auto aborted = log.summary.aborted_at;
  log.summary = summarize(log.records, summary_context(sc));
  log.summary.aborted_at = aborted;
  return log;
}

DivergenceReport compare(const TrajectoryLog& a, const TrajectoryLog& b, double tol) {
  if (a.records.size() != b.records.size())
    throw std::invalid_argument("logs have different record counts");
  DivergenceReport rep;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const StepRecord& ra = a.records[k];
    const StepRecord& rb = b.records[k];
    if (std::abs(ra.t - rb.t) > 1e-12 || ra.x.size() != rb.x.size() || ra.u.size() != rb.u.size())
      throw std::invalid_argument("logs do not share a timebase");
    const double dx = (ra.x - rb.x).lpNorm<Eigen::Infinity>();
    const double du = (ra.u - rb.u).norm();
    rep.control_deviation.push_back(du);
    rep.membership_delta.push_back(ra.count - rb.count);
    rep.max_state_deviation = std::max(rep.max_state_deviation, dx);
    if (!rep.first_divergence && (dx > tol || (ra.u - rb.u).lpNorm<Eigen::Infinity>() > tol))
      rep.first_divergence = ra.t;
  }
  return rep;
}

NominalPolicy make_linear_nominal(const Mat& K, std::vector<Vec> equilibria, std::vector<Vec> inputs) {
  if (equilibria.size() != inputs.size()) throw std::invalid_argument("one input per equilibrium");
  return [K, equilibria = std::move(equilibria), inputs = std::move(inputs)](const Vec& x, int j) -> Vec {
    return inputs.at(j) - K * (x - equilibria.at(j));
  };
}

NominalPolicy make_runway_nominal(const RunwayNominalGains& g, std::vector<Runway> runways) {
  return [g, runways = std::move(runways)](const Vec& x, int j) -> Vec {
    const Runway& rw = runways.at(j);
    const double dx = rw.x - x(0), dy = rw.y - x(1);
    const bool near = std::hypot(dx, dy) <= g.switch_radius;
    const double theta = x(3), v = x(4);
    Vec u(3);
    const double heading_error = near ? wrap_angle(rw.heading - theta) : wrap_angle(std::atan2(dy, dx) - theta);
    const double v_cmd = near ? 0.0 : g.cruise_speed;
    u(0) = g.heading_gain * heading_error;
    u(1) = v_cmd * g.drag + g.speed_gain * (v_cmd - v);
    u(2) = near ? -x(2) : 0.0;
    return u.cwiseMax(-1.0).cwiseMin(1.0);
  };
}

NominalPolicy make_runway_landing(const RunwayNominalGains& g, std::vector<Runway> runways) {
  return [g, runways = std::move(runways)](const Vec& x, int j) -> Vec {
    const Runway& rw = runways.at(j);
    Vec u(3);
    u(0) = g.heading_gain * wrap_angle(rw.heading - x(3));
    u(1) = -g.speed_gain * x(4);
    u(2) = -x(2);
    return u.cwiseMax(-1.0).cwiseMin(1.0);
  };
}

}  // namespace contingency
