#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "contingency/dynamics.hpp"
#include "contingency/hj_solver.hpp"
#include "contingency/qp.hpp"
#include "contingency/stab_filter.hpp"

namespace contingency {

// Contingency horizon t -> tau2(t): constant, or piecewise linear through breakpoints and held
// at the end values outside them.
class Tau2Schedule {
 public:
  static Tau2Schedule constant(double value);
  // Throws std::invalid_argument unless times strictly increase and every value is negative.
  static Tau2Schedule table(std::vector<double> times, std::vector<double> values);

  double value(double t) const;
  double rate(double t) const;
  bool is_constant() const { return times_.size() == 1; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct ReachFilterParams {
  double d_omega = 0.1;
  ScalarMap alpha_steer;  // alpha_{j_dagger}
  ScalarMap alpha_pivot;  // alpha_{h~}
  ScalarMap rho;
  double eps_switch = 0.0;
  double eps_feas = 0.0;
};

// Controller-internal state: active target, horizon clocks and mission clock.
struct ReachFilterState {
  int j_dagger = 0;
  double tau1 = 0.0;        // steering horizon, in [-T, 0], rate 1
  Tau2Schedule tau2 = Tau2Schedule::constant(-1.0);
  double t = 0.0;
  double T = 0.0;           // targeting horizon
  int r = 1;
  double deadline = 0.0;    // time by which j_dagger is due

  double tau2_now() const { return tau2.value(t); }
  double tau1_rate() const { return tau1 < 0.0 ? 1.0 : 0.0; }
};

ReachFilterState initial_reach_state(int j_dagger, double T, int r, Tau2Schedule tau2,
                                     std::optional<double> tau1_initial = std::nullopt);

struct ReachFilterOutput {
  Vec control;
  Vec nominal;
  double omega1 = 0.0;
  double omega2 = 0.0;
  QPStatus status = QPStatus::optimal;
  Vec slacks;
  Vec values;                   // V_j(x, tau2)
  double steer_value = 0.0;     // V_{j_dagger}(x, tau1)
  double pivot_value = 0.0;     // h~(x, tau2)
  int membership = 0;
  double steer_relu = 0.0;      // ReLU(-alpha(V_{j_dagger})), the omega1 entry of the steering row
  Vec omega1_column;
  Vec omega2_column;
  std::optional<MarginReport> margin;
  QPResult qp;
};

enum class HorizonClock { steering, contingency };

struct FeasibilityVerdict {
  bool feasible = false;
  double value = 0.0;
};

// Combinatorial reach-avoid filter over p value tables. Tables are built on a reduced state;
// `projection[k]` is the plant state index feeding table dimension k.
class ReachFilter {
 public:
  ReachFilter(ControlAffineSystem plant, std::shared_ptr<const std::vector<ValueFunctionTable>> tables,
              std::vector<int> projection, ReachFilterParams params);

  int p() const { return static_cast<int>(tables_->size()); }
  const ControlAffineSystem& plant() const { return plant_; }
  const ReachFilterParams& params() const { return params_; }
  const ValueFunctionTable& table(int j) const { return (*tables_)[j]; }
  Vec project(const Vec& x) const;

  double value(int j, const Vec& x, double tau) const;

  // Decision (u, omega1, omega2); row 0 steering, rows 1..p contingency, U and omega >= 0 as
  // bounds.
  DenseQP assemble(const ReachFilterState& state, const Vec& x, const Vec& u_nom) const;
  // Throws DomainError when x leaves the table grid.
  ReachFilterOutput step_control(const ReachFilterState& state, const Vec& x, const Vec& u_nom,
                                 bool with_margin = false) const;

  FeasibilityVerdict feasibility_check(const ReachFilterState& state, int j, const Vec& x,
                                       HorizonClock which) const;
  // argmax_{j != j_dagger} V_j(x, tau2) when that maximum is >= 0, lowest index on ties.
  std::optional<int> auto_switch_policy(const ReachFilterState& state, const Vec& x) const;
  // Sets j_dagger, resets tau1 to tau2(t) and the deadline to t + |tau2(t)|. Throws SwitchError
  // ("contingency target not reachable at switch time") when V_{j_new}(x, tau2) < 0.
  ReachFilterState switch_target(const ReachFilterState& state, int j_new, const Vec& x) const;

  static ReachFilterState advance_clocks(const ReachFilterState& state, double dt);

 private:
  struct RowTerms {
    double value, dtau, lf;
    Vec lg;
  };
  RowTerms row_terms(int j, const Vec& x, double tau) const;

  ControlAffineSystem plant_;
  std::shared_ptr<const std::vector<ValueFunctionTable>> tables_;
  std::vector<int> projection_;
  ReachFilterParams params_;
};

}  // namespace contingency
