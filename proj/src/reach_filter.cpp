#include "contingency/reach_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "contingency/error.hpp"

namespace contingency {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Tau2Schedule Tau2Schedule::constant(double value) {
  if (!(value < 0.0)) throw std::invalid_argument("tau2 must be negative");
  Tau2Schedule s;
  s.times_ = {0.0};
  s.values_ = {value};
  return s;
}

Tau2Schedule Tau2Schedule::table(std::vector<double> times, std::vector<double> values) {
  if (times.empty() || times.size() != values.size())
    throw std::invalid_argument("tau2 schedule needs matching, nonempty breakpoints");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(values[i] < 0.0)) throw std::invalid_argument("tau2 must be negative");
    if (i > 0 && !(times[i] > times[i - 1])) throw std::invalid_argument("tau2 times must increase");
  }
  Tau2Schedule s;
  s.times_ = std::move(times);
  s.values_ = std::move(values);
  return s;
}

double Tau2Schedule::value(double t) const {
  if (t <= times_.front()) return values_.front();
  if (t >= times_.back()) return values_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
  return values_[i - 1] + w * (values_[i] - values_[i - 1]);
}

double Tau2Schedule::rate(double t) const {
  if (times_.size() == 1 || t < times_.front() || t >= times_.back()) return 0.0;
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  return (values_[i] - values_[i - 1]) / (times_[i] - times_[i - 1]);
}

ReachFilterState initial_reach_state(int j_dagger, double T, int r, Tau2Schedule tau2,
                                     std::optional<double> tau1_initial) {
  if (!(T > 0.0)) throw std::invalid_argument("targeting horizon must be positive");
  ReachFilterState s;
  s.j_dagger = j_dagger;
  s.T = T;
  s.r = r;
  s.tau2 = std::move(tau2);
  s.tau1 = tau1_initial.value_or(-T);
  if (s.tau1 < -T - 1e-12 || s.tau1 > 0.0) throw std::invalid_argument("tau1 must lie in [-T, 0]");
  s.deadline = -s.tau1;
  return s;
}

ReachFilter::ReachFilter(ControlAffineSystem plant,
                         std::shared_ptr<const std::vector<ValueFunctionTable>> tables,
                         std::vector<int> projection, ReachFilterParams params)
    : plant_(std::move(plant)), tables_(std::move(tables)), projection_(std::move(projection)),
      params_(std::move(params)) {
  if (!tables_ || tables_->empty()) throw std::invalid_argument("reach filter needs value tables");
  const auto& first = tables_->front();
  for (const auto& t : *tables_) {
    if (!(t.grid() == first.grid()) || t.metadata.dynamics_id != first.metadata.dynamics_id)
      throw std::invalid_argument("value tables must share one grid and dynamics");
  }
  if (static_cast<int>(projection_.size()) != first.grid().dims())
    throw std::invalid_argument("projection must map every table dimension");
  for (int idx : projection_) {
    if (idx < 0 || idx >= plant_.state_dim) throw std::invalid_argument("projection index out of range");
  }
  if (!params_.alpha_steer || !params_.alpha_pivot || !params_.rho)
    throw std::invalid_argument("reach filter maps missing");
  if (!(params_.d_omega > 0.0)) throw std::invalid_argument("d_omega must be positive");
}

Vec ReachFilter::project(const Vec& x) const {
  Vec s(static_cast<Eigen::Index>(projection_.size()));
  for (std::size_t k = 0; k < projection_.size(); ++k) s(k) = x(projection_[k]);
  return s;
}

double ReachFilter::value(int j, const Vec& x, double tau) const {
  const Vec s = project(x);
  return table(j).value(std::span<const double>(s.data(), s.size()), tau);
}

ReachFilter::RowTerms ReachFilter::row_terms(int j, const Vec& x, double tau) const {
  const Vec s = project(x);
  const std::span<const double> q(s.data(), s.size());
  const auto& tab = table(j);
  const Vec grad_reduced = tab.gradient(q, tau);
  Vec grad = Vec::Zero(plant_.state_dim);
  for (std::size_t k = 0; k < projection_.size(); ++k) grad(projection_[k]) += grad_reduced(k);
  RowTerms t;
  t.value = tab.value(q, tau);
  t.dtau = tab.tau_derivative(q, tau);
  t.lf = grad.dot(plant_.drift(x));
  t.lg = plant_.input_map(x).transpose() * grad;
  return t;
}

DenseQP ReachFilter::assemble(const ReachFilterState& state, const Vec& x, const Vec& u_nom) const {
  const int m = plant_.input_dim, p = this->p();
  if (state.r < 1 || state.r > p) throw std::invalid_argument("r must lie in [1, p]");
  const double tau2 = state.tau2_now();
  const double tau2_rate = state.tau2.rate(state.t);

  std::vector<RowTerms> contingency;
  std::vector<double> values;
  for (int j = 0; j < p; ++j) {
    contingency.push_back(row_terms(j, x, tau2));
    values.push_back(contingency.back().value);
  }
  const double h_pivot = pivot(values, state.r);

  DenseQP qp;
  qp.hessian = Mat::Identity(m + 2, m + 2);
  qp.hessian(m, m) = 2.0 * params_.d_omega;
  qp.hessian(m + 1, m + 1) = 2.0 * params_.d_omega;
  qp.linear = Vec::Zero(m + 2);
  qp.linear.head(m) = -u_nom;
  qp.ineq_matrix = Mat::Zero(p + 1, m + 2);
  qp.ineq_rhs = Vec::Zero(p + 1);

  const RowTerms steer = row_terms(state.j_dagger, x, state.tau1);
  const double a_steer = params_.alpha_steer(steer.value);
  qp.ineq_matrix.row(0).head(m) = -steer.lg.transpose();
  qp.ineq_matrix(0, m) = a_steer >= 0.0 ? 0.0 : a_steer;  // -ReLU(-alpha(V))
  qp.ineq_rhs(0) = a_steer + state.tau1_rate() * steer.dtau + steer.lf;

  for (int j = 0; j < p; ++j) {
    const RowTerms& c = contingency[j];
    qp.ineq_matrix.row(j + 1).head(m) = -c.lg.transpose();
    qp.ineq_matrix(j + 1, m + 1) = -params_.rho(c.value - h_pivot);
    qp.ineq_rhs(j + 1) = params_.alpha_pivot(c.value) + tau2_rate * c.dtau + c.lf;
  }
  qp.lower = Vec::Constant(m + 2, -kInf);
  qp.upper = Vec::Constant(m + 2, kInf);
  qp.lower.head(m) = plant_.control_lo;
  qp.upper.head(m) = plant_.control_hi;
  qp.lower(m) = 0.0;
  qp.lower(m + 1) = 0.0;
  return qp;
}

ReachFilterOutput ReachFilter::step_control(const ReachFilterState& state, const Vec& x,
                                            const Vec& u_nom, bool with_margin) const {
  const int m = plant_.input_dim, p = this->p();
  const DenseQP qp = assemble(state, x, u_nom);
  QPSolver solver;
  ReachFilterOutput out;
  out.qp = solver.solve(qp);
  out.status = out.qp.status;
  out.nominal = u_nom;
  out.control = out.qp.solution.head(m);
  out.omega1 = out.qp.solution(m);
  out.omega2 = out.qp.solution(m + 1);
  out.slacks = qp.ineq_rhs - qp.ineq_matrix * out.qp.solution;
  out.omega1_column = qp.ineq_matrix.col(m);
  out.omega2_column = qp.ineq_matrix.col(m + 1);
  out.steer_relu = -qp.ineq_matrix(0, m);
  out.values.resize(p);
  const double tau2 = state.tau2_now();
  for (int j = 0; j < p; ++j) out.values(j) = value(j, x, tau2);
  out.pivot_value = pivot(std::span<const double>(out.values.data(), p), state.r);
  out.membership = membership_count(std::span<const double>(out.values.data(), p));
  out.steer_value = value(state.j_dagger, x, state.tau1);
  if (with_margin || out.status != QPStatus::optimal)
    out.margin = strict_feasibility_margin(qp.ineq_matrix, qp.ineq_rhs, qp.lower, qp.upper);
  return out;
}

FeasibilityVerdict ReachFilter::feasibility_check(const ReachFilterState& state, int j, const Vec& x,
                                                  HorizonClock which) const {
  if (j < 0 || j >= p()) throw std::invalid_argument("target index out of range");
  const double tau = which == HorizonClock::steering ? state.tau1 : state.tau2_now();
  FeasibilityVerdict v;
  v.value = value(j, x, tau);
  v.feasible = v.value >= params_.eps_feas;
  return v;
}

std::optional<int> ReachFilter::auto_switch_policy(const ReachFilterState& state, const Vec& x) const {
  const double tau2 = state.tau2_now();
  std::optional<int> best;
  double best_v = -kInf;
  for (int j = 0; j < p(); ++j) {
    if (j == state.j_dagger) continue;
    const double v = value(j, x, tau2);
    if (v > best_v) {
      best_v = v;
      best = j;
    }
  }
  if (!best || best_v < 0.0) return std::nullopt;
  return best;
}

ReachFilterState ReachFilter::switch_target(const ReachFilterState& state, int j_new, const Vec& x) const {
  if (j_new < 0 || j_new >= p()) throw std::invalid_argument("switch target out of range");
  const double tau2 = state.tau2_now();
  if (value(j_new, x, tau2) < 0.0) throw SwitchError("contingency target not reachable at switch time");
  ReachFilterState next = state;
  next.j_dagger = j_new;
  next.tau1 = std::max(tau2, -state.T);
  next.deadline = state.t - tau2;
  return next;
}

ReachFilterState ReachFilter::advance_clocks(const ReachFilterState& state, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  ReachFilterState next = state;
  next.tau1 = std::min(state.tau1 + dt, 0.0);
  next.t = state.t + dt;
  return next;
}

}  // namespace contingency
