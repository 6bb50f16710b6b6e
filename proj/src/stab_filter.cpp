#include "contingency/stab_filter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "contingency/error.hpp"

namespace contingency {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Derivatives {
  double value;
  double lf;
  Vec lg;
};

Vec barrier_values(const StabFilterConfig& cfg, const Vec& x) {
  Vec h(cfg.p());
  for (int j = 0; j < cfg.p(); ++j) h(j) = cfg.clfs[j].barrier(x);
  return h;
}

void fill_control_bounds(const ControlAffineSystem& sys, DenseQP& qp, int extra) {
  const int m = sys.input_dim;
  qp.lower = Vec::Constant(m + extra, -kInf);
  qp.upper = Vec::Constant(m + extra, kInf);
  qp.lower.head(m) = sys.control_lo;
  qp.upper.head(m) = sys.control_hi;
}

// Barrier rows -(Lg h_j) u - rho(h_j - h~) omega <= alpha(h_j) + Lf h_j, written at row offset.
void add_barrier_rows(const ControlAffineSystem& sys, const StabFilterConfig& cfg, const Vec& x,
                      const Vec& f, const Mat& g, double pivot_value, DenseQP& qp, int offset) {
  const int m = sys.input_dim;
  for (int j = 0; j < cfg.p(); ++j) {
    const double h = cfg.clfs[j].barrier(x);
    const Vec grad = cfg.clfs[j].barrier_gradient(x);
    const double lf = grad.dot(f);
    const Vec lg = g.transpose() * grad;
    qp.ineq_matrix.row(offset + j).head(m) = -lg.transpose();
    qp.ineq_matrix(offset + j, m) = -cfg.rho(h - pivot_value);
    qp.ineq_rhs(offset + j) = cfg.alpha_cbf(h) + lf;
  }
}

FilterOutput finish(const DenseQP& qp, const QPResult& res, int m, const Vec& u_nom) {
  FilterOutput out;
  out.qp = res;
  out.status = res.status;
  out.nominal = u_nom;
  out.control = res.solution.head(m);
  out.omega = res.solution.size() > m ? res.solution(m) : 0.0;
  if (qp.rows() > 0) out.slacks = qp.ineq_rhs - qp.ineq_matrix * res.solution;
  if (qp.dim() > m) out.omega_column = qp.ineq_matrix.col(m);
  return out;
}

}  // namespace

ScalarMap linear_rate(double gain) {
  if (!(gain > 0.0)) throw std::invalid_argument("rate gain must be positive");
  return [gain](double s) { return gain * s; };
}

ScalarMap scaled_square(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("rho scale must be positive");
  return [scale](double s) { return scale * s * s; };
}

void StabFilterConfig::validate() const {
  if (clfs.empty()) throw std::invalid_argument("need at least one CLF");
  if (r < 1 || r > p()) throw std::invalid_argument("r must lie in [1, p]");
  if (j_dagger < 0 || j_dagger >= p()) throw std::invalid_argument("j_dagger out of range");
  if (!alpha_clf || !alpha_cbf || !rho || !nominal) throw std::invalid_argument("filter maps missing");
  if (!(c_omega > 0.0)) throw std::invalid_argument("c_omega must be positive");
}

DenseQP assemble_stab_qp(const ControlAffineSystem& sys, const StabFilterConfig& cfg, const Vec& x) {
  cfg.validate();
  const int m = sys.input_dim, p = cfg.p();
  const Vec f = sys.drift(x);
  const Mat g = sys.input_map(x);
  const Vec u_nom = cfg.nominal(x, cfg.j_dagger);
  const Vec h = barrier_values(cfg, x);
  const double pv = pivot(std::span<const double>(h.data(), p), cfg.r);

  DenseQP qp;
  qp.hessian = Mat::Identity(m + 1, m + 1);
  qp.hessian(m, m) = 2.0 * cfg.c_omega;
  qp.linear = Vec::Zero(m + 1);
  qp.linear.head(m) = -u_nom;
  qp.ineq_matrix = Mat::Zero(p + 1, m + 1);
  qp.ineq_rhs = Vec::Zero(p + 1);

  const QuadraticCLF& active = cfg.clfs[cfg.j_dagger];
  const Vec gradV = active.gradient(x);
  const double h_act = h(cfg.j_dagger);
  const double relu = h_act >= 0.0 ? 0.0 : -h_act;
  qp.ineq_matrix.row(0).head(m) = (g.transpose() * gradV).transpose();
  qp.ineq_matrix(0, m) = -relu;
  qp.ineq_rhs(0) = -cfg.alpha_clf(active.value(x)) - gradV.dot(f);

  add_barrier_rows(sys, cfg, x, f, g, pv, qp, 1);
  fill_control_bounds(sys, qp, 1);
  qp.lower(m) = 0.0;
  return qp;
}

FilterOutput clf_qp_control(const ControlAffineSystem& sys, const QuadraticCLF& clf,
                            const ScalarMap& alpha, const Vec& u_nom, const Vec& x) {
  const int m = sys.input_dim;
  const Vec gradV = clf.gradient(x);
  DenseQP qp;
  qp.hessian = Mat::Identity(m, m);
  qp.linear = -u_nom;
  qp.ineq_matrix = (sys.input_map(x).transpose() * gradV).transpose();
  qp.ineq_rhs = Vec::Constant(1, -alpha(clf.value(x)) - gradV.dot(sys.drift(x)));
  fill_control_bounds(sys, qp, 0);
  QPSolver solver;
  FilterOutput out = finish(qp, solver.solve(qp), m, u_nom);
  if (out.status != QPStatus::optimal)
    out.margin = strict_feasibility_margin(qp.ineq_matrix, qp.ineq_rhs, qp.lower, qp.upper);
  return out;
}

FilterOutput combo_cbf_filter(const ControlAffineSystem& sys, const StabFilterConfig& cfg,
                              const Vec& x) {
  cfg.validate();
  const int m = sys.input_dim, p = cfg.p();
  const Vec u_nom = cfg.nominal(x, cfg.j_dagger);
  const Vec h = barrier_values(cfg, x);
  const double pv = pivot(std::span<const double>(h.data(), p), cfg.r);

  DenseQP qp;
  qp.hessian = Mat::Identity(m + 1, m + 1);
  qp.hessian(m, m) = 2.0 * cfg.c_omega;
  qp.linear = Vec::Zero(m + 1);
  qp.linear.head(m) = -u_nom;
  qp.ineq_matrix = Mat::Zero(p, m + 1);
  qp.ineq_rhs = Vec::Zero(p);
  add_barrier_rows(sys, cfg, x, sys.drift(x), sys.input_map(x), pv, qp, 0);
  fill_control_bounds(sys, qp, 1);
  qp.lower(m) = 0.0;

  QPSolver solver;
  FilterOutput out = finish(qp, solver.solve(qp), m, u_nom);
  out.barrier_values = h;
  out.pivot_value = pv;
  out.membership = membership_count(std::span<const double>(h.data(), p));
  if (out.status != QPStatus::optimal)
    out.margin = strict_feasibility_margin(qp.ineq_matrix, qp.ineq_rhs, qp.lower, qp.upper);
  return out;
}

FilterOutput combo_stab_filter(const ControlAffineSystem& sys, const StabFilterConfig& cfg,
                               const Vec& x, bool with_margin) {
  if (!x.allFinite()) throw std::invalid_argument("state must be finite");
  const int m = sys.input_dim, p = cfg.p();
  const DenseQP qp = assemble_stab_qp(sys, cfg, x);
  QPSolver solver;
  FilterOutput out = finish(qp, solver.solve(qp), m, -qp.linear.head(m));
  out.barrier_values = barrier_values(cfg, x);
  out.pivot_value = pivot(std::span<const double>(out.barrier_values.data(), p), cfg.r);
  out.membership = membership_count(std::span<const double>(out.barrier_values.data(), p));
  out.relu_coefficient = -qp.ineq_matrix(0, m);
  if (with_margin || out.status != QPStatus::optimal)
    out.margin = strict_feasibility_margin(qp.ineq_matrix, qp.ineq_rhs, qp.lower, qp.upper);
  return out;
}

StabFilterConfig switch_target(const StabFilterConfig& cfg, int j_new) {
  if (j_new < 0 || j_new >= cfg.p()) throw std::invalid_argument("switch target out of range");
  StabFilterConfig next = cfg;
  next.j_dagger = j_new;
  return next;
}

StabFilterConfig switch_target_checked(const StabFilterConfig& cfg, int j_new, const Vec& x) {
  if (j_new < 0 || j_new >= cfg.p()) throw std::invalid_argument("switch target out of range");
  if (cfg.clfs[j_new].barrier(x) < 0.0)
    throw SwitchError("target not currently in its certified region");
  return switch_target(cfg, j_new);
}

}  // namespace contingency
