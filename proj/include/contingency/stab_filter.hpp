#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "contingency/certificates.hpp"
#include "contingency/dynamics.hpp"
#include "contingency/qp.hpp"

namespace contingency {

using ScalarMap = std::function<double(double)>;

// alpha(s) = gain * s (extended class-K for gain > 0).
ScalarMap linear_rate(double gain);
// rho(s) = scale * s^2 (positive definite, rho(0) = 0 exactly).
ScalarMap scaled_square(double scale);

// Nominal feedback given the state and the active target index (0-based).
using NominalPolicy = std::function<Vec(const Vec& x, int target)>;

struct StabFilterConfig {
  std::vector<QuadraticCLF> clfs;
  int r = 1;          // at least r of the p certified sets
  int j_dagger = 0;   // active target, 0-based
  ScalarMap alpha_clf;
  ScalarMap alpha_cbf;
  ScalarMap rho;
  double c_omega = 0.1;
  NominalPolicy nominal;

  int p() const { return static_cast<int>(clfs.size()); }
  // Throws std::invalid_argument when r or j_dagger is out of range or a map is missing.
  void validate() const;
};

struct FilterOutput {
  Vec control;
  double omega = 0.0;
  QPStatus status = QPStatus::optimal;
  Vec nominal;
  Vec slacks;                 // b - A z per assembled row
  Vec barrier_values;         // h_j(x)
  double pivot_value = 0.0;   // r-th largest h_j
  int membership = 0;
  double relu_coefficient = 0.0;  // ReLU(-h_{j_dagger}), the omega entry of the CLF row
  Vec omega_column;           // omega coefficients of all assembled rows
  std::optional<MarginReport> margin;
  QPResult qp;
};

// Assembled combinatorial stabilization QP in the decision (u, omega). Row 0 is the relaxed
// CLF row, rows 1..p the combinatorial barrier rows.
DenseQP assemble_stab_qp(const ControlAffineSystem& sys, const StabFilterConfig& cfg, const Vec& x);

// Plain CLF-QP: min 1/2|u - u_nom|^2 s.t. LfV + LgV u <= -alpha(V(x)).
FilterOutput clf_qp_control(const ControlAffineSystem& sys, const QuadraticCLF& clf,
                            const ScalarMap& alpha, const Vec& u_nom, const Vec& x);

// Combinatorial CBF-QP over the barriers of cfg.clfs (no CLF row).
FilterOutput combo_cbf_filter(const ControlAffineSystem& sys, const StabFilterConfig& cfg,
                              const Vec& x);

// Combinatorial stabilization filter. With with_margin the strict-feasibility margin of the
// assembled rows is attached to every output; it is always attached on infeasibility.
FilterOutput combo_stab_filter(const ControlAffineSystem& sys, const StabFilterConfig& cfg,
                               const Vec& x, bool with_margin = false);

StabFilterConfig switch_target(const StabFilterConfig& cfg, int j_new);
// Throws SwitchError("target not currently in its certified region") if h_{j_new}(x) < 0.
StabFilterConfig switch_target_checked(const StabFilterConfig& cfg, int j_new, const Vec& x);

}  // namespace contingency
