#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contingency/dynamics.hpp"

namespace contingency {

// min 1/2 z^T H z + f^T z  s.t.  A z <= b,  lower <= z <= upper (infinite bounds = absent).
struct DenseQP {
  Mat hessian;
  Vec linear;
  Mat ineq_matrix;  // k x d, k may be 0
  Vec ineq_rhs;
  Vec lower;        // empty = all -inf
  Vec upper;        // empty = all +inf

  int dim() const { return static_cast<int>(linear.size()); }
  int rows() const { return static_cast<int>(ineq_rhs.size()); }
  // Throws std::invalid_argument on inconsistent shapes or non-finite data.
  void validate() const;
};

enum class QPStatus { optimal, infeasible, max_iter };
std::string to_string(QPStatus s);

// Rows are addressed in an expanded numbering: [0, k) inequality rows, k + i the lower bound
// on z_i, k + d + i the upper bound on z_i.
struct QPResult {
  QPStatus status = QPStatus::max_iter;
  Vec solution;
  double objective = 0.0;
  std::vector<int> active_set;   // expanded row indices, ascending
  Vec multipliers;               // per expanded row (k + 2d), zero when inactive
  double kkt_residual = 0.0;     // scaled, see kkt_residual()
  std::optional<Vec> farkas;     // y >= 0 over expanded rows with y^T A = 0, y^T b < 0
  int iterations = 0;
};

// Max of the scaled stationarity, primal infeasibility, dual infeasibility and
// complementarity residuals at (z, lambda).
double kkt_residual(const DenseQP& qp, const Vec& z, const Vec& multipliers);

// Dense dual active-set (Goldfarb-Idnani) solver for small strictly convex QPs. Holds scratch
// storage, so use one instance per thread.
class QPSolver {
 public:
  // warm_active lists expanded row indices preferred as entering constraints.
  QPResult solve(const DenseQP& qp, std::span<const int> warm_active = {});

  static int iteration_cap(int dim, int rows) { return std::max(200, 10 * (dim + rows)); }

 private:
  struct Row {
    Vec a;
    double b;
    int expanded;  // index in the expanded numbering
  };
  std::vector<Row> rows_;
};

struct MarginReport {
  double margin = 0.0;  // +inf when unbounded, -inf for a zero row with negative rhs
  Vec witness;
};

// Largest common slack delta with A_n z <= b_n - delta (rows normalized) and the variable
// bounds held hard. margin > 0 certifies strict feasibility.
MarginReport strict_feasibility_margin(const Mat& A, const Vec& b, const Vec& lower = {},
                                       const Vec& upper = {});

}  // namespace contingency
