#include "contingency/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace contingency {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ExpandedRow {
  Vec a;
  double b;
  int index;
};

std::vector<ExpandedRow> expand_rows(const DenseQP& qp) {
  const int d = qp.dim(), k = qp.rows();
  std::vector<ExpandedRow> out;
  out.reserve(k + 2 * d);
  for (int i = 0; i < k; ++i) out.push_back({qp.ineq_matrix.row(i).transpose(), qp.ineq_rhs(i), i});
  for (int i = 0; i < d; ++i) {
    if (qp.lower.size() == d && std::isfinite(qp.lower(i)))
      out.push_back({-Vec::Unit(d, i), -qp.lower(i), k + i});
  }
  for (int i = 0; i < d; ++i) {
    if (qp.upper.size() == d && std::isfinite(qp.upper(i)))
      out.push_back({Vec::Unit(d, i), qp.upper(i), k + d + i});
  }
  return out;
}

double feasibility_tol(const Vec& a, double b, const Vec& z) {
  return 1e-10 * (1.0 + std::abs(b) + a.lpNorm<Eigen::Infinity>() * z.lpNorm<Eigen::Infinity>());
}

}  // namespace

std::string to_string(QPStatus s) {
  switch (s) {
    case QPStatus::optimal: return "optimal";
    case QPStatus::infeasible: return "infeasible";
    case QPStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

void DenseQP::validate() const {
  const int d = dim();
  if (d <= 0) throw std::invalid_argument("QP needs at least one variable");
  if (hessian.rows() != d || hessian.cols() != d) throw std::invalid_argument("H must be d x d");
  if (ineq_matrix.rows() != rows() || (rows() > 0 && ineq_matrix.cols() != d))
    throw std::invalid_argument("A must be k x d matching b");
  if ((lower.size() != 0 && lower.size() != d) || (upper.size() != 0 && upper.size() != d))
    throw std::invalid_argument("bounds must be empty or length d");
  if (!hessian.allFinite() || !linear.allFinite() || !ineq_matrix.allFinite() || !ineq_rhs.allFinite())
    throw std::invalid_argument("QP data must be finite");
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + hessian.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("H must be symmetric");
}

double kkt_residual(const DenseQP& qp, const Vec& z, const Vec& multipliers) {
  const auto rows = expand_rows(qp);
  const Vec Hz = qp.hessian * z;
  Vec grad = Hz + qp.linear;
  double scale = 1.0 + Hz.lpNorm<Eigen::Infinity>() + qp.linear.lpNorm<Eigen::Infinity>();
  double primal = 0.0, dual = 0.0, comp = 0.0;
  for (const auto& row : rows) {
    const double lam = multipliers.size() > row.index ? multipliers(row.index) : 0.0;
    grad += lam * row.a;
    scale = std::max(scale, 1.0 + std::abs(lam) * row.a.lpNorm<Eigen::Infinity>());
    const double slack = row.a.dot(z) - row.b;
    const double s = 1.0 + std::abs(row.b) + row.a.lpNorm<Eigen::Infinity>() * z.lpNorm<Eigen::Infinity>();
    primal = std::max(primal, slack / s);
    dual = std::max(dual, -lam);
    comp = std::max(comp, std::abs(lam * slack) / (1.0 + std::abs(lam) * s));
  }
  const double stationarity = grad.lpNorm<Eigen::Infinity>() / scale;
  return std::max({stationarity, primal, dual, comp});
}

QPResult QPSolver::solve(const DenseQP& qp, std::span<const int> warm_active) {
  qp.validate();
  const int d = qp.dim(), k = qp.rows();
  QPResult res;
  res.multipliers = Vec::Zero(k + 2 * d);

  // Drop zero rows, deduplicate identical rows (first occurrence wins).
  rows_.clear();
  for (auto& row : expand_rows(qp)) {
    if (row.a.lpNorm<Eigen::Infinity>() <= 1e-14) {
      if (row.b < -1e-12) {
        res.status = QPStatus::infeasible;
        res.solution = Vec::Zero(d);
        Vec y = Vec::Zero(k + 2 * d);
        y(row.index) = 1.0;
        res.farkas = y;
        return res;
      }
      continue;
    }
    const bool dup = std::any_of(rows_.begin(), rows_.end(), [&](const Row& kept) {
      return (kept.a - row.a).lpNorm<Eigen::Infinity>() <= 1e-12 && std::abs(kept.b - row.b) <= 1e-12;
    });
    if (!dup) rows_.push_back({std::move(row.a), row.b, row.index});
  }

  Mat H = 0.5 * (qp.hessian + qp.hessian.transpose());
  const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(H, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (lmin < 1e-12) H.diagonal().array() += (1e-12 - lmin);
  const Eigen::LLT<Mat> llt(H);
  const Mat Hinv = llt.solve(Mat::Identity(d, d));

  auto is_warm = [&](int expanded) {
    return std::find(warm_active.begin(), warm_active.end(), expanded) != warm_active.end();
  };

  Vec z = -Hinv * qp.linear;
  std::vector<int> active;        // positions in rows_
  std::vector<double> mult;       // multipliers aligned with active
  std::vector<char> in_active(rows_.size(), 0);
  const int cap = iteration_cap(d, k);
  int iter = 0;

  auto finish = [&](QPStatus status) {
    res.status = status;
    res.solution = z;
    res.iterations = iter;
    res.objective = 0.5 * z.dot(qp.hessian * z) + qp.linear.dot(z);
    for (std::size_t i = 0; i < active.size(); ++i) {
      res.multipliers(rows_[active[i]].expanded) = mult[i];
      res.active_set.push_back(rows_[active[i]].expanded);
    }
    std::sort(res.active_set.begin(), res.active_set.end());
    res.kkt_residual = kkt_residual(qp, z, res.multipliers);
    return res;
  };

  while (true) {
    if (++iter > cap) return finish(QPStatus::max_iter);

    int p = -1;
    double worst = 0.0;
    bool p_warm = false;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (in_active[i]) continue;
      const double viol = rows_[i].a.dot(z) - rows_[i].b;
      if (viol <= feasibility_tol(rows_[i].a, rows_[i].b, z)) continue;
      const bool w = is_warm(rows_[i].expanded);
      if (p < 0 || (w && !p_warm) || (w == p_warm && viol > worst)) {
        p = static_cast<int>(i);
        worst = viol;
        p_warm = w;
      }
    }
    if (p < 0) return finish(QPStatus::optimal);

    const Vec& ap = rows_[p].a;
    double up = 0.0;
    while (true) {
      if (++iter > cap) return finish(QPStatus::max_iter);
      const int q = static_cast<int>(active.size());
      Vec r(q);
      Vec w;
      if (q > 0) {
        Mat Na(d, q);
        for (int j = 0; j < q; ++j) Na.col(j) = rows_[active[j]].a;
        const Mat HinvN = Hinv * Na;
        const Mat M = Na.transpose() * HinvN;
        r = M.ldlt().solve(HinvN.transpose() * ap);
        w = Hinv * (ap - Na * r);
      } else {
        w = Hinv * ap;
      }
      const double zn = w.dot(ap);
      const double ref = ap.dot(Hinv * ap);

      double t1 = kInf;
      int drop = -1;
      for (int j = 0; j < q; ++j) {
        if (r(j) > 1e-13) {
          const double ratio = mult[j] / r(j);
          if (ratio < t1 || (ratio == t1 && drop >= 0 && rows_[active[j]].expanded < rows_[active[drop]].expanded)) {
            t1 = ratio;
            drop = j;
          }
        }
      }
      const double viol = ap.dot(z) - rows_[p].b;
      const double t2 = zn > 1e-14 * ref ? viol / zn : kInf;
      const double t = std::min(t1, t2);

      if (!std::isfinite(t)) {
        Vec y = Vec::Zero(k + 2 * d);
        y(rows_[p].expanded) += 1.0;
        for (int j = 0; j < q; ++j) y(rows_[active[j]].expanded) += std::max(0.0, -r(j));
        res.farkas = y;
        return finish(QPStatus::infeasible);
      }

      if (std::isfinite(t2)) z -= t * w;
      for (int j = 0; j < q; ++j) mult[j] -= t * r(j);
      up += t;

      if (t2 <= t1) {
        active.push_back(p);
        mult.push_back(up);
        in_active[p] = 1;
        break;
      }
      in_active[active[drop]] = 0;
      active.erase(active.begin() + drop);
      mult.erase(mult.begin() + drop);
    }
  }
}

MarginReport strict_feasibility_margin(const Mat& A, const Vec& b, const Vec& lower,
                                       const Vec& upper) {
  constexpr double eps = 1e-9;
  constexpr double unbounded = 1e6;
  const auto d = A.cols();
  MarginReport rep;
  rep.witness = Vec::Zero(d);

  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double nrm = A.row(i).norm();
    if (nrm <= 1e-14) {
      if (b(i) < 0.0) {
        rep.margin = -kInf;
        return rep;
      }
      continue;
    }
    rows.push_back(A.row(i).transpose() / nrm);
    rhs.push_back(b(i) / nrm);
  }
  if (rows.empty()) {
    rep.margin = kInf;
    return rep;
  }

  DenseQP qp;
  qp.hessian = eps * Mat::Identity(d + 1, d + 1);
  qp.linear = Vec::Zero(d + 1);
  qp.linear(d) = -1.0;
  qp.ineq_matrix.resize(static_cast<Eigen::Index>(rows.size()), d + 1);
  qp.ineq_rhs.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    qp.ineq_matrix.row(i).head(d) = rows[i].transpose();
    qp.ineq_matrix(i, d) = 1.0;
    qp.ineq_rhs(i) = rhs[i];
  }
  qp.lower = Vec::Constant(d + 1, -kInf);
  qp.upper = Vec::Constant(d + 1, kInf);
  if (lower.size() == d) qp.lower.head(d) = lower;
  if (upper.size() == d) qp.upper.head(d) = upper;

  QPSolver solver;
  const QPResult res = solver.solve(qp);
  if (res.status == QPStatus::infeasible) {
    rep.margin = -kInf;
    return rep;
  }
  rep.witness = res.solution.head(d);
  const double delta = res.solution(d);
  rep.margin = delta > unbounded ? kInf : delta;
  return rep;
}

}  // namespace contingency
