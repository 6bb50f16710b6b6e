#include "contingency/hj_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "contingency/error.hpp"

namespace contingency {

namespace {

constexpr int kMaxDims = 8;

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const int t = std::max(1, threads > 0 ? threads : default_thread_count());
  if (t == 1 || n < 4096) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (int i = 0; i < t; ++i) {
    const std::size_t b = i * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

int default_thread_count() {
  if (const char* env = std::getenv("CONTINGENCY_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Grid::Grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::uint32_t> nodes,
           std::vector<bool> periodic)
    : lo_(std::move(lo)), hi_(std::move(hi)), nodes_(std::move(nodes)), periodic_(std::move(periodic)) {
  const std::size_t n = lo_.size();
  if (n == 0 || n > kMaxDims || hi_.size() != n || nodes_.size() != n || periodic_.size() != n)
    throw std::invalid_argument("grid needs 1..8 dims with consistent bounds, nodes and flags");
  spacing_.resize(n);
  stride_.assign(n, 1);
  for (std::size_t d = 0; d < n; ++d) {
    if (periodic_[d]) {
      if (std::abs(lo_[d] + std::numbers::pi) > 1e-9 || std::abs(hi_[d] - std::numbers::pi) > 1e-9)
        throw std::invalid_argument("periodic grid dims must cover [-pi, pi)");
      lo_[d] = -std::numbers::pi;
      hi_[d] = std::numbers::pi;
      if (nodes_[d] < 3) throw std::invalid_argument("periodic dims need at least 3 nodes");
      spacing_[d] = (hi_[d] - lo_[d]) / nodes_[d];
    } else {
      if (nodes_[d] < 2) throw std::invalid_argument("grid dims need at least 2 nodes");
      spacing_[d] = (hi_[d] - lo_[d]) / (nodes_[d] - 1);
    }
    if (!(spacing_[d] > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  }
  for (int d = static_cast<int>(n) - 2; d >= 0; --d) stride_[d] = stride_[d + 1] * nodes_[d + 1];
  size_ = stride_[0] * nodes_[0];
}

void Grid::node_coordinates(std::size_t flat, std::span<double> out) const {
  for (int d = 0; d < dims(); ++d) {
    const auto i = static_cast<std::uint32_t>((flat / stride_[d]) % nodes_[d]);
    out[d] = coordinate(d, i);
  }
}

bool Grid::contains(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dims()) return false;
  for (int d = 0; d < dims(); ++d) {
    if (periodic_[d]) continue;
    if (!(x[d] >= lo_[d] - 1e-9 && x[d] <= hi_[d] + 1e-9)) return false;
  }
  return true;
}

std::uint64_t Grid::hash() const {
  std::uint64_t h = fnv1a(lo_.data(), lo_.size() * sizeof(double));
  h = fnv1a(hi_.data(), hi_.size() * sizeof(double), h);
  h = fnv1a(nodes_.data(), nodes_.size() * sizeof(std::uint32_t), h);
  for (bool p : periodic_) {
    const unsigned char b = p ? 1 : 0;
    h = fnv1a(&b, 1, h);
  }
  return h;
}

bool Grid::operator==(const Grid& other) const {
  return lo_ == other.lo_ && hi_ == other.hi_ && nodes_ == other.nodes_ && periodic_ == other.periodic_;
}

double soft_min(double a, double b, double sharpness) {
  const double lo = std::min(a, b);
  return lo - std::log1p(std::exp(-sharpness * std::abs(a - b))) / sharpness;
}

TargetSpec make_runway_target(double x, double y, double heading, double radius,
                              double heading_tolerance, double sharpness) {
  TargetSpec t;
  t.level = [=](std::span<const double> s) {
    const double planar = radius - std::hypot(s[0] - x, s[1] - y);
    const double angular = heading_tolerance - std::abs(wrap_angle(s[2] - heading));
    return soft_min(planar, angular, sharpness);
  };
  t.description = "runway(" + std::to_string(x) + "," + std::to_string(y) + "," +
                  std::to_string(heading) + ")";
  return t;
}

TargetSpec make_ball_target(const Vec& center, double radius) {
  TargetSpec t;
  t.level = [center, radius](std::span<const double> s) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < center.size(); ++i) sq += (s[i] - center(i)) * (s[i] - center(i));
    return radius - std::sqrt(sq);
  };
  t.description = "ball(r=" + std::to_string(radius) + ")";
  return t;
}

ObstacleSpec make_disk_obstacles(std::vector<CircleObstacle> disks) {
  ObstacleSpec o;
  o.disks = disks;
  o.level = [disks](std::span<const double> s) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& d : disks) v = std::min(v, d.clearance(s[0], s[1]));
    return v;
  };
  o.description = std::to_string(disks.size()) + " disks";
  return o;
}

ObstacleSpec make_free_space(double value) {
  ObstacleSpec o;
  o.level = [value](std::span<const double>) { return value; };
  o.description = "free";
  return o;
}

ObstacleSpec confine_to_grid(ObstacleSpec obstacle, const Grid& grid) {
  std::vector<int> dims;
  std::vector<double> lo, hi;
  for (int d = 0; d < grid.dims(); ++d) {
    if (grid.periodic(d)) continue;
    dims.push_back(d);
    lo.push_back(grid.lo(d));
    hi.push_back(grid.hi(d));
  }
  obstacle.level = [inner = std::move(obstacle.level), dims, lo, hi](std::span<const double> s) {
    double v = inner(s);
    for (std::size_t k = 0; k < dims.size(); ++k) v = std::min({v, s[dims[k]] - lo[k], hi[k] - s[dims[k]]});
    return v;
  };
  obstacle.description += " in grid box";
  return obstacle;
}

double hamiltonian(const ControlAffineSystem& sys, const Vec& x, const Vec& p) {
  if (!sys.control_bounded()) throw std::invalid_argument("Hamiltonian requires a compact control set");
  const Vec f = sys.drift(x);
  const Mat g = sys.input_map(x);
  double h = p.dot(f);
  for (int j = 0; j < sys.input_dim; ++j) {
    const double pg = p.dot(g.col(j));
    h += std::max(pg * sys.control_lo(j), pg * sys.control_hi(j));
  }
  return h;
}

GridDynamics::GridDynamics(const Grid& grid, const ControlAffineSystem& sys)
    : n_(sys.state_dim), m_(sys.input_dim), id_(sys.id) {
  if (n_ != grid.dims()) throw std::invalid_argument("grid and dynamics dimensions differ");
  if (!sys.control_bounded()) throw std::invalid_argument("HJ dynamics require a compact control set");
  for (int d = 0; d < n_; ++d) {
    if (grid.periodic(d) != sys.is_periodic(d))
      throw std::invalid_argument("grid periodic flags must match the system's angle dims");
  }
  u_lo_.assign(sys.control_lo.data(), sys.control_lo.data() + m_);
  u_hi_.assign(sys.control_hi.data(), sys.control_hi.data() + m_);
  f_.resize(grid.size() * n_);
  g_.resize(grid.size() * n_ * m_);
  sigma_.assign(n_, 0.0);
  Vec x(n_);
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    grid.node_coordinates(flat, std::span<double>(x.data(), n_));
    const Vec f = sys.drift(x);
    const Mat g = sys.input_map(x);
    for (int i = 0; i < n_; ++i) {
      f_[flat * n_ + i] = f(i);
      double bound = std::abs(f(i));
      for (int j = 0; j < m_; ++j) {
        g_[(flat * n_ + i) * m_ + j] = g(i, j);
        bound += std::abs(g(i, j)) * std::max(std::abs(u_lo_[j]), std::abs(u_hi_[j]));
      }
      sigma_[i] = std::max(sigma_[i], bound);
    }
  }
}

double cfl_dt(const Grid& grid, const GridDynamics& dyn) {
  double rate = 0.0;
  for (int d = 0; d < grid.dims(); ++d) rate += dyn.sigma()[d] / grid.spacing(d);
  return rate > 0.0 ? 0.8 / rate : std::numeric_limits<double>::infinity();
}

double cfl_dt(const Grid& grid, const ControlAffineSystem& sys) {
  return cfl_dt(grid, GridDynamics(grid, sys));
}

std::vector<double> lax_friedrichs_step(const Grid& grid, const GridDynamics& dyn,
                                        std::span<const double> slice,
                                        std::span<const double> obstacle_values, double dtau,
                                        int threads) {
  if (slice.size() != grid.size() || obstacle_values.size() != grid.size())
    throw std::invalid_argument("slice and obstacle values must match the grid");
  if (!(dtau > 0.0)) throw std::invalid_argument("dtau must be positive");
  const double limit = cfl_dt(grid, dyn);
  if (dtau > limit * (1.0 + 1e-12))
    throw std::invalid_argument("dtau " + std::to_string(dtau) + " violates CFL bound " +
                                std::to_string(limit));

  const int n = grid.dims(), m = dyn.input_dim();
  std::array<double, kMaxDims> inv_h{}, sigma{};
  std::array<std::size_t, kMaxDims> stride{};
  std::array<std::uint32_t, kMaxDims> count{};
  std::array<bool, kMaxDims> periodic{};
  for (int d = 0; d < n; ++d) {
    inv_h[d] = 1.0 / grid.spacing(d);
    sigma[d] = dyn.sigma()[d];
    stride[d] = grid.stride(d);
    count[d] = grid.nodes(d);
    periodic[d] = grid.periodic(d);
  }
  std::vector<double> next(grid.size());
  const double* V = slice.data();

  parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::array<std::uint32_t, kMaxDims> idx{};
    for (int d = 0; d < n; ++d) idx[d] = static_cast<std::uint32_t>((begin / stride[d]) % count[d]);
    std::array<double, kMaxDims> p{};
    for (std::size_t flat = begin; flat < end; ++flat) {
      const double v = V[flat];
      double dissipation = 0.0;
      for (int d = 0; d < n; ++d) {
        const std::uint32_t i = idx[d];
        const std::size_t s = stride[d];
        double dp, dm;
        if (periodic[d]) {
          const std::size_t ip = (i + 1 == count[d]) ? flat - static_cast<std::size_t>(i) * s : flat + s;
          const std::size_t im = (i == 0) ? flat + static_cast<std::size_t>(count[d] - 1) * s : flat - s;
          dp = (V[ip] - v) * inv_h[d];
          dm = (v - V[im]) * inv_h[d];
        } else if (i == 0) {
          dp = dm = (V[flat + s] - v) * inv_h[d];
        } else if (i + 1 == count[d]) {
          dp = dm = (v - V[flat - s]) * inv_h[d];
        } else {
          dp = (V[flat + s] - v) * inv_h[d];
          dm = (v - V[flat - s]) * inv_h[d];
        }
        p[d] = 0.5 * (dp + dm);
        dissipation += sigma[d] * 0.5 * (dp - dm);
      }
      const double* f = dyn.drift(flat);
      const double* g = dyn.input(flat);
      double h = 0.0;
      for (int d = 0; d < n; ++d) h += p[d] * f[d];
      for (int j = 0; j < m; ++j) {
        double pg = 0.0;
        for (int d = 0; d < n; ++d) pg += p[d] * g[d * m + j];
        h += std::max(pg * dyn.u_lo(j), pg * dyn.u_hi(j));
      }
      const double candidate = std::max(v + dtau * (h + dissipation), v);
      next[flat] = std::min(candidate, obstacle_values[flat]);

      for (int d = n - 1; d >= 0; --d) {
        if (++idx[d] < count[d]) break;
        idx[d] = 0;
      }
    }
  });
  return next;
}

ValueFunctionTable::ValueFunctionTable(Grid grid, std::vector<double> horizons, std::vector<double> data)
    : grid_(std::move(grid)), horizons_(std::move(horizons)), data_(std::move(data)) {
  if (horizons_.empty() || horizons_.front() != 0.0)
    throw std::invalid_argument("value table horizons must start at 0");
  for (std::size_t k = 1; k < horizons_.size(); ++k) {
    if (!(horizons_[k] < horizons_[k - 1])) throw std::invalid_argument("horizons must decrease");
  }
  if (data_.size() != horizons_.size() * grid_.size())
    throw std::invalid_argument("value table data size mismatch");
}

std::span<const double> ValueFunctionTable::slice(std::size_t k) const {
  return std::span<const double>(data_).subspan(k * grid_.size(), grid_.size());
}

std::pair<std::size_t, double> ValueFunctionTable::bracket(double tau) const {
  const double T = horizon_length();
  if (!(tau <= 1e-9 && tau >= -T - 1e-9))
    throw DomainError("horizon " + std::to_string(tau) + " outside [-" + std::to_string(T) + ", 0]");
  if (horizons_.size() == 1) return {0, 0.0};
  tau = std::clamp(tau, -T, 0.0);
  // horizons_ descend; find k with horizons_[k+1] <= tau <= horizons_[k]
  auto it = std::upper_bound(horizons_.begin(), horizons_.end(), tau, std::greater<>());
  std::size_t k1 = static_cast<std::size_t>(it - horizons_.begin());  // first with h < tau
  k1 = std::clamp<std::size_t>(k1, 1, horizons_.size() - 1);
  const std::size_t k0 = k1 - 1;
  const double w = (horizons_[k0] - tau) / (horizons_[k0] - horizons_[k1]);
  return {k0, w};
}

namespace {

struct CellLocation {
  std::array<std::size_t, kMaxDims> lo_idx{}, hi_idx{};
  std::array<double, kMaxDims> frac{};
};

CellLocation locate(const Grid& grid, std::span<const double> x) {
  if (static_cast<int>(x.size()) != grid.dims()) throw DomainError("query dimension mismatch");
  CellLocation c;
  for (int d = 0; d < grid.dims(); ++d) {
    const std::uint32_t N = grid.nodes(d);
    if (grid.periodic(d)) {
      const double u = (wrap_angle(x[d]) - grid.lo(d)) / grid.spacing(d);
      double fl = std::floor(u);
      auto i0 = static_cast<std::int64_t>(fl) % N;
      if (i0 < 0) i0 += N;
      c.lo_idx[d] = static_cast<std::size_t>(i0);
      c.hi_idx[d] = static_cast<std::size_t>((i0 + 1) % N);
      c.frac[d] = u - fl;
    } else {
      if (!(x[d] >= grid.lo(d) - 1e-9 && x[d] <= grid.hi(d) + 1e-9))
        throw DomainError("state outside value-table bounds in dim " + std::to_string(d));
      const double u = std::clamp((x[d] - grid.lo(d)) / grid.spacing(d), 0.0, double(N - 1));
      const auto i0 = std::min<std::size_t>(static_cast<std::size_t>(std::floor(u)), N - 2);
      c.lo_idx[d] = i0;
      c.hi_idx[d] = i0 + 1;
      c.frac[d] = u - static_cast<double>(i0);
    }
  }
  return c;
}

}  // namespace

double ValueFunctionTable::spatial_value(std::size_t k, std::span<const double> x) const {
  const CellLocation c = locate(grid_, x);
  const int n = grid_.dims();
  const double* base = data_.data() + k * grid_.size();
  double acc = 0.0;
  for (unsigned corner = 0; corner < (1u << n); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int d = 0; d < n; ++d) {
      const bool up = (corner >> d) & 1u;
      w *= up ? c.frac[d] : 1.0 - c.frac[d];
      flat += (up ? c.hi_idx[d] : c.lo_idx[d]) * grid_.stride(d);
    }
    if (w != 0.0) acc += w * base[flat];
  }
  return acc;
}

double ValueFunctionTable::value(std::span<const double> x, double tau) const {
  const auto [k0, w] = bracket(tau);
  const double v0 = spatial_value(k0, x);
  if (w == 0.0) return v0;
  return (1.0 - w) * v0 + w * spatial_value(k0 + 1, x);
}

Vec ValueFunctionTable::gradient(std::span<const double> x, double tau) const {
  const int n = grid_.dims();
  Vec grad(n);
  std::array<double, kMaxDims> plus{}, minus{};
  for (int d = 0; d < n; ++d) {
    std::copy(x.begin(), x.end(), plus.begin());
    std::copy(x.begin(), x.end(), minus.begin());
    const double h = grid_.spacing(d);
    plus[d] += h;
    minus[d] -= h;
    if (!grid_.periodic(d)) {
      plus[d] = std::min(plus[d], grid_.hi(d));
      minus[d] = std::max(minus[d], grid_.lo(d));
    }
    const double span = plus[d] - minus[d];
    grad(d) = (value(std::span<const double>(plus.data(), n), tau) -
               value(std::span<const double>(minus.data(), n), tau)) / span;
  }
  return grad;
}

double ValueFunctionTable::tau_derivative(std::span<const double> x, double tau) const {
  if (horizons_.size() == 1) {
    bracket(tau);
    return 0.0;
  }
  const auto [k0, w] = bracket(tau);
  (void)w;
  return (spatial_value(k0, x) - spatial_value(k0 + 1, x)) / (horizons_[k0] - horizons_[k0 + 1]);
}

double ValueFunctionTable::cell_variation(std::span<const double> x, double tau) const {
  const auto [k0, w] = bracket(tau);
  const CellLocation c = locate(grid_, x);
  const int n = grid_.dims();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  const std::size_t last = (w > 0.0 && k0 + 1 < horizons_.size()) ? k0 + 1 : k0;
  for (std::size_t k = k0; k <= last; ++k) {
    const double* base = data_.data() + k * grid_.size();
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
      std::size_t flat = 0;
      for (int d = 0; d < n; ++d)
        flat += (((corner >> d) & 1u) ? c.hi_idx[d] : c.lo_idx[d]) * grid_.stride(d);
      lo = std::min(lo, base[flat]);
      hi = std::max(hi, base[flat]);
    }
  }
  return hi - lo;
}

std::uint64_t obstacle_hash(const Grid& grid, const ObstacleSpec& obstacle) {
  std::vector<double> s(grid.size()), x(grid.dims());
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    grid.node_coordinates(flat, x);
    s[flat] = obstacle.level(x);
  }
  return fnv1a(s.data(), s.size() * sizeof(double));
}

ValueFunctionTable solve_bra(const ControlAffineSystem& sys, const TargetSpec& target,
                             const ObstacleSpec& obstacle, double horizon, const Grid& grid,
                             const SolveOptions& options) {
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  const GridDynamics dyn(grid, sys);
  const std::size_t N = grid.size();
  const int n = grid.dims();

  std::vector<double> s(N), terminal(N), x(n);
  for (std::size_t flat = 0; flat < N; ++flat) {
    grid.node_coordinates(flat, x);
    s[flat] = obstacle.level(x);
    terminal[flat] = std::min(target.level(x), s[flat]);
  }

  const double dt_max = cfl_dt(grid, dyn) * options.dtau_fraction;
  std::size_t stored = 0, substeps = 1;
  if (horizon > 0.0) {
    if (options.slice_interval > 0.0) {
      stored = static_cast<std::size_t>(std::ceil(horizon / options.slice_interval - 1e-9));
      const double out_step = horizon / stored;
      substeps = std::isfinite(dt_max)
                     ? static_cast<std::size_t>(std::ceil(out_step / dt_max - 1e-9)) : 1;
    } else {
      stored = std::isfinite(dt_max) ? static_cast<std::size_t>(std::ceil(horizon / dt_max - 1e-9)) : 1;
    }
    stored = std::max<std::size_t>(stored, 1);
    substeps = std::max<std::size_t>(substeps, 1);
  }
  const double out_step = stored > 0 ? horizon / stored : 0.0;
  const double dt = stored > 0 ? out_step / substeps : 0.0;

  std::vector<double> horizons(stored + 1), data;
  data.reserve((stored + 1) * N);
  data.insert(data.end(), terminal.begin(), terminal.end());
  horizons[0] = 0.0;
  std::vector<double> current = std::move(terminal);
  for (std::size_t k = 1; k <= stored; ++k) {
    for (std::size_t sub = 0; sub < substeps; ++sub)
      current = lax_friedrichs_step(grid, dyn, current, s, dt, options.threads);
    horizons[k] = -static_cast<double>(k) * out_step;
    data.insert(data.end(), current.begin(), current.end());
  }
  if (stored > 0) horizons[stored] = -horizon;

  ValueFunctionTable table(grid, std::move(horizons), std::move(data));
  table.integration_dtau = dt;
  table.metadata.target_id = target.description;
  table.metadata.obstacle_hash = fnv1a(s.data(), s.size() * sizeof(double));
  table.metadata.dynamics_id = sys.id;
  return table;
}

}  // namespace contingency
