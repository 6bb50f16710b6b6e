#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "contingency/certificates.hpp"
#include "contingency/dynamics.hpp"

namespace contingency {

// Regular node grid, row-major with the last dimension fastest. Non-periodic dims carry
// `nodes` points including both bounds; periodic dims cover [-pi, pi) without the duplicated
// endpoint.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::uint32_t> nodes,
       std::vector<bool> periodic);

  int dims() const { return static_cast<int>(lo_.size()); }
  std::size_t size() const { return size_; }
  double lo(int d) const { return lo_[d]; }
  double hi(int d) const { return hi_[d]; }
  std::uint32_t nodes(int d) const { return nodes_[d]; }
  bool periodic(int d) const { return periodic_[d]; }
  double spacing(int d) const { return spacing_[d]; }
  std::size_t stride(int d) const { return stride_[d]; }
  double coordinate(int d, std::uint32_t i) const { return lo_[d] + i * spacing_[d]; }
  void node_coordinates(std::size_t flat, std::span<double> out) const;
  // True when x lies inside the bounds of every non-periodic dim (1e-9 slack).
  bool contains(std::span<const double> x) const;
  std::uint64_t hash() const;

  bool operator==(const Grid& other) const;

 private:
  std::vector<double> lo_, hi_, spacing_;
  std::vector<std::uint32_t> nodes_;
  std::vector<bool> periodic_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
};

using LevelMap = std::function<double(std::span<const double>)>;

// Target set {l >= 0}.
struct TargetSpec {
  LevelMap level;
  std::string description;
};

// Obstacle set {s < 0}.
struct ObstacleSpec {
  LevelMap level;
  std::vector<CircleObstacle> disks;  // continuous geometry used for penetration checks
  std::string description;
};

// -(1/k) log(exp(-k a) + exp(-k b)), evaluated stably.
double soft_min(double a, double b, double sharpness);

// Runway target on an (x, y, theta) state: soft-min of the planar radius margin and the heading
// margin.
TargetSpec make_runway_target(double x, double y, double heading, double radius,
                              double heading_tolerance, double sharpness = 20.0);
// l(x) = radius - |x - center| over the leading center.size() coordinates.
TargetSpec make_ball_target(const Vec& center, double radius);
// s = min_q (|(x, y) - p_q| - R_q).
ObstacleSpec make_disk_obstacles(std::vector<CircleObstacle> disks);
// s = constant (no obstacle).
ObstacleSpec make_free_space(double value = 10.0);
// s <- min(s, distance to the non-periodic bounds of grid): leaving the grid counts as a
// collision. Without it the one-sided boundary stencil lets outflow nodes grow up to s.
ObstacleSpec confine_to_grid(ObstacleSpec obstacle, const Grid& grid);

// H(p, x) = p^T f(x) + sum_i max(p^T g_i u_lo_i, p^T g_i u_hi_i). Throws std::invalid_argument
// when U is unbounded.
double hamiltonian(const ControlAffineSystem& sys, const Vec& x, const Vec& p);

// f and g sampled at every node plus the per-dimension dissipation bounds
// sigma_i = max_x (|f_i| + sum_j |g_ij| max(|u_lo_j|, |u_hi_j|)).
class GridDynamics {
 public:
  GridDynamics(const Grid& grid, const ControlAffineSystem& sys);

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const std::vector<double>& sigma() const { return sigma_; }
  const double* drift(std::size_t flat) const { return &f_[flat * n_]; }
  const double* input(std::size_t flat) const { return &g_[flat * n_ * m_]; }  // row-major n x m
  double u_lo(int j) const { return u_lo_[j]; }
  double u_hi(int j) const { return u_hi_[j]; }
  const std::string& id() const { return id_; }

 private:
  int n_ = 0, m_ = 0;
  std::vector<double> f_, g_, sigma_, u_lo_, u_hi_;
  std::string id_;
};

// 0.8 / sum_i (sigma_i / dx_i); +inf when every sigma_i is zero.
double cfl_dt(const Grid& grid, const GridDynamics& dyn);
double cfl_dt(const Grid& grid, const ControlAffineSystem& sys);

// One explicit Lax-Friedrichs step forward in horizon followed by the freeze
// max(candidate, slice) and the obstacle clamp min(., s). Throws std::invalid_argument when
// dtau exceeds the CFL bound.
std::vector<double> lax_friedrichs_step(const Grid& grid, const GridDynamics& dyn,
                                        std::span<const double> slice,
                                        std::span<const double> obstacle_values, double dtau,
                                        int threads = 0);

struct TableMetadata {
  std::string target_id;
  std::uint64_t obstacle_hash = 0;
  std::string dynamics_id;
};

// Reach-avoid value function on a grid at horizons 0 = tau_0 > tau_1 > ... > tau_K = -T.
class ValueFunctionTable {
 public:
  ValueFunctionTable() = default;
  ValueFunctionTable(Grid grid, std::vector<double> horizons, std::vector<double> data);

  const Grid& grid() const { return grid_; }
  const std::vector<double>& horizons() const { return horizons_; }
  std::size_t slice_count() const { return horizons_.size(); }
  double horizon_length() const { return -horizons_.back(); }
  std::span<const double> slice(std::size_t k) const;
  const std::vector<double>& data() const { return data_; }

  double integration_dtau = 0.0;
  TableMetadata metadata;

  // Multilinear in space, linear between bracketing slices. Throws DomainError outside the
  // non-periodic bounds or for tau outside [-T, 0].
  double value(std::span<const double> x, double tau) const;
  // Central differences of the interpolated field with one-cell steps (one-sided at bounds).
  Vec gradient(std::span<const double> x, double tau) const;
  // Forward difference between the slices bracketing tau.
  double tau_derivative(std::span<const double> x, double tau) const;
  // Max minus min of the cell-corner values around x over both bracketing slices.
  double cell_variation(std::span<const double> x, double tau) const;
  bool contains(std::span<const double> x) const { return grid_.contains(x); }

  double value(const Vec& x, double tau) const { return value(std::span<const double>(x.data(), x.size()), tau); }

  void write(const std::filesystem::path& path) const;
  static ValueFunctionTable read(const std::filesystem::path& path);

 private:
  double spatial_value(std::size_t k, std::span<const double> x) const;
  std::pair<std::size_t, double> bracket(double tau) const;

  Grid grid_;
  std::vector<double> horizons_;
  std::vector<double> data_;
};

struct SolveOptions {
  double slice_interval = 0.0;  // 0 stores every integration step
  double dtau_fraction = 1.0;   // integration step = fraction * CFL bound
  int threads = 0;              // 0 = CONTINGENCY_THREADS or hardware concurrency
};

// Hash of the obstacle level sampled at every node (the value stored in table metadata).
std::uint64_t obstacle_hash(const Grid& grid, const ObstacleSpec& obstacle);

// Finite-horizon reach-avoid tube for target and obstacle on grid.
ValueFunctionTable solve_bra(const ControlAffineSystem& sys, const TargetSpec& target,
                             const ObstacleSpec& obstacle, double horizon, const Grid& grid,
                             const SolveOptions& options = {});

// Worker count from CONTINGENCY_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

}  // namespace contingency
