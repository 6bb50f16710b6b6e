#include "contingency/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

#include "contingency/error.hpp"

namespace contingency {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Tracks which keys of a table were read so leftovers can be rejected.
class Section {
 public:
  Section(const toml::table& table, std::string path) : table_(table), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return table_.contains(key); }

  const toml::node* node(const std::string& key) {
    used_.insert(key);
    return table_.get(key);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(key_path(key) + ": " + what);
  }

  double number(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) fail(key, "missing");
    return as_number(n, key);
  }
  double number(const std::string& key, double fallback) {
    const toml::node* n = node(key);
    return n ? as_number(n, key) : fallback;
  }
  std::int64_t integer(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) fail(key, "missing");
    if (!n->is_integer()) fail(key, "expected an integer");
    return *n->value<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    return has(key) ? integer(key) : (used_.insert(key), fallback);
  }
  bool boolean(const std::string& key, bool fallback) {
    const toml::node* n = node(key);
    if (!n) return fallback;
    if (!n->is_boolean()) fail(key, "expected a boolean");
    return *n->value<bool>();
  }
  std::string string(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) fail(key, "missing");
    if (!n->is_string()) fail(key, "expected a string");
    return *n->value<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : (used_.insert(key), fallback);
  }
  std::vector<double> numbers(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) fail(key, "missing");
    return as_numbers(n, key);
  }
  Mat matrix(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) fail(key, "missing");
    const toml::array* rows = n->as_array();
    if (!rows || rows->empty()) fail(key, "expected a nonempty array of rows");
    std::vector<std::vector<double>> data;
    for (const auto& row : *rows) data.push_back(as_numbers(&row, key));
    Mat M(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data[0].size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].size() != data[0].size()) fail(key, "ragged matrix");
      for (std::size_t j = 0; j < data[i].size(); ++j) M(i, j) = data[i][j];
    }
    return M;
  }
  const toml::table* table(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(key, "expected a table");
    return n->as_table();
  }
  const toml::array* array(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) return nullptr;
    if (!n->is_array()) fail(key, "expected an array");
    return n->as_array();
  }

  // Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : table_) {
      const std::string key(k.str());
      if (!used_.count(key)) throw ConfigError(key_path(key) + ": unknown key");
    }
  }

 private:
  double as_number(const toml::node* n, const std::string& key) const {
    if (n->is_integer()) return static_cast<double>(*n->value<std::int64_t>());
    if (n->is_floating_point()) return *n->value<double>();
    fail(key, "expected a number");
  }
  std::vector<double> as_numbers(const toml::node* n, const std::string& key) const {
    const toml::array* a = n->as_array();
    if (!a) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& el : *a) out.push_back(as_number(&el, key));
    return out;
  }

  const toml::table& table_;
  std::string path_;
  std::set<std::string> used_;
};

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<CircleObstacle> parse_obstacles(Section& sec, const std::string& key) {
  std::vector<CircleObstacle> out;
  const toml::array* arr = sec.array(key);
  if (!arr) return out;
  int idx = 0;
  for (const auto& el : *arr) {
    const toml::table* t = el.as_table();
    if (!t) sec.fail(key, "expected inline tables {center, radius}");
    Section ob(*t, sec.key_path(key) + "[" + std::to_string(idx++) + "]");
    const auto c = ob.numbers("center");
    if (c.size() != 2) ob.fail("center", "expected two coordinates");
    CircleObstacle disk;
    disk.center = Eigen::Vector2d(c[0], c[1]);
    disk.radius = ob.number("radius");
    if (!(disk.radius > 0.0)) ob.fail("radius", "must be positive");
    ob.finish();
    out.push_back(disk);
  }
  return out;
}

struct SimBlock {
  Vec x0;
  double t_end = 0.0, dt = 0.0;
  int r = 1, j_dagger = 0;
  bool nominal_only = false, auto_switch = false;
  double reach_tolerance = 1e-2;
};

SimBlock parse_sim(Section& root, ConfigKind kind) {
  const toml::table* t = root.table("sim");
  if (!t) root.fail("sim", "missing");
  Section sec(*t, "sim");
  SimBlock b;
  b.x0 = to_vec(sec.numbers("x0"));
  b.t_end = sec.number("t_end");
  b.dt = sec.number("dt");
  b.r = static_cast<int>(sec.integer("r", 1));
  b.j_dagger = static_cast<int>(sec.integer("j_dagger", 1)) - 1;
  b.nominal_only = sec.boolean("nominal_only", false);
  if (kind == ConfigKind::reach_avoid) b.auto_switch = sec.boolean("auto_switch", false);
  if (kind == ConfigKind::stabilization) b.reach_tolerance = sec.number("reach_tolerance", 1e-2);
  if (!(b.dt > 0.0)) sec.fail("dt", "must be positive");
  if (!(b.t_end > 0.0)) sec.fail("t_end", "must be positive");
  sec.finish();
  return b;
}

std::vector<ScenarioEvent> parse_events(Section& root, int p) {
  std::vector<ScenarioEvent> out;
  const toml::array* arr = root.array("events");
  if (!arr) return out;
  int idx = 0;
  for (const auto& el : *arr) {
    const toml::table* t = el.as_table();
    if (!t) root.fail("events", "expected an array of tables");
    Section sec(*t, "events[" + std::to_string(idx++) + "]");
    ScenarioEvent ev;
    ev.time = sec.number("time");
    if (!(ev.time >= 0.0)) sec.fail("time", "must be nonnegative");
    int kinds = 0;
    if (sec.has("set_target")) {
      ++kinds;
      ev.type = EventType::set_target;
      ev.value = static_cast<int>(sec.integer("set_target")) - 1;
      if (ev.value < 0 || ev.value >= p) sec.fail("set_target", "target index out of range");
    }
    if (sec.has("set_r")) {
      ++kinds;
      ev.type = EventType::set_r;
      ev.value = static_cast<int>(sec.integer("set_r"));
      if (ev.value < 1 || ev.value > p) sec.fail("set_r", "must lie in [1, p]");
    }
    if (sec.has("enable_auto_switch")) {
      ++kinds;
      ev.type = EventType::enable_auto_switch;
      if (!sec.boolean("enable_auto_switch", true)) sec.fail("enable_auto_switch", "must be true");
    }
    if (kinds != 1) throw ConfigError(sec.path() + ": exactly one of set_target, set_r, enable_auto_switch");
    sec.finish();
    if (!out.empty() && ev.time < out.back().time) throw ConfigError(sec.path() + ": events must be time-sorted");
    out.push_back(ev);
  }
  return out;
}

StabSetup parse_stabilization(Section& root) {
  const toml::table* t = root.table("stabilization");
  if (!t) root.fail("stabilization", "missing");
  Section sec(*t, "stabilization");
  StabSetup s;
  s.plant.A = sec.matrix("A");
  s.plant.B = sec.matrix("B");
  s.K = sec.matrix("K");
  const Eigen::Index n = s.plant.A.rows();
  if (s.plant.A.cols() != n) sec.fail("A", "must be square");
  if (s.plant.B.rows() != n) sec.fail("B", "row count must match A");
  const Eigen::Index m = s.plant.B.cols();
  if (s.K.rows() != m || s.K.cols() != n) sec.fail("K", "must be m x n");

  const bool snap = sec.boolean("snap_equilibria", true);
  const double nu = sec.number("nu", 0.9);
  if (!(nu > 0.0 && nu <= 1.0)) sec.fail("nu", "must lie in (0, 1]");
  const auto obstacles = parse_obstacles(sec, "obstacles");

  const toml::array* eq = sec.array("equilibria");
  if (!eq || eq->empty()) sec.fail("equilibria", "missing");
  std::vector<double> levels;
  if (sec.has("levels")) levels = sec.numbers("levels");

  Mat lyap_q = Mat::Identity(n, n);
  if (sec.has("Q")) lyap_q = sec.matrix("Q");
  try {
    s.P = solve_continuous_lyapunov(s.plant.A - s.plant.B * s.K, lyap_q);
  } catch (const ConstructionError& e) {
    throw ConfigError(std::string("stabilization.K: ") + e.what());
  }

  std::vector<Vec> centers, inputs;
  for (const auto& row : *eq) {
    const toml::array* a = row.as_array();
    if (!a || static_cast<Eigen::Index>(a->size()) != n) sec.fail("equilibria", "each entry needs n coordinates");
    Vec x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto v = (*a)[static_cast<std::size_t>(i)].value<double>();
      if (!v) sec.fail("equilibria", "expected numbers");
      x(i) = *v;
    }
    EquilibriumInput ei = equilibrium_input(s.plant, x);
    if (!snap) {
      ei.x_star = x;
    }
    s.equilibria.push_back(ei);
    centers.push_back(ei.x_star);
    inputs.push_back(ei.u_star);
  }
  const int p = static_cast<int>(centers.size());
  if (!levels.empty() && static_cast<int>(levels.size()) != p) sec.fail("levels", "one level per equilibrium");

  StabFilterConfig cfg;
  for (int j = 0; j < p; ++j) {
    double c = 0.0;
    if (!levels.empty()) {
      c = levels[j];
    } else {
      try {
        c = level_from_obstacles(centers[j], s.P, obstacles, nu);
      } catch (const ConstructionError& e) {
        throw ConfigError(std::string("stabilization.equilibria: ") + e.what());
      }
    }
    try {
      cfg.clfs.emplace_back(centers[j], s.P, c);
    } catch (const ConstructionError& e) {
      throw ConfigError(std::string("stabilization: ") + e.what());
    }
  }
  cfg.alpha_clf = linear_rate(sec.number("alpha_clf", 2.0));
  cfg.alpha_cbf = linear_rate(sec.number("alpha_cbf", 0.18));
  cfg.rho = scaled_square(sec.number("rho_scale", 0.18));
  cfg.c_omega = sec.number("c_omega", 0.1);
  if (!(cfg.c_omega > 0.0)) sec.fail("c_omega", "must be positive");
  cfg.nominal = make_linear_nominal(s.K, centers, inputs);

  Vec lo = Vec::Constant(m, -std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(m, std::numeric_limits<double>::infinity());
  if (sec.has("u_lo")) lo = to_vec(sec.numbers("u_lo"));
  if (sec.has("u_hi")) hi = to_vec(sec.numbers("u_hi"));
  if (lo.size() != m || hi.size() != m) sec.fail("u_lo", "bounds need m entries");
  s.scenario.system = make_linear_system(s.plant, lo, hi);
  s.scenario.obstacles = obstacles;
  s.scenario.filter = std::move(cfg);
  sec.finish();
  return s;
}

Tau2Schedule parse_tau2(Section& sec) {
  const bool has_const = sec.has("tau2");
  const bool has_table = sec.has("tau2_schedule");
  if (has_const == has_table) sec.fail("tau2", "give exactly one of tau2 and tau2_schedule");
  try {
    if (has_const) return Tau2Schedule::constant(sec.number("tau2"));
    const toml::table* t = sec.table("tau2_schedule");
    Section ts(*t, sec.key_path("tau2_schedule"));
    auto times = ts.numbers("times");
    auto values = ts.numbers("values");
    ts.finish();
    return Tau2Schedule::table(std::move(times), std::move(values));
  } catch (const std::invalid_argument& e) {
    sec.fail(has_const ? "tau2" : "tau2_schedule", e.what());
  }
}

ReachSetup parse_reach(Section& root, const SimBlock& sim) {
  const toml::table* t = root.table("reach");
  if (!t) root.fail("reach", "missing");
  Section sec(*t, "reach");
  ReachSetup s;
  AircraftModelSpec model;
  model.drag = sec.number("drag", 0.3);
  s.plant = make_aircraft(model);
  const double cruise = sec.number("cruise_speed", 1.0);
  const double turn = sec.number("turn_limit", 1.0);
  s.table_dynamics = make_planar_dubins(cruise, turn);
  s.projection = {0, 1, 3};

  const toml::table* g = sec.table("grid");
  if (!g) sec.fail("grid", "missing");
  {
    Section gs(*g, "reach.grid");
    const auto lo = gs.numbers("lo");
    const auto hi = gs.numbers("hi");
    const auto nodes = gs.numbers("nodes");
    if (lo.size() != 2 || hi.size() != 2) gs.fail("lo", "expected planar bounds [x, y]");
    if (nodes.size() != 3) gs.fail("nodes", "expected [nx, ny, ntheta]");
    std::vector<std::uint32_t> cells;
    for (double v : nodes) {
      if (v < 2 || v != std::floor(v)) gs.fail("nodes", "expected integers >= 2");
      cells.push_back(static_cast<std::uint32_t>(v));
    }
    gs.finish();
    try {
      s.grid = Grid({lo[0], lo[1], -kPi}, {hi[0], hi[1], kPi}, cells, {false, false, true});
    } catch (const std::invalid_argument& e) {
      sec.fail("grid", e.what());
    }
  }

  const double radius = sec.number("runway_radius", 0.5);
  const double tol = sec.number("heading_tolerance", 0.5);
  const double sharp = sec.number("sharpness", 20.0);
  const toml::array* rw = sec.array("runways");
  if (!rw || rw->empty()) sec.fail("runways", "missing");
  for (const auto& el : *rw) {
    const toml::array* a = el.as_array();
    if (!a || a->size() != 3) sec.fail("runways", "each runway is [x, y, heading]");
    double v[3];
    for (int i = 0; i < 3; ++i) {
      const auto d = (*a)[static_cast<std::size_t>(i)].value<double>();
      if (!d) sec.fail("runways", "expected numbers");
      v[i] = *d;
    }
    s.runways.push_back({v[0], v[1], v[2]});
    s.targets.push_back(make_runway_target(v[0], v[1], v[2], radius, tol, sharp));
  }
  const int p = static_cast<int>(s.runways.size());
  const auto disks = parse_obstacles(sec, "obstacles");
  s.obstacle = disks.empty() ? make_free_space() : make_disk_obstacles(disks);
  if (sec.boolean("confine_to_grid", true)) s.obstacle = confine_to_grid(std::move(s.obstacle), s.grid);

  const double T = sec.number("targeting_horizon");
  s.horizon = sec.number("horizon", T);
  s.solve.slice_interval = sec.number("slice_interval", 0.25);
  s.solve.dtau_fraction = sec.number("dtau_fraction", 1.0);
  if (!(s.solve.dtau_fraction > 0.0 && s.solve.dtau_fraction <= 1.0))
    sec.fail("dtau_fraction", "must lie in (0, 1]");

  s.params.d_omega = sec.number("d_omega", 0.1);
  s.params.alpha_steer = linear_rate(sec.number("alpha_steer", 2.0));
  s.params.alpha_pivot = linear_rate(sec.number("alpha_pivot", 1.0));
  s.params.rho = scaled_square(sec.number("rho_scale", 1.0));
  s.params.eps_switch = sec.number("eps_switch", 0.0);
  s.params.eps_feas = sec.number("eps_feas", 0.0);

  const Tau2Schedule tau2 = parse_tau2(sec);
  std::optional<double> tau1;
  if (sec.has("tau1_initial")) tau1 = sec.number("tau1_initial");
  if (sim.r < 1 || sim.r > p) root.fail("sim.r", "must lie in [1, p]");
  if (sim.j_dagger < 0 || sim.j_dagger >= p) root.fail("sim.j_dagger", "target index out of range");
  try {
    s.initial = initial_reach_state(sim.j_dagger, T, sim.r, tau2, tau1);
  } catch (const std::invalid_argument& e) {
    sec.fail("targeting_horizon", e.what());
  }
  double min_tau2 = 0.0;
  for (double tt = 0.0; tt <= sim.t_end + 1e-9; tt += sim.dt) min_tau2 = std::min(min_tau2, tau2.value(tt));
  if (s.horizon + 1e-9 < T || s.horizon + 1e-9 < -min_tau2)
    sec.fail("horizon", "table horizon must cover the targeting horizon and every tau2");

  if (const toml::table* nt = sec.table("nominal")) {
    Section ns(*nt, "reach.nominal");
    s.gains.heading_gain = ns.number("heading_gain", 2.0);
    s.gains.switch_radius = ns.number("switch_radius", 0.5);
    s.gains.speed_gain = ns.number("speed_gain", 1.0);
    ns.finish();
  }
  s.gains.cruise_speed = cruise;
  s.gains.drag = model.drag;
  sec.finish();

  s.x0 = sim.x0;
  if (s.x0.size() != s.plant.state_dim) root.fail("sim.x0", "expected (x, y, z, theta, v)");
  s.t_end = sim.t_end;
  s.dt = sim.dt;
  s.nominal_only = sim.nominal_only;
  s.auto_switch = sim.auto_switch;
  return s;
}

IntegratorSetup parse_integrator(Section& root) {
  const toml::table* t = root.table("hj");
  if (!t) root.fail("hj", "missing");
  Section sec(*t, "hj");
  IntegratorSetup s;
  const auto lo = sec.numbers("lo");
  const auto hi = sec.numbers("hi");
  const auto nodes = sec.numbers("nodes");
  if (lo.empty() || lo.size() != hi.size() || lo.size() != nodes.size())
    sec.fail("lo", "lo, hi and nodes need one entry per dimension");
  std::vector<std::uint32_t> cells;
  for (double v : nodes) {
    if (v < 2 || v != std::floor(v)) sec.fail("nodes", "expected integers >= 2");
    cells.push_back(static_cast<std::uint32_t>(v));
  }
  try {
    s.grid = Grid(lo, hi, cells, std::vector<bool>(lo.size(), false));
  } catch (const std::invalid_argument& e) {
    sec.fail("lo", e.what());
  }
  s.system = make_integrator(static_cast<int>(lo.size()), sec.number("speed", 1.0));
  const auto center = sec.has("target_center") ? to_vec(sec.numbers("target_center"))
                                               : Vec(Vec::Zero(static_cast<Eigen::Index>(lo.size())));
  if (center.size() != static_cast<Eigen::Index>(lo.size())) sec.fail("target_center", "wrong dimension");
  s.target = make_ball_target(center, sec.number("target_radius", 1.0));
  s.obstacle = make_free_space();
  s.horizon = sec.number("horizon");
  if (!(s.horizon > 0.0)) sec.fail("horizon", "must be positive");
  s.solve.slice_interval = sec.number("slice_interval", 0.0);
  s.solve.dtau_fraction = sec.number("dtau_fraction", 1.0);
  sec.finish();
  return s;
}

}  // namespace

std::string to_string(ConfigKind kind) {
  switch (kind) {
    case ConfigKind::stabilization: return "stabilization";
    case ConfigKind::reach_avoid: return "reach_avoid";
    case ConfigKind::hj_integrator: return "hj_integrator";
  }
  return "?";
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  toml::table doc;
  try {
    doc = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  Section root(doc, "");
  RunConfig cfg;
  cfg.schema_version = static_cast<int>(root.integer("schema_version"));
  if (cfg.schema_version != kSchemaVersion)
    root.fail("schema_version", "unsupported (expected " + std::to_string(kSchemaVersion) + ")");
  const std::string kind = root.string("kind");
  if (kind == "stabilization") cfg.kind = ConfigKind::stabilization;
  else if (kind == "reach_avoid") cfg.kind = ConfigKind::reach_avoid;
  else if (kind == "hj_integrator") cfg.kind = ConfigKind::hj_integrator;
  else root.fail("kind", "expected stabilization, reach_avoid or hj_integrator");
  cfg.name = root.string("name", "");
  const std::int64_t seed = root.integer("seed", 0);
  if (seed < 0) root.fail("seed", "must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);

  if (const toml::table* pt = root.table("paths")) {
    Section ps(*pt, "paths");
    cfg.paths.tables = ps.string("tables", cfg.paths.tables.string());
    cfg.paths.output = ps.string("output", cfg.paths.output.string());
    ps.finish();
  }

  switch (cfg.kind) {
    case ConfigKind::stabilization: {
      const SimBlock sim = parse_sim(root, cfg.kind);
      StabSetup s = parse_stabilization(root);
      const int p = s.scenario.filter.p();
      if (sim.r < 1 || sim.r > p) root.fail("sim.r", "must lie in [1, p]");
      if (sim.j_dagger < 0 || sim.j_dagger >= p) root.fail("sim.j_dagger", "target index out of range");
      if (sim.x0.size() != s.plant.A.rows()) root.fail("sim.x0", "wrong dimension");
      s.scenario.filter.r = sim.r;
      s.scenario.filter.j_dagger = sim.j_dagger;
      s.scenario.x0 = sim.x0;
      s.scenario.t_end = sim.t_end;
      s.scenario.dt = sim.dt;
      s.scenario.nominal_only = sim.nominal_only;
      s.scenario.reach_tolerance = sim.reach_tolerance;
      s.scenario.events = parse_events(root, p);
      for (const auto& e : s.scenario.events)
        if (e.type == EventType::enable_auto_switch)
          throw ConfigError("events: enable_auto_switch applies to reach_avoid configs only");
      cfg.stab = std::move(s);
      break;
    }
    case ConfigKind::reach_avoid: {
      const SimBlock sim = parse_sim(root, cfg.kind);
      ReachSetup s = parse_reach(root, sim);
      s.events = parse_events(root, static_cast<int>(s.runways.size()));
      cfg.reach = std::move(s);
      break;
    }
    case ConfigKind::hj_integrator:
      cfg.integrator = parse_integrator(root);
      break;
  }
  root.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

ReachScenario make_reach_scenario(const ReachSetup& setup, std::shared_ptr<const TableSet> tables) {
  ReachScenario sc;
  try {
    sc.filter = std::make_shared<const ReachFilter>(setup.plant, std::move(tables), setup.projection, setup.params);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (sc.filter->p() != static_cast<int>(setup.runways.size()))
    throw ConfigError("table count does not match the runway list");
  sc.initial = setup.initial;
  sc.nominal = make_runway_nominal(setup.gains, setup.runways);
  sc.landing = make_runway_landing(setup.gains, setup.runways);
  sc.targets = setup.targets;
  for (const auto& r : setup.runways) sc.target_points.emplace_back(r.x, r.y);
  sc.obstacles = setup.obstacle.disks;
  sc.x0 = setup.x0;
  sc.t_end = setup.t_end;
  sc.dt = setup.dt;
  sc.events = setup.events;
  sc.nominal_only = setup.nominal_only;
  sc.auto_switch = setup.auto_switch;
  return sc;
}

}  // namespace contingency
