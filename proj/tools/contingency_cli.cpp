// contingency: solve reach-avoid tables, run filtered closed loops, query feasibility.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "contingency/config.hpp"
#include "contingency/error.hpp"
#include "contingency/log_io.hpp"
#include "contingency/table_store.hpp"

namespace fs = std::filesystem;
using namespace contingency;
using nlohmann::ordered_json;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kHjConfig = 2,
  kHjSolver = 3,
  kSimConfig = 4,
  kFeasDomain = 2,
};

#ifndef CONTINGENCY_DEFAULT_CONFIG_DIR
#define CONTINGENCY_DEFAULT_CONFIG_DIR "configs"
#endif

fs::path config_dir(const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  if (const char* env = std::getenv("CONTINGENCY_CONFIG_DIR")) return env;
  return CONTINGENCY_DEFAULT_CONFIG_DIR;
}

ordered_json vec_json(const Vec& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ordered_json disks_json(const std::vector<CircleObstacle>& disks) {
  ordered_json a = ordered_json::array();
  for (const auto& d : disks) a.push_back({{"center", {d.center.x(), d.center.y()}}, {"radius", d.radius}});
  return a;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Certified sets and obstacles of a stabilization run, for plotting.
void write_certificates(const StabSetup& s, const fs::path& path) {
  ordered_json j;
  ordered_json P = ordered_json::array();
  for (Eigen::Index i = 0; i < s.P.rows(); ++i) P.push_back(vec_json(s.P.row(i).transpose()));
  j["P"] = P;
  ordered_json targets = ordered_json::array();
  for (std::size_t k = 0; k < s.scenario.filter.clfs.size(); ++k) {
    const auto& clf = s.scenario.filter.clfs[k];
    targets.push_back({{"index", k + 1},
                       {"center", vec_json(clf.center())},
                       {"u_star", vec_json(s.equilibria[k].u_star)},
                       {"snapped", !s.equilibria[k].exact},
                       {"snap_distance", s.equilibria[k].snap_distance},
                       {"level", clf.level()},
                       {"radius_min", std::sqrt(clf.level() / clf.lambda_max())},
                       {"radius_max", std::sqrt(clf.level() / clf.lambda_min())}});
  }
  j["targets"] = targets;
  j["obstacles"] = disks_json(s.scenario.obstacles);
  write_json(path, j);
}

void write_scene(const ReachSetup& s, const fs::path& tables, const fs::path& path) {
  ordered_json j;
  ordered_json rw = ordered_json::array();
  for (std::size_t k = 0; k < s.runways.size(); ++k)
    rw.push_back({{"index", k + 1},
                  {"x", s.runways[k].x},
                  {"y", s.runways[k].y},
                  {"heading", s.runways[k].heading},
                  {"table", (tables / table_file_name(static_cast<int>(k))).string()}});
  j["runways"] = rw;
  j["obstacles"] = disks_json(s.obstacle.disks);
  j["targeting_horizon"] = s.initial.T;
  write_json(path, j);
}

void print_summary_line(const TrajectoryLog& log, const fs::path& out) {
  const RunSummary& s = log.summary;
  std::cout << log.kind << (log.filtered ? " (filtered)" : " (nominal)") << ": " << log.records.size()
            << " records, min membership " << s.min_membership << ", min pivot " << format_double(s.min_pivot)
            << ", penetrations " << s.penetration_events.size() << ", switches " << log.switch_events.size()
            << ", infeasible steps " << s.infeasible_steps << "\n  wrote " << (out / "trajectory.csv").string()
            << " and " << (out / "summary.json").string() << '\n';
}

struct SimOptions {
  std::string config;
  std::string out;
  std::string tables;
  bool nominal_only = false;
};

// Runs a stabilization or reach config; returns an exit code.
int run_config(const SimOptions& opt, RunConfig cfg) {
  fs::path out = opt.out.empty() ? cfg.paths.output : fs::path(opt.out);
  const fs::path tables = opt.tables.empty() ? cfg.paths.tables : fs::path(opt.tables);
  if (opt.nominal_only && opt.out.empty()) out += "_nominal";
  fs::create_directories(out);

  TrajectoryLog log;
  if (cfg.stab) {
    if (opt.nominal_only) cfg.stab->scenario.nominal_only = true;
    log = run(cfg.stab->scenario);
    write_certificates(*cfg.stab, out / "certificates.json");
  } else if (cfg.reach) {
    if (opt.nominal_only) cfg.reach->nominal_only = true;
    auto set = std::make_shared<const TableSet>(load_or_solve_tables(*cfg.reach, tables, &std::cout));
    log = run(make_reach_scenario(*cfg.reach, set));
    write_scene(*cfg.reach, tables, out / "scene.json");
  } else {
    throw ConfigError("sim run needs a stabilization or reach_avoid config");
  }
  write_csv(log, out / "trajectory.csv");
  write_summary(log, out / "summary.json");
  print_summary_line(log, out);
  return kOk;
}

int cmd_sim(const SimOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config(opt.config);
    return run_config(opt, std::move(cfg));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kSimConfig;
  }
}

struct HjOptions {
  std::string config;
  std::string out;
  int threads = 0;
};

int cmd_hj(const HjOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config(opt.config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kHjConfig;
  }
  const fs::path out = opt.out.empty() ? cfg.paths.tables : fs::path(opt.out);
  try {
    SolveReport rep;
    if (cfg.reach) {
      SolveOptions so = cfg.reach->solve;
      so.threads = opt.threads;
      rep = solve_and_store(cfg.reach->table_dynamics, cfg.reach->targets, cfg.reach->obstacle,
                            cfg.reach->horizon, cfg.reach->grid, so, out);
    } else if (cfg.integrator) {
      SolveOptions so = cfg.integrator->solve;
      so.threads = opt.threads;
      rep = solve_and_store(cfg.integrator->system, {cfg.integrator->target}, cfg.integrator->obstacle,
                            cfg.integrator->horizon, cfg.integrator->grid, so, out);
    } else {
      std::cerr << "config error: hj solve needs a reach_avoid or hj_integrator config\n";
      return kHjConfig;
    }
    std::cout << "wrote " << rep.files.size() << " table(s) to " << out.string() << " (CFL dtau "
              << format_double(rep.cfl_dtau) << ", step " << format_double(rep.integration_dtau) << ", "
              << rep.wall_time << " s)\n";
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kHjSolver;
  }
  return kOk;
}

struct FeasOptions {
  std::vector<std::string> tables;
  std::string table_dir;
  std::vector<double> x;
  double tau = 0.0;
  int r = 1;
};

int cmd_feas(const FeasOptions& opt) {
  std::vector<fs::path> files(opt.tables.begin(), opt.tables.end());
  if (!opt.table_dir.empty()) {
    for (int j = 0;; ++j) {
      const fs::path f = fs::path(opt.table_dir) / table_file_name(j);
      if (!fs::exists(f)) break;
      files.push_back(f);
    }
  }
  if (files.empty()) {
    std::cerr << "no value tables given\n";
    return kFailure;
  }
  TableSet tables;
  try {
    tables = read_tables(files);
  } catch (const std::exception& e) {
    std::cerr << "cannot read tables: " << e.what() << '\n';
    return kFailure;
  }
  const int p = static_cast<int>(tables.size());
  if (opt.r < 1 || opt.r > p) {
    std::cerr << "r must lie in [1, " << p << "]\n";
    return kFailure;
  }
  std::vector<double> values;
  try {
    for (const auto& t : tables) {
      if (static_cast<int>(opt.x.size()) != t.grid().dims())
        throw DomainError("x has " + std::to_string(opt.x.size()) + " entries, table has " +
                          std::to_string(t.grid().dims()) + " dims");
      values.push_back(t.value(std::span<const double>(opt.x.data(), opt.x.size()), opt.tau));
    }
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kFeasDomain;
  }
  for (int j = 0; j < p; ++j)
    std::cout << "V_" << (j + 1) << " = " << format_double(values[j]) << (values[j] >= 0.0 ? "  feasible" : "")
              << "  (" << files[j].string() << ")\n";
  const double pv = pivot(values, opt.r);
  const int count = membership_count(values);
  std::cout << "pivot(r=" << opt.r << ") = " << format_double(pv) << "\nfeasible targets: " << count << " of " << p
            << "\nverdict: " << (pv >= 0.0 ? "member" : "not a member") << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Combinatorial contingency filters: HJ tables, closed-loop runs, feasibility queries"};
  app.require_subcommand(1);

  HjOptions hj;
  auto* hj_cmd = app.add_subcommand("hj", "Hamilton-Jacobi value tables");
  hj_cmd->require_subcommand(1);
  auto* hj_solve = hj_cmd->add_subcommand("solve", "Solve one table per target and write a manifest");
  hj_solve->add_option("config", hj.config, "TOML run config")->required();
  hj_solve->add_option("--out", hj.out, "Output directory (default: paths.tables)");
  hj_solve->add_option("--threads", hj.threads, "Worker threads (default: CONTINGENCY_THREADS or all cores)");

  SimOptions sim;
  auto* sim_cmd = app.add_subcommand("sim", "Closed-loop scenarios");
  sim_cmd->require_subcommand(1);
  auto* sim_run = sim_cmd->add_subcommand("run", "Run a scenario and write trajectory.csv and summary.json");
  sim_run->add_option("config", sim.config, "TOML run config")->required();
  sim_run->add_option("--out", sim.out, "Output directory (default: paths.output)");
  sim_run->add_option("--tables", sim.tables, "Value-table directory (default: paths.tables)");
  sim_run->add_flag("--nominal-only", sim.nominal_only, "Apply the nominal controller without filtering");

  FeasOptions feas;
  auto* feas_cmd = app.add_subcommand("feas", "Feasibility queries on value tables");
  feas_cmd->require_subcommand(1);
  auto* feas_check = feas_cmd->add_subcommand("check", "Print V_j(x, tau), the pivot and the membership verdict");
  feas_check->add_option("--table", feas.tables, "Value-table file (repeatable)");
  feas_check->add_option("--table-dir", feas.table_dir, "Directory holding target_<j>.cbra files");
  feas_check->add_option("--x", feas.x, "State in table coordinates, e.g. --x 3 3 1.57")->required()->expected(1, -1);
  feas_check->add_option("--tau", feas.tau, "Horizon (<= 0)")->required();
  feas_check->add_option("--r", feas.r, "Required number of feasible targets")->capture_default_str();

  std::string config_override;
  std::string repro_out, repro_tables;
  bool repro_nominal = false;
  std::string ex2_case = "b";
  auto* repro = app.add_subcommand("repro", "Reproduce the two shipped examples");
  repro->require_subcommand(1);
  repro->add_option("--config-dir", config_override, "Directory with ex1.toml and ex2_*.toml");
  auto* ex1 = repro->add_subcommand("ex1", "Linear system with three targets");
  ex1->add_flag("--nominal-only", repro_nominal, "Nominal controller only");
  ex1->add_option("--out", repro_out, "Output directory");
  auto* ex2 = repro->add_subcommand("ex2", "Aircraft with six runways");
  ex2->add_option("--case", ex2_case, "Scenario a, b, c or d")
      ->check(CLI::IsMember({"a", "b", "c", "d"}))
      ->capture_default_str();
  ex2->add_flag("--nominal-only", repro_nominal, "Nominal controller only");
  ex2->add_option("--out", repro_out, "Output directory");
  ex2->add_option("--tables", repro_tables, "Value-table directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (hj_solve->parsed()) return cmd_hj(hj);
    if (sim_run->parsed()) return cmd_sim(sim);
    if (feas_check->parsed()) return cmd_feas(feas);
    if (ex1->parsed() || ex2->parsed()) {
      SimOptions opt;
      opt.config = (config_dir(config_override) / (ex1->parsed() ? "ex1.toml" : "ex2_" + ex2_case + ".toml")).string();
      opt.out = repro_out;
      opt.tables = repro_tables;
      opt.nominal_only = repro_nominal;
      return cmd_sim(opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
