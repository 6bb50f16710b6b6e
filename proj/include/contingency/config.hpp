#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contingency/certificates.hpp"
#include "contingency/hj_solver.hpp"
#include "contingency/reach_filter.hpp"
#include "contingency/scenario.hpp"

namespace contingency {

inline constexpr int kSchemaVersion = 1;

enum class ConfigKind { stabilization, reach_avoid, hj_integrator };

struct RunPaths {
  std::filesystem::path tables = "tables";
  std::filesystem::path output = "out";
};

struct StabSetup {
  LinearSystemSpec plant;
  Mat K;
  Mat P;
  std::vector<EquilibriumInput> equilibria;
  StabScenario scenario;
};

// Everything needed to solve the runway tables and to run the aircraft scenario.
struct ReachSetup {
  ControlAffineSystem plant;
  ControlAffineSystem table_dynamics;  // planar reduction the tables are solved on
  std::vector<int> projection;
  Grid grid;
  std::vector<Runway> runways;
  std::vector<TargetSpec> targets;
  ObstacleSpec obstacle;
  double horizon = 0.0;  // stored table horizon
  SolveOptions solve;
  ReachFilterParams params;
  ReachFilterState initial;
  RunwayNominalGains gains;
  Vec x0;
  double t_end = 0.0;
  double dt = 0.0;
  std::vector<ScenarioEvent> events;
  bool nominal_only = false;
  bool auto_switch = false;
};

struct IntegratorSetup {
  ControlAffineSystem system;
  Grid grid;
  TargetSpec target;
  ObstacleSpec obstacle;
  double horizon = 0.0;
  SolveOptions solve;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  ConfigKind kind = ConfigKind::stabilization;
  std::string name;
  std::uint64_t seed = 0;
  RunPaths paths;
  std::optional<StabSetup> stab;
  std::optional<ReachSetup> reach;
  std::optional<IntegratorSetup> integrator;
};

// Parses and validates a run config. Unknown keys, wrong types and inconsistent values throw
// ConfigError naming the offending key.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::string to_string(ConfigKind kind);

// Value tables for a reach setup, in runway order.
using TableSet = std::vector<ValueFunctionTable>;

ReachScenario make_reach_scenario(const ReachSetup& setup, std::shared_ptr<const TableSet> tables);

}  // namespace contingency
