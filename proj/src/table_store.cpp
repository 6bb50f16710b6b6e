#include "contingency/table_store.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"

#include "contingency/error.hpp"

namespace contingency {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::optional<ordered_json> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return std::nullopt;
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string table_file_name(int index) { return "target_" + std::to_string(index + 1) + ".cbra"; }

SolveReport solve_and_store(const ControlAffineSystem& sys, const std::vector<TargetSpec>& targets,
                            const ObstacleSpec& obstacle, double horizon, const Grid& grid,
                            const SolveOptions& options, const fs::path& dir) {
  fs::create_directories(dir);
  SolveReport rep;
  rep.cfl_dtau = cfl_dt(grid, sys);
  ordered_json entries = ordered_json::array();
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t obs_hash = 0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto s0 = std::chrono::steady_clock::now();
    ValueFunctionTable table = solve_bra(sys, targets[j], obstacle, horizon, grid, options);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    const fs::path file = dir / table_file_name(static_cast<int>(j));
    table.write(file);
    rep.files.push_back(file);
    rep.integration_dtau = table.integration_dtau;
    obs_hash = table.metadata.obstacle_hash;
    entries.push_back({{"index", j + 1},
                       {"file", file.filename().string()},
                       {"target_id", table.metadata.target_id},
                       {"slices", table.slice_count()},
                       {"wall_time_s", secs}});
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ordered_json m;
  m["format"] = "CBRA";
  m["version"] = 1;
  m["grid_hash"] = hex64(grid.hash());
  m["dynamics_id"] = sys.id;
  m["obstacle_hash"] = hex64(obs_hash);
  m["obstacle"] = obstacle.description;
  m["horizon"] = horizon;
  m["slice_interval"] = options.slice_interval;
  m["dtau_fraction"] = options.dtau_fraction;
  m["cfl_dtau"] = rep.cfl_dtau;
  m["integration_dtau"] = rep.integration_dtau;
  m["wall_time_s"] = rep.wall_time;
  m["targets"] = entries;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
  return rep;
}

TableSet read_tables(const std::vector<fs::path>& files) {
  TableSet tables;
  for (const auto& f : files) {
    ValueFunctionTable t = ValueFunctionTable::read(f);
    if (const auto m = read_manifest(f.parent_path())) {
      const std::string name = f.filename().string();
      for (const auto& e : (*m)["targets"]) {
        if (e.value("file", "") != name) continue;
        t.metadata.target_id = e.value("target_id", "");
        t.metadata.dynamics_id = m->value("dynamics_id", "");
        t.metadata.obstacle_hash = std::stoull(m->value("obstacle_hash", "0"), nullptr, 16);
        t.integration_dtau = m->value("integration_dtau", 0.0);
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::optional<TableSet> load_matching_tables(const ReachSetup& setup, const fs::path& dir) {
  const auto m = read_manifest(dir);
  if (!m) return std::nullopt;
  try {
    if (m->value("grid_hash", "") != hex64(setup.grid.hash())) return std::nullopt;
    if (m->value("dynamics_id", "") != setup.table_dynamics.id) return std::nullopt;
    if (m->value("obstacle_hash", "") != hex64(obstacle_hash(setup.grid, setup.obstacle))) return std::nullopt;
    if (m->value("horizon", 0.0) != setup.horizon) return std::nullopt;
    if (m->value("slice_interval", -1.0) != setup.solve.slice_interval) return std::nullopt;
    if (m->value("dtau_fraction", -1.0) != setup.solve.dtau_fraction) return std::nullopt;
    const auto& entries = (*m)["targets"];
    if (!entries.is_array() || entries.size() != setup.targets.size()) return std::nullopt;
    std::vector<fs::path> files;
    for (std::size_t j = 0; j < setup.targets.size(); ++j) {
      if (entries[j].value("target_id", "") != setup.targets[j].description) return std::nullopt;
      files.push_back(dir / entries[j].value("file", ""));
    }
    TableSet tables = read_tables(files);
    for (const auto& t : tables)
      if (!(t.grid() == setup.grid)) return std::nullopt;
    return tables;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  } catch (const Error&) {
    return std::nullopt;
  }
}

TableSet load_or_solve_tables(const ReachSetup& setup, const fs::path& dir, std::ostream* log) {
  if (auto cached = load_matching_tables(setup, dir)) {
    if (log) *log << "using cached value tables in " << dir.string() << '\n';
    return std::move(*cached);
  }
  if (log) *log << "solving " << setup.targets.size() << " value tables into " << dir.string() << '\n';
  const SolveReport rep = solve_and_store(setup.table_dynamics, setup.targets, setup.obstacle,
                                          setup.horizon, setup.grid, setup.solve, dir);
  if (log) *log << "solved in " << rep.wall_time << " s\n";
  return read_tables(rep.files);
}

}  // namespace contingency
