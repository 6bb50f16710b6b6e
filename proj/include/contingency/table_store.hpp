#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "contingency/config.hpp"

namespace contingency {

struct SolveReport {
  double cfl_dtau = 0.0;
  double integration_dtau = 0.0;
  double wall_time = 0.0;
  std::vector<std::filesystem::path> files;
};

std::string table_file_name(int index);  // 0-based index -> target_<index+1>.cbra

// Solves one table per target and writes them plus manifest.json into dir.
SolveReport solve_and_store(const ControlAffineSystem& sys, const std::vector<TargetSpec>& targets,
                            const ObstacleSpec& obstacle, double horizon, const Grid& grid,
                            const SolveOptions& options, const std::filesystem::path& dir);

// Reads the tables listed in dir/manifest.json when they match the setup (grid, dynamics,
// targets, obstacle, horizon); returns nullopt otherwise.
std::optional<TableSet> load_matching_tables(const ReachSetup& setup, const std::filesystem::path& dir);

// Cached tables when they match, else solve and store them. Progress goes to log when given.
TableSet load_or_solve_tables(const ReachSetup& setup, const std::filesystem::path& dir,
                              std::ostream* log = nullptr);

// Reads table files and restores metadata from a sibling manifest.json if present.
TableSet read_tables(const std::vector<std::filesystem::path>& files);

}  // namespace contingency
