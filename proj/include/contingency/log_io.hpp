#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "contingency/scenario.hpp"

namespace contingency {

// 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);

std::vector<std::string> csv_header(const TrajectoryLog& log);
void write_csv(const TrajectoryLog& log, std::ostream& out);
void write_csv(const TrajectoryLog& log, const std::filesystem::path& path);

// Summary JSON document (string form so callers can embed or write it).
std::string summary_json(const TrajectoryLog& log);
void write_summary(const TrajectoryLog& log, const std::filesystem::path& path);

}  // namespace contingency
