#include "contingency/log_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <ostream>

#include "contingency/error.hpp"

namespace contingency {

using nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// JSON has no NaN/inf; those become null.
ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace

std::vector<std::string> csv_header(const TrajectoryLog& log) {
  std::vector<std::string> cols{"t"};
  for (int i = 0; i < log.state_dim; ++i) cols.push_back("x" + std::to_string(i));
  for (int i = 0; i < log.input_dim; ++i) cols.push_back("u" + std::to_string(i));
  cols.push_back("omega1");
  cols.push_back("omega2");
  for (int j = 1; j <= log.targets; ++j) cols.push_back(log.value_prefix + "_" + std::to_string(j));
  for (const char* c : {"pivot", "count", "j_dagger", "tau1", "tau2", "qp_status", "margin"})
    cols.emplace_back(c);
  return cols;
}

void write_csv(const TrajectoryLog& log, std::ostream& out) {
  const auto cols = csv_header(log);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const StepRecord& r : log.records) {
    out << format_double(r.t);
    for (Eigen::Index i = 0; i < r.x.size(); ++i) out << ',' << format_double(r.x(i));
    for (Eigen::Index i = 0; i < r.u.size(); ++i) out << ',' << format_double(r.u(i));
    out << ',' << format_double(r.omega1) << ',' << format_double(r.omega2);
    for (Eigen::Index j = 0; j < r.values.size(); ++j) out << ',' << format_double(r.values(j));
    out << ',' << format_double(r.pivot) << ',' << r.count << ',' << (r.j_dagger + 1) << ','
        << format_double(r.tau1) << ',' << format_double(r.tau2) << ',' << r.qp_status << ','
        << format_double(r.margin) << '\n';
  }
}

void write_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  write_csv(log, out);
  if (!out) throw Error("write failed: " + path.string());
}

std::string summary_json(const TrajectoryLog& log) {
  const RunSummary& s = log.summary;
  ordered_json j;
  j["kind"] = log.kind;
  j["filtered"] = log.filtered;
  j["records"] = log.records.size();
  j["min_pivot"] = num(s.min_pivot);
  j["min_membership"] = s.min_membership;
  j["steps_below_r"] = s.steps_below_r;
  ordered_json phases = ordered_json::array();
  for (const auto& ph : s.phases)
    phases.push_back({{"start", ph.start}, {"end", ph.end}, {"r", ph.r}, {"min_membership", ph.min_membership}});
  j["membership_by_phase"] = phases;
  ordered_json pens = ordered_json::array();
  for (const auto& e : s.penetration_events)
    pens.push_back({{"start", e.start}, {"end", e.end}, {"max_depth", e.max_depth}, {"obstacle", e.obstacle + 1}});
  j["penetration_events"] = pens;
  ordered_json sw = ordered_json::array();
  for (const auto& e : log.switch_events)
    sw.push_back({{"time", e.time},
                  {"from", e.from + 1},
                  {"to", e.to + 1},
                  {"automatic", e.automatic},
                  {"accepted", e.accepted},
                  {"reason", e.reason}});
  j["switch_events"] = sw;
  j["infeasible_steps"] = s.infeasible_steps;
  j["domain_violations"] = s.domain_violations;
  j["clamped_steps"] = s.clamped_steps;
  j["target_reach_time"] = opt(s.target_reach_time);
  j["final_target"] = s.final_target + 1;
  j["final_distance"] = num(s.final_distance);
  j["min_steer_value"] = num(s.min_steer_value);
  j["tol_grid"] = s.tol_grid;
  j["aborted_at_step"] = opt(s.aborted_at);
  return j.dump(2);
}

void write_summary(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  out << summary_json(log) << '\n';
}

}  // namespace contingency
