#include "cpsdre/artifacts.hpp"
#include "cpsdre/errors.hpp"
#include "cpsdre/kernels.hpp"
#include "cpsdre/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

namespace cpsdre {

namespace {

using oj = nlohmann::ordered_json;

double ratio(double num, double den) {
  if (den != 0.0) return num / den;
  return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string complexity_text(bool full, double steps, double dim) {
  const double value = steps * dim * dim * dim;
  return std::string(full ? "N_t*N_x^3" : "n_t*R^3") + " = " + short_num(steps) + "*" + short_num(dim) +
         "^3 = " + short_num(value);
}

const std::vector<std::string>& columns() {
  static const std::vector<std::string> c = {
      "method",     "R_used",    "J",           "J_over_J_full",   "cost_gap_ratio",
      "converged_at", "steps",   "cpu_ms",      "cpu_ratio",       "care_step_ms",
      "care_time_ratio", "complexity", "complexity_ratio", "flags"};
  return c;
}

std::vector<std::string> cells(const ReportRow& r, bool compact) {
  auto num = [&](double v) { return compact ? short_num(v) : format_double(v); };
  return {r.method,
          std::to_string(r.R_used),
          num(r.J),
          num(r.J_over_J_full),
          num(r.cost_gap_ratio),
          r.converged_at ? num(*r.converged_at) : std::string(compact ? "none" : ""),
          std::to_string(r.steps),
          num(r.cpu_ms),
          num(r.cpu_ratio),
          num(r.care_step_ms),
          num(r.care_time_ratio),
          r.complexity,
          num(r.complexity_ratio),
          r.flags};
}

}  // namespace

ComparisonReport build_report(const std::vector<nlohmann::json>& runs) {
  const nlohmann::json* full = nullptr;
  for (const auto& r : runs) {
    if (r.value("model", "") == "full") full = &r;
  }
  if (!full) throw ConfigError("report needs a full-order baseline run (method \"full\")");

  const double J_full = full->at("J_quadrature").get<double>();
  const double wall_full = full->at("wall_ms").get<double>();
  const double care_full = full->at("care_mean_ms").get<double>();
  const double steps_full = full->at("steps").get<double>();
  const double n_full = full->at("n").get<double>();
  const double complexity_full = steps_full * n_full * n_full * n_full;

  std::map<std::string, int> hash_count;
  for (const auto& r : runs) ++hash_count[r.at("trajectory_hash").get<std::string>()];

  ComparisonReport rep;
  for (const auto& r : runs) {
    ReportRow row;
    const bool is_full = r.at("model").get<std::string>() == "full";
    row.method = r.at("method").get<std::string>();
    row.R_used = r.at("n").get<std::size_t>();
    row.J = r.at("J_quadrature").get<double>();
    row.J_over_J_full = ratio(row.J, J_full);
    row.cost_gap_ratio = ratio(J_full - row.J, J_full);
    if (!r.at("converged_at").is_null()) row.converged_at = r.at("converged_at").get<double>();
    row.steps = r.at("steps").get<std::size_t>();
    row.cpu_ms = r.at("wall_ms").get<double>();
    row.cpu_ratio = ratio(row.cpu_ms, wall_full);
    row.care_step_ms = r.at("care_mean_ms").get<double>();
    row.care_time_ratio = ratio(row.care_step_ms, care_full);
    const double dim = static_cast<double>(row.R_used);
    row.complexity = complexity_text(is_full, static_cast<double>(row.steps), dim);
    row.complexity_ratio = ratio(static_cast<double>(row.steps) * dim * dim * dim, complexity_full);
    std::vector<std::string> flags;
    if (hash_count[r.at("trajectory_hash").get<std::string>()] > 1) flags.push_back("nondeterministic-timing");
    if (r.value("unstable_steps", 0) > 0) {
      flags.push_back("uncertified-steps=" + std::to_string(r.at("unstable_steps").get<int>()));
    }
    for (std::size_t i = 0; i < flags.size(); ++i) row.flags += (i ? ";" : "") + flags[i];
    rep.rows.push_back(std::move(row));
  }
  rep.environment = {{"Q", full->value("Q", "")},
                     {"R", full->value("R", "")},
                     {"B", full->value("B", "")},
                     {"full_propagation", full->value("propagation", "")},
                     {"compiler", __VERSION__},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                   "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"openmp_threads", kernels::num_threads()}};
  return rep;
}

ComparisonReport cmd_report(const PipelineConfig& cfg, std::ostream& log) {
  std::vector<nlohmann::json> runs;
  for (const auto& m : cfg.control.methods) {
    const auto path = cfg.output_dir / ("run_" + m.stem() + ".json");
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("missing " + path.string() + "; run `cpsdre control` first");
    }
    runs.push_back(read_json(path));
  }
  const ComparisonReport rep = build_report(runs);

  std::string csv;
  for (std::size_t c = 0; c < columns().size(); ++c) csv += (c ? "," : "") + columns()[c];
  csv += "\n";
  for (const auto& row : rep.rows) {
    const auto v = cells(row, false);
    for (std::size_t c = 0; c < v.size(); ++c) csv += (c ? "," : "") + v[c];
    csv += "\n";
  }
  write_text(cfg.output_dir / "report.csv", csv);

  std::string md = "# SDRE comparison report\n\n";
  md += "Cost J is the trapezoid quadrature of x'Qx + u'Ru along each run. ";
  md += "cost_gap_ratio = (J_full - J) / J_full and cpu_ratio = wall time / full wall time ";
  md += "are both measured; care_time_ratio compares the mean per-step Riccati solve time.\n\n";
  for (const auto& item : rep.environment.items()) {
    md += "- " + item.key() + ": " + (item.value().is_string() ? item.value().get<std::string>() : item.value().dump()) + "\n";
  }
  md += "\n|";
  for (const auto& c : columns()) md += " " + c + " |";
  md += "\n|";
  for (std::size_t c = 0; c < columns().size(); ++c) md += "---|";
  md += "\n";
  for (const auto& row : rep.rows) {
    md += "|";
    for (const auto& v : cells(row, true)) md += " " + v + " |";
    md += "\n";
  }
  write_text(cfg.output_dir / "report.md", md);

  log << "report: " << rep.rows.size() << " rows -> " << (cfg.output_dir / "report.md").string() << "\n";
  for (const auto& row : rep.rows) {
    log << "  " << row.method << ": J = " << short_num(row.J) << ", J/J_full = " << short_num(row.J_over_J_full)
        << ", converged_at = " << (row.converged_at ? short_num(*row.converged_at) : std::string("none"))
        << ", CARE time ratio = " << short_num(row.care_time_ratio) << "\n";
  }
  return rep;
}

}  // namespace cpsdre
