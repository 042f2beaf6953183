#pragma once

/// \file pipeline.hpp
/// Experiment configuration and the subcommands of the `cpsdre` tool:
/// uncontrolled simulation, snapshot tensor, decomposition, SDRE control
/// runs and the comparison report. Every command reads and writes files in
/// the configured output directory, so running the subcommands one by one
/// produces the same artifacts as `pipeline`.

#include "cpsdre/allen_cahn.hpp"
#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/sdre.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cpsdre {

/// Q or R weight: identity or c * identity.
struct WeightSpec {
  double scale = 1.0;

  Matrix build(Eigen::Index n) const;
  std::string describe() const;
};

/// Control actuation of the full-order model.
enum class Actuation {
  /// B = I (every grid point actuated).
  identity,
  /// Two columns: indicators of the left and right halves of the domain.
  half_indicators,
};

std::string to_string(Actuation a);
Actuation actuation_from_string(const std::string& s);

/// nx x m actuation matrix.
Matrix actuation_matrix(Actuation a, const AcConfig& ac);

/// One controlled model: the full-order baseline or a reduced model built
/// from a decomposition.
struct MethodSpec {
  enum class Kind { full, pgs, als, pgs_alsk };
  Kind kind = Kind::full;
  /// k for pgs_alsk.
  std::size_t k = 0;

  /// "full", "pgs", "als" or "pgs+als<k>".
  std::string label() const;
  /// File-name stem: "full", "pgs", "als" or "pgs_als<k>".
  std::string stem() const;
  bool reduced() const { return kind != Kind::full; }
  bool operator==(const MethodSpec&) const = default;

  static MethodSpec parse(const std::string& s);
};

struct DecompositionConfig {
  /// Method run by `decompose` in addition to those the control runs need.
  MethodSpec method{MethodSpec::Kind::pgs, 0};
  AlsConfig als;
  PgsConfig pgs;
};

struct ControlConfig {
  WeightSpec Q;
  WeightSpec R;
  Actuation B = Actuation::identity;
  std::size_t nt = 1001;
  double t0 = 0.0;
  double t1 = 1.0;
  double stop_tol = 1e-14;
  /// Propagation of the full-order closed loop; reduced runs always use the
  /// explicit step.
  Propagation full_integrator = Propagation::semi_implicit_closed_loop;
  std::vector<MethodSpec> methods = {
      {MethodSpec::Kind::full, 0},
      {MethodSpec::Kind::pgs, 0},
      {MethodSpec::Kind::pgs_alsk, 1},
      {MethodSpec::Kind::pgs_alsk, 2},
  };
  bool certify = true;
};

struct PipelineConfig {
  SnapshotConfig snapshot;
  /// beta used by `simulate` (0 is the uncontrolled system).
  double simulate_beta = 0.0;
  DecompositionConfig decomposition;
  ControlConfig control;
  std::filesystem::path output_dir = "cpsdre_out";
  std::uint64_t seed = 42;
  /// Worker count for fan-out stages; 0 selects the hardware concurrency.
  int jobs = 0;

  /// Sets the seed of every seeded stage.
  void set_seed(std::uint64_t s);
  /// Checks every field; throws ConfigError.
  void validate() const;
  int resolved_jobs() const;
  /// Every method whose factors `decompose` must produce.
  std::vector<MethodSpec> decomposition_methods() const;
};

/// Parses a configuration. Relative paths (output_dir, initial-condition
/// file) are resolved against base_dir. Throws ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

/// Per-method decomposition outcome.
struct DecompositionSummary {
  MethodSpec method;
  std::size_t rank = 0;
  std::size_t rank_estimate = 0;
  double rel_error = 0.0;
  std::size_t iterations = 0;
  std::string stop_reason;
};

/// One row of the comparison table.
struct ReportRow {
  std::string method;
  std::size_t R_used = 0;
  double J = 0.0;
  double J_over_J_full = 0.0;
  double cost_gap_ratio = 0.0;
  std::optional<double> converged_at;
  std::size_t steps = 0;
  double cpu_ms = 0.0;
  double cpu_ratio = 0.0;
  double care_step_ms = 0.0;
  double care_time_ratio = 0.0;
  std::string complexity;
  double complexity_ratio = 0.0;
  std::string flags;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  nlohmann::ordered_json environment;
};

/// Writes trajectory.csv, trajectory.t3b and simulate.json.
void cmd_simulate(const PipelineConfig& cfg, std::ostream& log);
/// Writes snapshot.t3b and snapshot.json.
void cmd_build_tensor(const PipelineConfig& cfg, std::ostream& log);
/// Reads snapshot.t3b; writes factors_<stem>.{json,bin}, trace_<stem>.csv and
/// decompose.json.
std::vector<DecompositionSummary> cmd_decompose(const PipelineConfig& cfg, std::ostream& log);
/// Runs every control method; writes run_<stem>.{csv,json}, states_<stem>.csv
/// and, for reduced models, basis_<stem>.{json,bin}.
void cmd_control(const PipelineConfig& cfg, std::ostream& log);
/// Reads run_<stem>.json for every method; writes report.csv and report.md.
ComparisonReport cmd_report(const PipelineConfig& cfg, std::ostream& log);
/// simulate, build-tensor, decompose, control and report in sequence.
void cmd_pipeline(const PipelineConfig& cfg, std::ostream& log);

/// Builds the comparison from run summaries; throws ConfigError without a
/// full baseline.
ComparisonReport build_report(const std::vector<nlohmann::json>& runs);

}  // namespace cpsdre
