/// Command-line front end of the pipeline.
///
/// Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O
/// failure.

#include "cpsdre/errors.hpp"
#include "cpsdre/kernels.hpp"
#include "cpsdre/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

constexpr int kNumericalFailure = 1;
constexpr int kConfigFailure = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace cpsdre;
  CLI::App app{"Allen-Cahn snapshot tensors, sparse CP rank discovery and reduced SDRE control"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> nt;
  std::optional<std::string> full_integrator;

  const std::map<std::string, std::function<void(const PipelineConfig&)>> commands = {
      {"simulate", [](const PipelineConfig& c) { cmd_simulate(c, std::cout); }},
      {"build-tensor", [](const PipelineConfig& c) { cmd_build_tensor(c, std::cout); }},
      {"decompose", [](const PipelineConfig& c) { cmd_decompose(c, std::cout); }},
      {"control", [](const PipelineConfig& c) { cmd_control(c, std::cout); }},
      {"report", [](const PipelineConfig& c) { cmd_report(c, std::cout); }},
      {"pipeline", [](const PipelineConfig& c) { cmd_pipeline(c, std::cout); }},
  };
  const std::map<std::string, std::string> help = {
      {"simulate", "Uncontrolled Allen-Cahn trajectory (CSV + T3B)"},
      {"build-tensor", "Snapshot tensor over sampled beta (T3B + sidecar JSON)"},
      {"decompose", "CP decompositions and rank estimate of the snapshot tensor"},
      {"control", "SDRE closed-loop runs for the full and reduced models"},
      {"report", "Cost and timing comparison table"},
      {"pipeline", "simulate, build-tensor, decompose, control and report in sequence"},
  };
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "Pipeline configuration JSON")->required();
    sub->add_option("--jobs", jobs, "Worker count (default: logical cores)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed for beta sampling and solver initialization");
    if (name == "simulate" || name == "build-tensor" || name == "pipeline") {
      sub->add_option("--nt", nt, "Override the number of simulation time points")->check(CLI::Range(2, 1000000));
    }
    if (name == "control" || name == "pipeline") {
      sub->add_option("--full-integrator", full_integrator,
                      "Full-order propagation: semi_implicit_closed_loop or explicit_euler");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigFailure;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    PipelineConfig cfg = load_config(config_path);
    if (jobs) cfg.jobs = *jobs;
    if (seed) cfg.set_seed(*seed);
    if (nt) cfg.snapshot.ac.nt = *nt;
    if (full_integrator) {
      try {
        cfg.control.full_integrator = propagation_from_string(*full_integrator);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("--full-integrator: ") + e.what());
      }
    }
    cfg.validate();
    kernels::set_num_threads(cfg.resolved_jobs());
    commands.at(chosen->get_name())(cfg);
  } catch (const NumericalError& e) {
    std::cerr << "cpsdre " << chosen->get_name() << ": numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "cpsdre " << chosen->get_name() << ": " << e.what() << "\n";
    return kConfigFailure;
  }
  return 0;
}
