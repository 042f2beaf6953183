#include "cpsdre/artifacts.hpp"
#include "cpsdre/errors.hpp"
#include "cpsdre/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace cpsdre;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cpsdre_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// A pipeline small enough to run in a few seconds.
json tiny_config(const fs::path& out) {
  return json{{"output_dir", out.string()},
              {"seed", 11},
              {"snapshot", {{"nx", 21}, {"nt", 60}, {"n_beta", 4}}},
              {"decomposition", {{"pgs", {{"rank_upper", 4}}}}},
              {"control", {{"nt", 101}, {"t_span", {0.0, 0.1}}, {"methods", {"full", "pgs"}}}}};
}

json run_record(const std::string& method, const std::string& model, double J, double wall, double care,
                std::size_t n, const std::string& hash) {
  return json{{"method", method},       {"model", model},        {"J_quadrature", J}, {"wall_ms", wall},
              {"care_mean_ms", care},   {"steps", 100},          {"n", n},            {"trajectory_hash", hash},
              {"converged_at", nullptr}, {"unstable_steps", 0}};
}

/// Runs the command-line binary and returns its exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CPSDRE_BINARY + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2);
}

}  // namespace

TEST_CASE("method names parse, label and map to file stems") {
  CHECK(MethodSpec::parse("full") == MethodSpec{MethodSpec::Kind::full, 0});
  CHECK(MethodSpec::parse("pgs+als2") == MethodSpec{MethodSpec::Kind::pgs_alsk, 2});
  CHECK(MethodSpec::parse("pgs_als3") == MethodSpec{MethodSpec::Kind::pgs_alsk, 3});
  CHECK(MethodSpec::parse("pgs+als1").label() == "pgs+als1");
  CHECK(MethodSpec::parse("pgs+als1").stem() == "pgs_als1");
  CHECK_FALSE(MethodSpec::parse("full").reduced());
  CHECK(MethodSpec::parse("als").reduced());
  for (const char* bad : {"pgs+als0", "pgs+als", "pgs+alsx", "tucker", ""}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(MethodSpec::parse(bad), std::invalid_argument);
  }
}

TEST_CASE("configuration defaults and overrides") {
  const fs::path base = temp_dir("cfg");
  const PipelineConfig def = config_from_json(json::object(), base);
  CHECK(def.seed == 42);
  CHECK(def.snapshot.ac.nx == 101);
  CHECK(def.snapshot.n_beta == 50);
  CHECK(def.control.nt == 1001);
  CHECK(def.control.methods.size() == 4);
  CHECK(def.decomposition.pgs.rank_upper == 10);
  CHECK_FALSE(def.decomposition.pgs.lambda.has_value());

  const json j = {{"seed", 5},
                  {"output_dir", "out"},
                  {"decomposition", {{"pgs", {{"lambda", 0.25}}}}},
                  {"control", {{"Q", {{"scaled_identity", 10.0}}}, {"B", "half_indicators"}, {"methods", {"full"}}}}};
  const PipelineConfig cfg = config_from_json(j, base);
  CHECK(cfg.seed == 5);
  CHECK(cfg.snapshot.seed == 5);
  CHECK(cfg.decomposition.pgs.seed == 5);
  CHECK(cfg.output_dir == (base / "out").lexically_normal());
  REQUIRE(cfg.decomposition.pgs.lambda.has_value());
  CHECK(*cfg.decomposition.pgs.lambda == 0.25);
  CHECK(cfg.control.Q.scale == 10.0);
  CHECK(cfg.control.R.scale == 1.0);
  CHECK(cfg.control.B == Actuation::half_indicators);
  CHECK(actuation_matrix(cfg.control.B, cfg.snapshot.ac).cols() == 2);
  REQUIRE(cfg.control.methods.size() == 1);
}

TEST_CASE("configuration errors are ConfigError and name the field") {
  const fs::path base = temp_dir("cfg_err");
  auto message = [&](const json& j) -> std::string {
    try {
      config_from_json(j, base);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message({{"snapshot", {{"nxx", 3}}}}).find("nxx") != std::string::npos);
  CHECK(message({{"snapshot", {{"nx", "many"}}}}).find("nx") != std::string::npos);
  CHECK(message({{"control", {{"methods", {"full", "bogus"}}}}}).find("bogus") != std::string::npos);
  CHECK(message({{"control", {{"methods", {"full", "full"}}}}}).find("twice") != std::string::npos);
  CHECK(message({{"snapshot", {{"ic", "no_such_ic.csv"}}}}).find("no_such_ic.csv") != std::string::npos);
  CHECK_FALSE(message({{"decomposition", {{"pgs", {{"lambda", "often"}}}}}}).empty());
  CHECK_FALSE(message({{"control", {{"Q", "diagonal"}}}}).empty());
  CHECK_THROWS_AS(load_config(base / "missing.json"), ConfigError);
}

TEST_CASE("configuration round trips through its JSON form") {
  const fs::path base = temp_dir("cfg_rt");
  const PipelineConfig cfg = config_from_json(tiny_config(base / "out"), base);
  const json echoed = json::parse(config_to_json(cfg).dump());
  CHECK_FALSE(echoed.contains("output_dir"));
  CHECK_FALSE(echoed.contains("jobs"));
  const PipelineConfig again = config_from_json(echoed, base);
  CHECK(config_to_json(again).dump() == config_to_json(cfg).dump());
}

TEST_CASE("timing fields are recognised and stripped") {
  CHECK(is_timing_field("wall_ms"));
  CHECK(is_timing_field("care_step_ms"));
  CHECK(is_timing_field("cpu_ratio"));
  CHECK(is_timing_field("care_time_ratio"));
  CHECK_FALSE(is_timing_field("J"));
  CHECK_FALSE(is_timing_field("cost_gap_ratio"));
  CHECK_FALSE(is_timing_field("ms"));

  const fs::path dir = temp_dir("strip");
  write_text(dir / "a.json", R"({"J": 1.5, "wall_ms": 3.0, "nested": {"care_mean_ms": 2, "n": 4}})");
  write_text(dir / "b.json", R"({"J": 1.5, "wall_ms": 9.0, "nested": {"care_mean_ms": 7, "n": 4}})");
  CHECK(strip_timing(dir / "a.json") == strip_timing(dir / "b.json"));
  write_text(dir / "a.csv", "method,J,cpu_ms,cpu_ratio\nfull,1,20,1\n");
  CHECK(strip_timing(dir / "a.csv") == "method,J\nfull,1\n");
  write_text(dir / "a.md", "# Title\n\n| method | cpu_ms | J |\n|---|---|---|\n| full | 3 | 1 |\n");
  CHECK(strip_timing(dir / "a.md") == "# Title\n\n| method | J |\n|---|---|\n| full | 1 |\n");
}

TEST_CASE("report rows relative to the full baseline") {
  const std::vector<json> runs = {run_record("full", "full", 100.0, 50.0, 5.0, 101, "aa"),
                                  run_record("pgs", "reduced", 99.0, 5.0, 0.001, 2, "bb")};
  const ComparisonReport rep = build_report(runs);
  REQUIRE(rep.rows.size() == 2);
  const ReportRow& full = rep.rows[0];
  CHECK(full.J_over_J_full == 1.0);
  CHECK(full.cost_gap_ratio == 0.0);
  CHECK(full.cpu_ratio == 1.0);
  CHECK(full.care_time_ratio == 1.0);
  CHECK(full.flags.empty());
  const ReportRow& pgs = rep.rows[1];
  CHECK(pgs.R_used == 2);
  CHECK(pgs.J_over_J_full == doctest::Approx(0.99));
  CHECK(pgs.cost_gap_ratio == doctest::Approx(0.01));
  CHECK(pgs.cpu_ratio == doctest::Approx(0.1));
  CHECK(pgs.care_time_ratio == doctest::Approx(2e-4));
  CHECK(pgs.complexity_ratio == doctest::Approx(8.0 / (101.0 * 101.0 * 101.0)));

  CHECK_THROWS_AS(build_report({runs[1]}), ConfigError);

  const ComparisonReport single = build_report({runs[0]});
  REQUIRE(single.rows.size() == 1);
  CHECK(single.rows[0].cpu_ratio == 1.0);

  const ComparisonReport dup = build_report({runs[0], run_record("als", "reduced", 99.0, 1.0, 0.1, 2, "aa")});
  CHECK(dup.rows[1].flags.find("nondeterministic-timing") != std::string::npos);
}

TEST_CASE("pipeline equals the subcommands run in sequence") {
  const fs::path base = temp_dir("e2e");
  const PipelineConfig a = config_from_json(tiny_config(base / "a"), base);
  const PipelineConfig b = config_from_json(tiny_config(base / "b"), base);
  std::ostringstream log;
  cmd_pipeline(a, log);
  cmd_simulate(b, log);
  cmd_build_tensor(b, log);
  cmd_decompose(b, log);
  cmd_control(b, log);
  cmd_report(b, log);

  const auto da = artifact_digests(a.output_dir), db = artifact_digests(b.output_dir);
  CHECK(da.size() == db.size());
  CHECK(da == db);
  for (const char* name : {"snapshot.t3b", "report.csv", "report.md", "run_full.json", "run_pgs.json",
                           "basis_pgs.bin", "factors_pgs.bin", "trajectory.t3b"}) {
    CAPTURE(name);
    CHECK(da.count(name) == 1);
  }
  // Snapshot: 8-byte magic, three 8-byte dims, then the data.
  CHECK(fs::file_size(a.output_dir / "snapshot.t3b") == 8 + 24 + 21 * 60 * 4 * 8);
  const json run = read_json(a.output_dir / "run_pgs.json");
  CHECK(run.at("model") == "reduced");
}

TEST_CASE("stages fail clearly when their inputs are missing") {
  const fs::path base = temp_dir("missing_stage");
  const PipelineConfig cfg = config_from_json(tiny_config(base / "out"), base);
  std::ostringstream log;
  try {
    cmd_decompose(cfg, log);
    FAIL("expected a missing-input error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("build-tensor") != std::string::npos);
  }
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = temp_dir("cli");
  const fs::path log = dir / "log.txt";

  CHECK(run_cli("simulate --config \"" + (dir / "absent.json").string() + "\"", log) == 2);

  {
    std::ofstream os(dir / "corrupt.csv");
    os << "x,v\n0,0.1\n1,oops\n";
  }
  json corrupt = tiny_config(dir / "out_corrupt");
  corrupt["snapshot"]["ic"] = (dir / "corrupt.csv").string();
  write_config(dir / "corrupt.json", corrupt);
  CHECK(run_cli("simulate --config \"" + (dir / "corrupt.json").string() + "\"", log) == 2);
  CHECK(read_text(log).find("corrupt.csv") != std::string::npos);

  json unknown = tiny_config(dir / "out_unknown");
  unknown["control"]["gain"] = 3;
  write_config(dir / "unknown.json", unknown);
  CHECK(run_cli("control --config \"" + (dir / "unknown.json").string() + "\"", log) == 2);

  json blowup = tiny_config(dir / "out_blowup");
  blowup["snapshot"] = {{"nx", 101}, {"nt", 550}, {"n_beta", 2}, {"integrator", "semi_implicit"}};
  write_config(dir / "blowup.json", blowup);
  CHECK(run_cli("simulate --config \"" + (dir / "blowup.json").string() + "\"", log) == 1);

  json ok = tiny_config(dir / "out_ok");
  write_config(dir / "ok.json", ok);
  CHECK(run_cli("simulate --config \"" + (dir / "ok.json").string() + "\" --jobs 2 --seed 3", log) == 0);
  CHECK(fs::exists(dir / "out_ok" / "trajectory.csv"));
  CHECK(run_cli("bogus --config x", log) == 2);
}
