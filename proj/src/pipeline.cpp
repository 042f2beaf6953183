#include "cpsdre/pipeline.hpp"

#include "cpsdre/artifacts.hpp"
#include "cpsdre/errors.hpp"
#include "cpsdre/kernels.hpp"
#include "cpsdre/rom.hpp"
#include "cpsdre/tensor_io.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <ostream>
#include <sstream>
#include <thread>

namespace cpsdre {

namespace {

using oj = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::filesystem::path prepare(const PipelineConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return cfg.output_dir / name;
}

std::filesystem::path require(const PipelineConfig& cfg, const std::string& name, const std::string& producer) {
  const auto p = cfg.output_dir / name;
  if (!std::filesystem::exists(p)) {
    throw std::runtime_error("missing " + p.string() + "; run `cpsdre " + producer + "` first");
  }
  return p;
}

std::string hash_matrix(const Matrix& m) {
  return fnv1a_hex(std::string_view(reinterpret_cast<const char*>(m.data()),
                                    static_cast<std::size_t>(m.size()) * sizeof(double)));
}

oj optional_time(const std::optional<double>& t) { return t ? oj(*t) : oj(nullptr); }

/// Runs f(i) for i in [0, n) on `jobs` workers. Exceptions are rethrown in
/// index order once all workers finish.
template <class F>
void fan_out(std::size_t n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Vector& x, const Vector& times,
                          const Matrix& traj) {
  std::string s = "x";
  for (Eigen::Index j = 0; j < times.size(); ++j) s += ",t=" + format_double(times(j));
  s += "\n";
  for (Eigen::Index i = 0; i < traj.rows(); ++i) {
    s += format_double(x(i));
    for (Eigen::Index j = 0; j < traj.cols(); ++j) s += "," + format_double(traj(i, j));
    s += "\n";
  }
  write_text(path, s);
}

struct ControlOutcome {
  SdreRun run;
  Matrix lifted;
  std::size_t r = 0;
  oj basis;
};

ControlOutcome run_method(const PipelineConfig& cfg, const MethodSpec& method) {
  const AcConfig& ac = cfg.snapshot.ac;
  const ControlConfig& ctl = cfg.control;
  const Vector v0 = initial_condition(ac);
  const Matrix B = actuation_matrix(ctl.B, ac);
  const auto m = B.cols();
  StateMatrixFn A_full = [ac](const Vector& v) { return assemble_A(v, ac); };

  SdreOptions opts;
  opts.nt = ctl.nt;
  opts.t0 = ctl.t0;
  opts.t1 = ctl.t1;
  opts.stop_tol = ctl.stop_tol;
  opts.certify = ctl.certify;

  ControlOutcome out;
  if (!method.reduced()) {
    opts.propagation = ctl.full_integrator;
    if (opts.propagation == Propagation::semi_implicit_closed_loop) {
      opts.implicit_part = ac.nu * laplacian(ac.nx, ac.dx());
    }
    const auto n = static_cast<Eigen::Index>(ac.nx);
    out.run = sdre_trajectory(A_full, B, ctl.Q.build(n), ctl.R.build(m), v0, opts);
    out.lifted = out.run.states;
    out.r = ac.nx;
    return out;
  }

  require(cfg, "factors_" + method.stem() + ".json", "decompose");
  const CpFactors f = read_factors(cfg.output_dir / ("factors_" + method.stem()));
  ReducedModel rm = projection_basis(f, f.rank());
  rm.source.solver = method.label();
  write_reduced_model(cfg.output_dir / ("basis_" + method.stem()), rm);
  const ReducedOperators ops = reduce_dynamics(rm, A_full, B);
  opts.propagation = Propagation::explicit_euler;
  opts.observe = rm.P;
  const auto r = static_cast<Eigen::Index>(rm.r);
  out.run = sdre_trajectory(ops.A_red, ops.B_red, ctl.Q.build(r), ctl.R.build(m), restrict_state(rm, v0), opts);
  out.lifted = rm.P * out.run.states;
  out.r = rm.r;
  out.basis = {{"solver", rm.source.solver},
               {"rank_estimate", rm.source.rank_estimate},
               {"factor_hash", rm.source.factor_hash}};
  return out;
}

void write_run(const PipelineConfig& cfg, const MethodSpec& method, const ControlOutcome& o) {
  const SdreRun& run = o.run;
  const auto N = run.states.cols();
  const auto m = run.controls.rows();

  std::string csv = "t,state_inf,v_inf,J_cum,residual";
  for (Eigen::Index c = 0; c < m; ++c) csv += ",u_" + std::to_string(c + 1);
  csv += "\n";
  const double dt = N > 1 ? run.times(1) - run.times(0) : 0.0;
  const Matrix Q = cfg.control.Q.build(run.states.rows());
  const Matrix R = cfg.control.R.build(m);
  // Same integrand and summation order as running_cost, so the last entry
  // equals the run's J.
  auto integrand = [&](Eigen::Index i) {
    const Eigen::Index ui = std::min(i, N - 2);
    const double ur = m > 0 ? run.controls.col(ui).dot(R * run.controls.col(ui)) : 0.0;
    return run.states.col(i).dot(Q * run.states.col(i)) + ur;
  };
  double J_cum = 0.0;
  double left = integrand(0);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (i > 0) {
      const double right = integrand(i);
      J_cum += 0.5 * dt * (left + right);
      left = right;
    }
    csv += format_double(run.times(i)) + "," + format_double(run.states.col(i).cwiseAbs().maxCoeff()) + "," +
           format_double(o.lifted.col(i).cwiseAbs().maxCoeff()) + "," + format_double(J_cum) + ",";
    if (i + 1 < N) csv += format_double(run.residuals[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < m; ++c) {
      csv += ",";
      if (i + 1 < N) csv += format_double(run.controls(c, i));
    }
    csv += "\n";
  }
  write_text(prepare(cfg, "run_" + method.stem() + ".csv"), csv);

  std::string states = "t";
  for (Eigen::Index k = 0; k < o.lifted.rows(); ++k) states += ",v_" + std::to_string(k);
  states += "\n";
  for (Eigen::Index i = 0; i < N; ++i) {
    states += format_double(run.times(i));
    for (Eigen::Index k = 0; k < o.lifted.rows(); ++k) states += "," + format_double(o.lifted(k, i));
    states += "\n";
  }
  write_text(prepare(cfg, "states_" + method.stem() + ".csv"), states);

  double max_residual = 0.0;
  for (double r : run.residuals) max_residual = std::max(max_residual, r);
  double care_max = 0.0, care_total = 0.0;
  for (double t : run.care_ms) {
    care_max = std::max(care_max, t);
    care_total += t;
  }
  oj j{{"method", method.label()},
       {"model", method.reduced() ? "reduced" : "full"},
       {"n", run.states.rows()},
       {"m", m},
       {"nx", cfg.snapshot.ac.nx},
       {"propagation", run.propagation},
       {"Q", cfg.control.Q.describe()},
       {"R", cfg.control.R.describe()},
       {"B", to_string(cfg.control.B)},
       {"initial_state", method.reduced() ? "P' v(0)" : "v(0)"},
       {"nt", cfg.control.nt},
       {"t_span", {cfg.control.t0, cfg.control.t1}},
       {"stop_tol", cfg.control.stop_tol},
       {"J_quadrature", run.J},
       {"J_terminal", run.J_terminal},
       {"converged_at", optional_time(run.converged_at)},
       {"steps", N - 1},
       {"unstable_steps", run.unstable_steps},
       {"max_care_residual", max_residual},
       {"trajectory_hash", hash_matrix(run.states)},
       {"wall_ms", run.wall_ms},
       {"care_mean_ms", run.mean_care_ms()},
       {"care_total_ms", care_total},
       {"care_max_ms", care_max},
       {"care_step_ms", run.care_ms}};
  if (method.reduced()) j["basis"] = o.basis;
  write_json(prepare(cfg, "run_" + method.stem() + ".json"), j);
}

}  // namespace

void cmd_simulate(const PipelineConfig& cfg, std::ostream& log) {
  const AcConfig& ac = cfg.snapshot.ac;
  const auto t0 = Clock::now();
  const Matrix traj = simulate(ac, cfg.simulate_beta);
  const double wall = ms_since(t0);
  const Vector times = Vector::LinSpaced(static_cast<Eigen::Index>(ac.nt), ac.t_min, ac.t_max);
  write_trajectory_csv(prepare(cfg, "trajectory.csv"), spatial_grid(ac), times, traj);
  write_t3b(prepare(cfg, "trajectory.t3b"), Tensor3(ac.nx, ac.nt, 1, std::vector<double>(traj.data(), traj.data() + traj.size())));
  oj j{{"command", "simulate"},
       {"dims", {traj.rows(), traj.cols()}},
       {"beta", cfg.simulate_beta},
       {"max_abs", traj.cwiseAbs().maxCoeff()},
       {"snapshot", config_to_json(cfg)["snapshot"]},
       {"wall_ms", wall}};
  write_json(prepare(cfg, "simulate.json"), j);
  log << "simulate: " << traj.rows() << " x " << traj.cols() << " trajectory (beta = " << cfg.simulate_beta
      << ", integrator " << to_string(ac.integrator) << ") -> " << (cfg.output_dir / "trajectory.csv").string()
      << "\n";
}

void cmd_build_tensor(const PipelineConfig& cfg, std::ostream& log) {
  kernels::set_num_threads(cfg.resolved_jobs());
  const auto t0 = Clock::now();
  const SnapshotData snap = build_snapshot_tensor(cfg.snapshot);
  const double wall = ms_since(t0);
  write_t3b(prepare(cfg, "snapshot.t3b"), snap.tensor);
  const auto d = snap.tensor.dims();
  oj j{{"dims", {d[0], d[1], d[2]}},
       {"betas", snap.betas},
       {"seed", cfg.snapshot.seed},
       {"frobenius_norm", frob_norm(snap.tensor)},
       {"config", config_to_json(cfg)["snapshot"]},
       {"data_generation", "v' = A(v) v + beta v (u = beta v)"},
       {"wall_ms", wall}};
  write_json(prepare(cfg, "snapshot.json"), j);
  log << "build-tensor: " << d[0] << " x " << d[1] << " x " << d[2] << " tensor -> "
      << (cfg.output_dir / "snapshot.t3b").string() << "\n";
}

std::vector<DecompositionSummary> cmd_decompose(const PipelineConfig& cfg, std::ostream& log) {
  kernels::set_num_threads(cfg.resolved_jobs());
  const Tensor3 t = read_t3b(require(cfg, "snapshot.t3b", "build-tensor"));
  const auto& dc = cfg.decomposition;
  std::optional<PgsResult> pgs_run;
  double pgs_ms = 0.0;
  auto pgs_once = [&]() -> const PgsResult& {
    if (!pgs_run) {
      const auto t0 = Clock::now();
      pgs_run = pgs(t, dc.pgs);
      pgs_ms = ms_since(t0);
    }
    return *pgs_run;
  };

  std::vector<DecompositionSummary> out;
  oj runs = oj::array();
  for (const MethodSpec& m : cfg.decomposition_methods()) {
    DecompositionSummary s;
    s.method = m;
    CpFactors f;
    const SolveTrace* trace = nullptr;
    double wall = 0.0;
    AlsResult als_run;
    PgsAlskResult combo;
    if (m.kind == MethodSpec::Kind::pgs) {
      const PgsResult& r = pgs_once();
      f = truncate_factors(r.factors, dc.pgs.zero_threshold);
      trace = &r.trace;
      s.rank_estimate = r.rank_estimate;
      s.rel_error = r.rel_error;
      s.iterations = r.iterations;
      wall = pgs_ms;
    } else if (m.kind == MethodSpec::Kind::als) {
      const auto t0 = Clock::now();
      als_run = als(t, dc.als);
      wall = ms_since(t0);
      f = als_run.factors;
      trace = &als_run.trace;
      s.rank_estimate = f.rank();
      s.rel_error = als_run.rel_error;
      s.iterations = als_run.iterations;
    } else {
      const PgsResult& r = pgs_once();
      const auto t0 = Clock::now();
      combo = pgs_alsk(t, m.k, r, dc.pgs.zero_threshold, dc.als);
      wall = pgs_ms + ms_since(t0);
      f = combo.als.factors;
      trace = &combo.als.trace;
      s.rank_estimate = combo.pgs.rank_estimate;
      s.rel_error = combo.als.rel_error;
      s.iterations = combo.als.iterations;
    }
    s.rank = f.rank();
    s.stop_reason = trace->stop_reason;
    oj meta{{"method", m.label()},
            {"rank_estimate", s.rank_estimate},
            {"rel_error", s.rel_error},
            {"iterations", s.iterations},
            {"stop_reason", s.stop_reason},
            {"factor_hash", factor_hash(f)}};
    write_factors(prepare(cfg, "factors_" + m.stem()), f, meta);
    std::ostringstream csv;
    trace->write_csv(csv);
    write_text(prepare(cfg, "trace_" + m.stem() + ".csv"), csv.str());
    oj entry = meta;
    entry["rank"] = s.rank;
    entry["warnings"] = trace->warnings;
    entry["wall_ms"] = wall;
    runs.push_back(entry);
    log << "decompose: " << m.label() << " rank estimate " << s.rank_estimate << ", factor rank " << s.rank
        << ", relative error " << s.rel_error << " (" << s.iterations << " iterations, " << s.stop_reason << ")\n";
    out.push_back(std::move(s));
  }
  write_json(prepare(cfg, "decompose.json"),
             oj{{"tensor_dims", {t.dim1(), t.dim2(), t.dim3()}},
                {"decomposition", config_to_json(cfg)["decomposition"]},
                {"runs", runs}});
  return out;
}

void cmd_control(const PipelineConfig& cfg, std::ostream& log) {
  const auto& methods = cfg.control.methods;
  std::vector<ControlOutcome> outcomes(methods.size());
  // Each run is sequential in time and uses serial linear algebra, so
  // running methods concurrently does not change any result.
  fan_out(methods.size(), cfg.resolved_jobs(), [&](std::size_t i) {
    try {
      outcomes[i] = run_method(cfg, methods[i]);
    } catch (const NumericalError& e) {
      throw NumericalError("control method " + methods[i].label() + ": " + e.what());
    }
    write_run(cfg, methods[i], outcomes[i]);
  });
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const SdreRun& run = outcomes[i].run;
    log << "control: " << methods[i].label() << " (n = " << run.states.rows() << ", " << run.propagation
        << ") J = " << run.J << ", converged_at = "
        << (run.converged_at ? std::to_string(*run.converged_at) : std::string("none"))
        << ", mean CARE time " << run.mean_care_ms() << " ms\n";
  }
}

void cmd_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  cmd_simulate(cfg, log);
  cmd_build_tensor(cfg, log);
  cmd_decompose(cfg, log);
  cmd_control(cfg, log);
  cmd_report(cfg, log);
}

}  // namespace cpsdre
