#include "cpsdre/pipeline.hpp"

#include "cpsdre/artifacts.hpp"
#include "cpsdre/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

namespace cpsdre {

namespace {

using nlohmann::json;

/// Strict view of a JSON object: every key must be consumed.
class Section {
public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path(key) + " has the wrong type");
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return has(key) ? Section(j_.at(key), path(key)) : Section(empty, path(key));
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + path(item.key()));
    }
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::pair<double, double> get_range(Section& s, const std::string& key, std::pair<double, double> fallback) {
  const auto v = s.get<std::vector<double>>(key, {fallback.first, fallback.second});
  if (v.size() != 2) throw ConfigError(s.path(key) + " must be a two-element array");
  return {v[0], v[1]};
}

WeightSpec parse_weight(Section& s, const std::string& key) {
  if (!s.has(key)) {
    s.get<int>(key, 0);
    return {};
  }
  const json& v = s.raw(key);
  WeightSpec w;
  if (v.is_string()) {
    if (v.get<std::string>() != "identity") {
      throw ConfigError(s.path(key) + " must be \"identity\" or {\"scaled_identity\": c}");
    }
    return w;
  }
  if (v.is_object() && v.size() == 1 && v.contains("scaled_identity") && v.at("scaled_identity").is_number()) {
    w.scale = v.at("scaled_identity").get<double>();
    if (!(w.scale > 0.0) || !std::isfinite(w.scale)) {
      throw ConfigError(s.path(key) + ".scaled_identity must be positive and finite");
    }
    return w;
  }
  throw ConfigError(s.path(key) + " must be \"identity\" or {\"scaled_identity\": c}");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <class F>
auto wrap(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

Matrix WeightSpec::build(Eigen::Index n) const { return scale * Matrix::Identity(n, n); }

std::string WeightSpec::describe() const {
  if (scale == 1.0) return "identity";
  return "scaled_identity(" + format_double(scale) + ")";
}

std::string to_string(Actuation a) {
  switch (a) {
    case Actuation::identity: return "identity";
    case Actuation::half_indicators: return "half_indicators";
  }
  return "unknown";
}

Actuation actuation_from_string(const std::string& s) {
  if (s == "identity") return Actuation::identity;
  if (s == "half_indicators") return Actuation::half_indicators;
  throw std::invalid_argument("unknown actuation '" + s + "' (expected identity or half_indicators)");
}

Matrix actuation_matrix(Actuation a, const AcConfig& ac) {
  const auto n = static_cast<Eigen::Index>(ac.nx);
  if (a == Actuation::identity) return Matrix::Identity(n, n);
  const Vector x = spatial_grid(ac);
  const double mid = 0.5 * (ac.x_min + ac.x_max);
  Matrix B = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) B(i, x(i) < mid ? 0 : 1) = 1.0;
  return B;
}

std::string MethodSpec::label() const {
  switch (kind) {
    case Kind::full: return "full";
    case Kind::pgs: return "pgs";
    case Kind::als: return "als";
    case Kind::pgs_alsk: return "pgs+als" + std::to_string(k);
  }
  return "unknown";
}

std::string MethodSpec::stem() const {
  std::string s = label();
  std::replace(s.begin(), s.end(), '+', '_');
  return s;
}

MethodSpec MethodSpec::parse(const std::string& s) {
  if (s == "full") return {Kind::full, 0};
  if (s == "pgs") return {Kind::pgs, 0};
  if (s == "als") return {Kind::als, 0};
  for (const std::string prefix : {"pgs+als", "pgs_als"}) {
    if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
      const std::string digits = s.substr(prefix.size());
      if (digits.find_first_not_of("0123456789") == std::string::npos) {
        const auto k = std::stoul(digits);
        if (k >= 1) return {Kind::pgs_alsk, k};
      }
    }
  }
  throw std::invalid_argument("unknown method '" + s + "' (expected full, pgs, als or pgs+als<k>)");
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  snapshot.seed = s;
  decomposition.als.seed = s;
  decomposition.pgs.seed = s;
}

void PipelineConfig::validate() const {
  wrap("snapshot", [&] { snapshot.validate(); });
  wrap("decomposition.als", [&] { decomposition.als.validate(); });
  wrap("decomposition.pgs", [&] { decomposition.pgs.validate(); });
  if (snapshot.ac.ic.rfind("builtin:", 0) != 0 && !std::filesystem::exists(snapshot.ac.ic)) {
    throw ConfigError("snapshot.ic: file " + snapshot.ac.ic + " does not exist");
  }
  if (control.nt < 2) throw ConfigError("control.nt must be at least 2");
  if (!(control.t1 > control.t0)) throw ConfigError("control.t_span must be increasing");
  if (!(control.stop_tol > 0.0)) throw ConfigError("control.stop_tol must be positive");
  if (control.methods.empty()) throw ConfigError("control.methods must not be empty");
  for (std::size_t i = 0; i < control.methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (control.methods[i] == control.methods[j]) {
        throw ConfigError("control.methods lists " + control.methods[i].label() + " twice");
      }
    }
  }
  if (decomposition.method.kind == MethodSpec::Kind::full) {
    throw ConfigError("decomposition.method must be pgs, als or pgs_alsk");
  }
  if (jobs < 0) throw ConfigError("jobs must be nonnegative");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

int PipelineConfig::resolved_jobs() const {
  if (jobs > 0) return jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<MethodSpec> PipelineConfig::decomposition_methods() const {
  std::vector<MethodSpec> out{decomposition.method};
  for (const auto& m : control.methods) {
    if (m.reduced() && std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  Section top(j, "config");
  cfg.output_dir = resolve(base_dir, top.get<std::string>("output_dir", cfg.output_dir.string()));
  cfg.jobs = top.get<int>("jobs", 0);
  const auto seed = top.get<std::uint64_t>("seed", 42);

  {
    Section s = top.sub("snapshot");
    AcConfig& ac = cfg.snapshot.ac;
    ac.nu = s.get<double>("nu", ac.nu);
    ac.xi = s.get<double>("xi", ac.xi);
    ac.nx = s.get<std::size_t>("nx", ac.nx);
    std::tie(ac.x_min, ac.x_max) = get_range(s, "x_range", {ac.x_min, ac.x_max});
    ac.nt = s.get<std::size_t>("nt", ac.nt);
    std::tie(ac.t_min, ac.t_max) = get_range(s, "t_range", {ac.t_min, ac.t_max});
    ac.integrator = wrap(s.path("integrator"), [&] {
      return ac_integrator_from_string(s.get<std::string>("integrator", to_string(ac.integrator)));
    });
    ac.stabilization = s.get<double>("stabilization", ac.stabilization);
    const std::string ic = s.get<std::string>("ic", ac.ic);
    ac.ic = ic.rfind("builtin:", 0) == 0 ? ic : resolve(base_dir, ic).string();
    cfg.snapshot.n_beta = s.get<std::size_t>("n_beta", cfg.snapshot.n_beta);
    std::tie(cfg.snapshot.beta_min, cfg.snapshot.beta_max) =
        get_range(s, "beta_range", {cfg.snapshot.beta_min, cfg.snapshot.beta_max});
    cfg.snapshot.betas = s.get<std::vector<double>>("betas", {});
    if (!cfg.snapshot.betas.empty() && !s.has("n_beta")) cfg.snapshot.n_beta = cfg.snapshot.betas.size();
    cfg.simulate_beta = s.get<double>("simulate_beta", 0.0);
    s.finish();
  }
  {
    Section d = top.sub("decomposition");
    const std::string method = d.get<std::string>("method", "pgs");
    const auto k = d.get<std::size_t>("k", 1);
    if (method == "pgs_alsk") {
      if (k < 1) throw ConfigError("decomposition.k must be at least 1");
      cfg.decomposition.method = {MethodSpec::Kind::pgs_alsk, k};
    } else if (method == "pgs" || method == "als") {
      cfg.decomposition.method = MethodSpec::parse(method);
    } else {
      throw ConfigError("decomposition.method must be pgs, als or pgs_alsk");
    }
    Section a = d.sub("als");
    AlsConfig& als = cfg.decomposition.als;
    als.rank = a.get<std::size_t>("rank", 2);
    als.tol = a.get<double>("tol", als.tol);
    als.max_iters = a.get<std::size_t>("max_iters", als.max_iters);
    a.finish();
    Section p = d.sub("pgs");
    PgsConfig& pgs = cfg.decomposition.pgs;
    pgs.rank_upper = p.get<std::size_t>("rank_upper", pgs.rank_upper);
    if (p.has("lambda")) {
      const json& l = p.raw("lambda");
      if (l.is_string() && l.get<std::string>() == "auto") {
        pgs.lambda.reset();
      } else if (l.is_number()) {
        pgs.lambda = l.get<double>();
      } else {
        throw ConfigError("decomposition.pgs.lambda must be \"auto\" or a number");
      }
    } else {
      p.get<int>("lambda", 0);
    }
    pgs.tol = p.get<double>("tol", 1e-2);
    pgs.max_iters = p.get<std::size_t>("max_iters", pgs.max_iters);
    pgs.zero_threshold = p.get<double>("zero_threshold", pgs.zero_threshold);
    pgs.gk_steps = p.get<std::size_t>("gk_steps", pgs.gk_steps);
    pgs.path_decay = p.get<double>("path_decay", pgs.path_decay);
    pgs.trim_support = p.get<bool>("trim_support", pgs.trim_support);
    p.finish();
    d.finish();
  }
  {
    Section c = top.sub("control");
    ControlConfig& ctl = cfg.control;
    ctl.Q = parse_weight(c, "Q");
    ctl.R = parse_weight(c, "R");
    ctl.B = wrap(c.path("B"), [&] { return actuation_from_string(c.get<std::string>("B", to_string(ctl.B))); });
    ctl.nt = c.get<std::size_t>("nt", ctl.nt);
    std::tie(ctl.t0, ctl.t1) = get_range(c, "t_span", {ctl.t0, ctl.t1});
    ctl.stop_tol = c.get<double>("stop_tol", ctl.stop_tol);
    ctl.full_integrator = wrap(c.path("full_integrator"), [&] {
      return propagation_from_string(c.get<std::string>("full_integrator", to_string(ctl.full_integrator)));
    });
    if (c.has("methods")) {
      ctl.methods.clear();
      for (const auto& m : c.get<std::vector<std::string>>("methods", {})) {
        ctl.methods.push_back(wrap(c.path("methods"), [&] { return MethodSpec::parse(m); }));
      }
    } else {
      c.get<int>("methods", 0);
    }
    ctl.certify = c.get<bool>("certify", ctl.certify);
    c.finish();
  }
  top.finish();
  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  using oj = nlohmann::ordered_json;
  const AcConfig& ac = cfg.snapshot.ac;
  auto weight = [](const WeightSpec& w) -> oj {
    if (w.scale == 1.0) return "identity";
    return oj{{"scaled_identity", w.scale}};
  };
  oj snap{{"nu", ac.nu},
          {"xi", ac.xi},
          {"nx", ac.nx},
          {"x_range", {ac.x_min, ac.x_max}},
          {"nt", ac.nt},
          {"t_range", {ac.t_min, ac.t_max}},
          {"integrator", to_string(ac.integrator)},
          {"stabilization", ac.stabilization_constant()},
          {"ic", ac.ic},
          {"n_beta", cfg.snapshot.n_beta},
          {"beta_range", {cfg.snapshot.beta_min, cfg.snapshot.beta_max}},
          {"simulate_beta", cfg.simulate_beta}};
  if (!cfg.snapshot.betas.empty()) snap["betas"] = cfg.snapshot.betas;
  const PgsConfig& pgs = cfg.decomposition.pgs;
  oj pgs_j{{"rank_upper", pgs.rank_upper}};
  if (pgs.lambda) {
    pgs_j["lambda"] = *pgs.lambda;
  } else {
    pgs_j["lambda"] = "auto";
  }
  pgs_j["tol"] = pgs.tol;
  pgs_j["max_iters"] = pgs.max_iters;
  pgs_j["zero_threshold"] = pgs.zero_threshold;
  pgs_j["gk_steps"] = pgs.gk_steps;
  pgs_j["path_decay"] = pgs.path_decay;
  pgs_j["trim_support"] = pgs.trim_support;
  const MethodSpec& dm = cfg.decomposition.method;
  oj methods = oj::array();
  for (const auto& m : cfg.control.methods) methods.push_back(m.label());
  return oj{
      {"seed", cfg.seed},
      {"snapshot", snap},
      {"decomposition",
       {{"method", dm.kind == MethodSpec::Kind::pgs_alsk ? std::string("pgs_alsk") : dm.label()},
        {"k", dm.k},
        {"als",
         {{"rank", cfg.decomposition.als.rank},
          {"tol", cfg.decomposition.als.tol},
          {"max_iters", cfg.decomposition.als.max_iters}}},
        {"pgs", pgs_j}}},
      {"control",
       {{"Q", weight(cfg.control.Q)},
        {"R", weight(cfg.control.R)},
        {"B", to_string(cfg.control.B)},
        {"nt", cfg.control.nt},
        {"t_span", {cfg.control.t0, cfg.control.t1}},
        {"stop_tol", cfg.control.stop_tol},
        {"full_integrator", to_string(cfg.control.full_integrator)},
        {"methods", methods},
        {"certify", cfg.control.certify}}},
  };
}

}  // namespace cpsdre
