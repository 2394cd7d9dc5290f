#include "vreg/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "vreg/besov.hpp"
#include "vreg/exponents.hpp"
#include "vreg/regularity.hpp"

namespace vreg {

using nlohmann::json;

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section = "experiment";
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated [section]");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    cfg.kv[section + "." + key] = value;
  }
  return cfg;
}

void ExperimentConfig::apply_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || assignment.find('.') == std::string::npos ||
      assignment.find('.') > eq) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  kv[assignment.substr(0, eq)] = assignment.substr(eq + 1);
}

void ExperimentConfig::merge_defaults(const ExperimentConfig& defaults) {
  for (const auto& [k, v] : defaults.kv) {
    kv.emplace(k, v);
  }
}

std::string ExperimentConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

double ExperimentConfig::get_num(const std::string& key, double fallback) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("field `" + key + "`: not a number: " + it->second);
  }
}

int ExperimentConfig::get_int(const std::string& key, int fallback) const {
  const double v = get_num(key, fallback);
  if (v != std::floor(v)) throw ConfigError("field `" + key + "`: not an integer");
  return static_cast<int>(v);
}

// ---------------------------------------------------------------------------
// presets

const std::map<std::string, std::string>& builtin_presets() {
  static const std::map<std::string, std::string> presets = {
      {"pLaplace1d-p3", R"(
[experiment]
kind = solve
seed = 1
[problem]
dim = 1
lo = 0
hi = 1
res = 257
mode = dirichlet
integrand = p-energy
p = 3
q = 3
alpha = 1
mu = 1e-8
nu = 0.05
lambda = 2
scale = 0.33333333333333331
f = const:1
gD = zero
[solver]
eps0 = 1e-2
rho = 0.1
kmax = 7
max_iterations = 80000
gradient_tolerance = 1e-9
)"},
      {"poisson1d-p2", R"(
[experiment]
kind = solve
seed = 1
[problem]
dim = 1
lo = 0
hi = 1
res = 257
mode = dirichlet
integrand = p-energy
p = 2
q = 2
alpha = 1
mu = 0
nu = 0.5
lambda = 2
scale = 0.5
f = const:1
gD = zero
[solver]
eps0 = 1e-4
rho = 0.1
kmax = 3
max_iterations = 20000
gradient_tolerance = 1e-10
)"},
      {"radialNeumann2d", R"(
[experiment]
kind = solve
seed = 1
[problem]
dim = 2
lo = 0,0
hi = 1,1
res = 33,33
mode = neumann
integrand = p-energy
p = 2.5
q = 2.5
alpha = 1
mu = 1e-4
nu = 0.1
lambda = 3
f = cospi
gN = zero
[solver]
eps0 = 1e-4
rho = 0.1
kmax = 3
max_iterations = 8000
gradient_tolerance = 1e-8
)"},
      {"autonomous-gap", R"(
[experiment]
kind = gap
seed = 1
[problem]
dim = 2
lo = 0,0
hi = 1,1
res = 17,17
mode = dirichlet
integrand = p-energy
p = 2.2
q = 2.2
alpha = 1
mu = 1e-6
nu = 0.1
lambda = 2
f = const:1
gD = zero
[solver]
eps0 = 1e-2
rho = 0.25
kmax = 6
max_iterations = 12000
gradient_tolerance = 1e-9
[gap]
competitor = self
)"},
      {"doublephase-nogap", R"(
[experiment]
kind = gap
seed = 1
[problem]
dim = 2
lo = 0,0
hi = 1,1
res = 25,25
mode = dirichlet
integrand = double-phase
p = 2
q = 2.4
alpha = 1
mu = 1e-6
nu = 0.25
lambda = 3
coeff = power:1,1,0.3,0.35
f = zero
gD = linear:0,1,0
[solver]
eps0 = 1e-1
rho = 0.35
kmax = 10
max_iterations = 12000
gradient_tolerance = 1e-9
[gap]
competitor = self
)"},
      {"checkerboard-gap", R"(
[experiment]
kind = gap
seed = 1
[problem]
dim = 2
lo = -1,-1
hi = 1,1
res = 33,33
mode = dirichlet
integrand = double-phase
p = 1.7
q = 2.6
alpha = 0.5
mu = 1e-8
nu = 0.05
lambda = 6
coeff = checkerboard:4,0.5,0,0
f = zero
gD = quadrant-ramp
[solver]
eps0 = 1e-2
rho = 0.25
kmax = 5
max_iterations = 6000
gradient_tolerance = 1e-7
[gap]
competitor = quadrant-ramp
)"},
  };
  return presets;
}

// ---------------------------------------------------------------------------
// field functions

namespace {

double ramp_profile(double theta) {
  // +1 on quadrant I, -1 on quadrant III, cosine ramps across II and IV
  const double pi = 3.14159265358979323846;
  theta = std::fmod(theta + 2.0 * pi, 2.0 * pi);
  if (theta <= 0.5 * pi) return 1.0;
  if (theta <= pi) return std::cos(2.0 * (theta - 0.5 * pi));
  if (theta <= 1.5 * pi) return -1.0;
  return -std::cos(2.0 * (theta - 1.5 * pi));
}

double ramp_profile_deriv(double theta) {
  const double pi = 3.14159265358979323846;
  theta = std::fmod(theta + 2.0 * pi, 2.0 * pi);
  if (theta <= 0.5 * pi || (theta > pi && theta <= 1.5 * pi)) return 0.0;
  if (theta <= pi) return -2.0 * std::sin(2.0 * (theta - 0.5 * pi));
  return 2.0 * std::sin(2.0 * (theta - 1.5 * pi));
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

FieldFn make_field_fn(const std::string& desc, int m) {
  if (desc.empty() || desc == "zero") return nullptr;
  const auto colon = desc.find(':');
  const std::string name = desc.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : desc.substr(colon + 1);
  if (name == "const") {
    auto vals = parse_list(args);
    if (vals.empty()) throw ConfigError("const field needs a value");
    return [vals, m](std::span<const double>, std::span<double> out) {
      for (int c = 0; c < m; ++c) out[c] = vals[c < static_cast<int>(vals.size()) ? c : 0];
    };
  }
  if (name == "one") {
    return [m](std::span<const double>, std::span<double> out) {
      for (int c = 0; c < m; ++c) out[c] = 1.0;
    };
  }
  if (name == "cospi") {
    return [m](std::span<const double> x, std::span<double> out) {
      const double pi = 3.14159265358979323846;
      double v = std::cos(pi * x[0]);
      if (x.size() > 1) v *= std::cos(pi * x[1]);
      for (int c = 0; c < m; ++c) out[c] = v;
    };
  }
  if (name == "linear") {
    auto vals = parse_list(args);  // a0, a1 [, a2]
    return [vals, m](std::span<const double> x, std::span<double> out) {
      double v = vals.empty() ? 0.0 : vals[0];
      for (std::size_t a = 0; a < x.size(); ++a) {
        if (a + 1 < vals.size()) v += vals[a + 1] * x[a];
      }
      for (int c = 0; c < m; ++c) out[c] = v;
    };
  }
  if (name == "quadrant-ramp") {
    return [m](std::span<const double> x, std::span<double> out) {
      const double theta = std::atan2(x.size() > 1 ? x[1] : 0.0, x[0]);
      for (int c = 0; c < m; ++c) out[c] = ramp_profile(theta);
    };
  }
  throw ConfigError("unknown field function: " + desc);
}

Coefficient coefficient_from_config(const std::string& desc) {
  Coefficient co;
  if (desc.empty() || desc == "none" || desc == "zero") return co;
  const auto colon = desc.find(':');
  const std::string name = desc.substr(0, colon);
  auto args = parse_list(colon == std::string::npos ? "" : desc.substr(colon + 1));
  auto arg = [&](std::size_t i, double fb) { return i < args.size() ? args[i] : fb; };
  if (name == "const") {
    co.kind = Coefficient::Kind::Const;
    co.a0 = arg(0, 1.0);
    return co;
  }
  if (name == "power") {
    co.kind = Coefficient::Kind::Power;
    co.a0 = arg(0, 1.0);
    co.gamma = arg(1, 1.0);
    co.center = {arg(2, 0.0), arg(3, 0.0)};
    co.declared_holder = std::min(1.0, co.gamma);
    return co;
  }
  if (name == "step") {
    co.kind = Coefficient::Kind::Step;
    co.a0 = arg(0, 1.0);
    co.center = {arg(1, 0.5), arg(2, 0.0)};
    return co;
  }
  if (name == "checkerboard") {
    co.kind = Coefficient::Kind::Checkerboard;
    co.a0 = arg(0, 1.0);
    co.gamma = arg(1, 1.0);
    co.center = {arg(2, 0.0), arg(3, 0.0)};
    co.declared_holder = std::min(1.0, co.gamma);
    return co;
  }
  throw ConfigError("unknown coefficient: " + desc);
}

}  // namespace

ClosedFormField checkerboard_competitor() {
  ClosedFormField f;
  f.value = [](std::span<const double> x, std::span<double> out) {
    out[0] = ramp_profile(std::atan2(x[1], x[0]));
  };
  f.gradient = [](std::span<const double> x, std::span<double> out) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    const double theta = std::atan2(x[1], x[0]);
    const double wd = ramp_profile_deriv(theta);
    if (r2 == 0.0) {
      out[0] = out[1] = 0.0;
      return;
    }
    out[0] = -wd * x[1] / r2;
    out[1] = wd * x[0] / r2;
  };
  f.singular_points = {{0.0, 0.0}};
  return f;
}

ProblemSpec problem_from_config(const ExperimentConfig& cfg) {
  GrowthParams gp;
  gp.p = cfg.get_num("problem.p", 2.0);
  gp.q = cfg.get_num("problem.q", gp.p);
  gp.alpha = cfg.get_num("problem.alpha", 1.0);
  gp.mu = cfg.get_num("problem.mu", 0.0);
  gp.nu = cfg.get_num("problem.nu", 0.25);
  gp.Lambda = cfg.get_num("problem.lambda", 4.0);
  gp.n = cfg.get_int("problem.dim", 1);
  gp.m = cfg.get_int("problem.m", 1);

  const std::string kind = cfg.get("problem.integrand", "p-energy");
  IntegrandSpec spec = IntegrandSpec::p_energy(gp);
  if (kind == "p-energy") {
    spec = IntegrandSpec::p_energy(gp, cfg.get_num("problem.scale", 1.0));
  } else if (kind == "double-phase") {
    spec = IntegrandSpec::double_phase(gp, coefficient_from_config(cfg.get("problem.coeff", "none")));
  } else if (kind == "radial-modulated") {
    spec = IntegrandSpec::radial_modulated(gp, coefficient_from_config(cfg.get("problem.coeff", "none")),
                                           cfg.get_num("problem.scale", 1.0));
  } else {
    throw ConfigError("unknown integrand kind: " + kind);
  }

  GridSpec grid;
  grid.dim = gp.n;
  auto lo = parse_list(cfg.get("problem.lo", "0"));
  auto hi = parse_list(cfg.get("problem.hi", "1"));
  auto res = parse_list(cfg.get("problem.res", "65"));
  for (int a = 0; a < grid.dim; ++a) {
    grid.lo[a] = a < static_cast<int>(lo.size()) ? lo[a] : lo.at(0);
    grid.hi[a] = a < static_cast<int>(hi.size()) ? hi[a] : hi.at(0);
    grid.res[a] = static_cast<int>(a < static_cast<int>(res.size()) ? res[a] : res.at(0));
  }
  if (grid.dim == 1) grid.res[1] = 1;

  ProblemSpec prob;
  const std::string mode = cfg.get("problem.mode", "dirichlet");
  if (mode == "dirichlet") {
    prob.mode = BoundaryMode::Dirichlet;
  } else if (mode == "neumann") {
    prob.mode = BoundaryMode::Neumann;
  } else if (mode == "mixed") {
    prob.mode = BoundaryMode::Mixed;
    const std::string tags = cfg.get("problem.tags", "DDDD");
    for (int f = 0; f < 4 && f < static_cast<int>(tags.size()); ++f) {
      grid.tags[f] = (tags[f] == 'N' || tags[f] == 'n') ? BoundaryTag::Neumann : BoundaryTag::Dirichlet;
    }
    grid.corner_mode = cfg.get_int("problem.corner", 0) != 0;
  } else {
    throw ConfigError("unknown boundary mode: " + mode);
  }
  prob.integrand = spec;
  prob.grid = grid;
  prob.forcing = make_field_fn(cfg.get("problem.f", "zero"), gp.m);
  prob.dirichlet_data = make_field_fn(cfg.get("problem.gD", "zero"), gp.m);
  prob.neumann_data = make_field_fn(cfg.get("problem.gN", "zero"), gp.m);
  return prob;
}

SolverConfig solver_from_config(const ExperimentConfig& cfg) {
  SolverConfig sc;
  sc.eps0 = cfg.get_num("solver.eps0", sc.eps0);
  sc.rho = cfg.get_num("solver.rho", sc.rho);
  sc.k_max = cfg.get_int("solver.kmax", sc.k_max);
  sc.max_iterations = cfg.get_int("solver.max_iterations", sc.max_iterations);
  sc.gradient_tolerance = cfg.get_num("solver.gradient_tolerance", sc.gradient_tolerance);
  sc.armijo_shrink = cfg.get_num("solver.armijo_shrink", sc.armijo_shrink);
  sc.armijo_c1 = cfg.get_num("solver.armijo_c1", sc.armijo_c1);
  sc.mu_floor = cfg.get_num("solver.mu_floor", sc.mu_floor);
  sc.gap_tolerance = cfg.get_num("solver.gap_tolerance", sc.gap_tolerance);
  if (!(sc.rho > 0.0 && sc.rho < 1.0)) throw ConfigError("solver.rho must lie in (0,1)");
  if (!(sc.eps0 > 0.0 && sc.gradient_tolerance > 0.0)) {
    throw ConfigError("solver tolerances must be positive");
  }
  return sc;
}

// ---------------------------------------------------------------------------
// report serialization

namespace {

json report_to_json(const SolveReport& rep) {
  json j;
  j["final_energy"] = rep.final_energy;
  j["el_residual"] = rep.el_residual;
  j["converged"] = rep.converged;
  j["stress_qprime_norm"] = rep.stress_qprime_norm;
  j["relaxed_estimate"] = rep.relaxed_estimate;
  j["richardson_estimate"] = rep.richardson_estimate;
  j["qterm_slope"] = rep.qterm_slope;
  j["lavrentiev_flag"] = rep.lavrentiev_flag;
  j["notes"] = rep.notes;
  json trace = json::array();
  for (const auto& s : rep.epsilon_trace) {
    trace.push_back({{"epsilon", s.epsilon},
                     {"energy", s.energy},
                     {"qterm", s.qterm},
                     {"grad_residual", s.grad_residual},
                     {"iterations", s.iterations},
                     {"converged", s.converged},
                     {"w1p_change", s.w1p_change}});
  }
  j["epsilon_trace"] = trace;
  return j;
}

json estimate_to_json(const BesovEstimate& e) {
  json j;
  j["slope"] = std::isfinite(e.slope) ? json(e.slope) : json("inf");
  j["r_squared"] = e.r_squared;
  j["saturated"] = e.saturated;
  j["order"] = e.order;
  j["s"] = e.s;
  j["p_norm"] = e.p_norm;
  json pd = json::array();
  for (const auto& [dir, slope] : e.per_direction) {
    pd.push_back({{"direction", {dir[0], dir[1]}}, {"slope", slope}});
  }
  j["per_direction"] = pd;
  j["warnings"] = e.warnings;
  return j;
}

json gap_to_json(const GapReport& g) {
  json j;
  j["relaxed_estimate"] = g.relaxed_estimate;
  j["richardson_estimate"] = g.richardson_estimate;
  j["competitor_energy"] =
      std::isfinite(g.competitor_energy) ? json(g.competitor_energy) : json("infinite");
  j["gap_indicator"] = std::isfinite(g.gap_indicator) ? json(g.gap_indicator) : json("undefined");
  j["competitor_diverged"] = g.competitor_diverged;
  j["gap_flagged"] = g.gap_flagged;
  j["qterm_slope"] = g.qterm_slope;
  j["tolerance"] = g.tolerance;
  return j;
}

struct ArtifactWriter {
  std::filesystem::path dir;
  std::vector<std::pair<std::string, std::string>> files;  // name -> content

  void add(const std::string& name, const std::string& content) { files.emplace_back(name, content); }

  std::vector<std::string> flush(const json& meta) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["meta"] = meta;
    json list = json::array();
    std::sort(files.begin(), files.end());
    for (const auto& [name, content] : files) {
      std::ofstream os(dir / name, std::ios::binary);
      os << content;
      list.push_back({{"name", name},
                      {"bytes", content.size()},
                      {"fnv1a64", [&] {
                         std::ostringstream h;
                         h << std::hex << std::setw(16) << std::setfill('0')
                           << fnv1a64({reinterpret_cast<const unsigned char*>(content.data()),
                                       content.size()});
                         return h.str();
                       }()}});
    }
    manifest["files"] = list;
    std::ofstream os(dir / "manifest.json", std::ios::binary);
    os << manifest.dump(2) << '\n';
    std::vector<std::string> names;
    for (const auto& [name, content] : files) names.push_back(name);
    names.push_back("manifest.json");
    return names;
  }
};

Scenario scenario_from_config(const ExperimentConfig& cfg) {
  Scenario sc;
  sc.n = cfg.get_int("scenario.n", 2);
  sc.p = cfg.get_num("scenario.p", 2.0);
  sc.q = cfg.get_num("scenario.q", sc.p);
  sc.alpha = cfg.get_num("scenario.alpha", 1.0);
  if (cfg.has("scenario.beta")) {
    sc.beta = cfg.get_num("scenario.beta", 1.0);
    sc.fine_index = cfg.get_int("scenario.fine", 1);
  }
  const std::string bc = cfg.get("scenario.bc", "dirichlet");
  sc.bc = bc == "neumann" ? Bc::Neumann : (bc == "mixed" ? Bc::Mixed : Bc::Dirichlet);
  sc.radial = cfg.get_int("scenario.radial", 0) != 0;
  sc.autonomous = cfg.get_int("scenario.autonomous", 0) != 0;
  sc.homogeneous_boundary = cfg.get_int("scenario.homogeneous", 1) != 0;
  sc.apriori_w1q = cfg.get_int("scenario.apriori_w1q", 0) != 0;
  if (cfg.has("scenario.g_regularity")) sc.g_regularity = cfg.get_num("scenario.g_regularity", 1.0);
  return sc;
}

std::string exponents_table(const Scenario& sc, const ExponentReport& rep,
                            const IterationTrace& tr) {
  std::ostringstream os;
  os << std::left;
  auto row = [&](const std::string& k, const std::string& v) {
    os << "  " << std::setw(28) << k << v << '\n';
  };
  os << "scenario (n=" << sc.n << ", p=" << sc.p << ", q=" << sc.q << ", alpha=" << sc.alpha
     << ")\n";
  row("delta_predicted", fmt17(rep.delta_predicted));
  for (const auto& [k, v] : rep.q_upper_bounds) row("q_bound." + k, fmt17(v));
  row("singular_dim_bound", fmt17(rep.singular_dim_bound));
  row("kappa_infinity", fmt17(tr.kappa_infinity));
  row("iteration_limit", tr.applicable ? fmt17(tr.limit) : "inapplicable");
  row("boundary_regular", rep.boundary_regular.holds ? "true" : "false");
  row("neumann_delta_cap", rep.delta_neumann_cap ? "delta_0 > 1/2 (unquantified)" : "none");
  return os.str();
}

json trace_to_json(const IterationTrace& tr) {
  json j;
  j["applicable"] = tr.applicable;
  j["reason"] = tr.reason;
  j["deltas"] = tr.deltas;
  j["kappa_infinity"] = tr.kappa_infinity;
  j["limit"] = tr.limit;
  j["neumann_capped"] = tr.neumann_capped;
  j["epsilon_slack"] = tr.epsilon_slack;
  json steps = json::array();
  for (const auto& s : tr.steps) {
    json e;
    e["delta"] = s.delta;
    e["branch"] = std::string(1, s.branch);
    e["tau1"] = std::isfinite(s.tau1) ? json(s.tau1) : json("inf");
    e["tau2"] = std::isfinite(s.tau2) ? json(s.tau2) : json("inf");
    e["sigma"] = s.sigma;
    e["xi"] = std::isfinite(s.xi) ? json(s.xi) : json("inf");
    e["theta"] = std::isfinite(s.theta) ? json(s.theta) : json("n/a");
    e["kappa"] = std::isfinite(s.kappa) ? json(s.kappa) : json("n/a");
    e["inner_steps"] = s.inner_steps;
    e["inner_deltas"] = s.inner_deltas;
    steps.push_back(e);
  }
  j["steps"] = steps;
  return j;
}

GridFunction solve_from_config(const ExperimentConfig& cfg, SolveReport* rep_out) {
  const ProblemSpec prob = problem_from_config(cfg);
  const SolverConfig scfg = solver_from_config(cfg);
  auto [u, rep] = relax_continuation(prob, scfg);
  if (rep_out) *rep_out = rep;
  return u;
}

}  // namespace

RunResult run_experiment(ExperimentConfig cfg, const std::string& output_dir) {
  RunResult result;
  try {
    // resolve a preset reference before anything else
    const std::string preset = cfg.get("problem.preset", cfg.get("experiment.preset", ""));
    if (!preset.empty()) {
      const auto& presets = builtin_presets();
      const auto it = presets.find(preset);
      if (it == presets.end()) throw ConfigError("unknown preset: " + preset);
      cfg.merge_defaults(ExperimentConfig::parse_text(it->second));
    }

    const std::string kind = cfg.get("experiment.kind", "");
    if (kind.empty()) {
      throw ConfigError("missing required field `kind` in [experiment]");
    }
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_num("experiment.seed", 0));

    ArtifactWriter w;
    w.dir = output_dir;
    json meta;
    meta["kind"] = kind;
    meta["seed"] = seed;
    json cfg_echo;
    for (const auto& [k, v] : cfg.kv) cfg_echo[k] = v;
    meta["config"] = cfg_echo;

    if (kind == "exponents") {
      const Scenario sc = scenario_from_config(cfg);
      const ExponentReport rep = predicted_delta(sc);
      const IterationTrace tr = iterate_deltas(sc, cfg.get_int("scenario.kmax", 80));
      json j;
      j["delta_predicted"] = rep.delta_predicted;
      j["delta_neumann_cap"] = rep.delta_neumann_cap;
      j["q_upper_bounds"] = rep.q_upper_bounds;
      j["singular_dim_bound"] = rep.singular_dim_bound;
      j["boundary_regular"] = {{"holds", rep.boundary_regular.holds},
                               {"inequality", rep.boundary_regular.inequality},
                               {"theorem", rep.boundary_regular.theorem}};
      j["applicable"] = rep.applicable;
      j["notes"] = rep.notes;
      w.add("exponents.json", j.dump(2) + "\n");
      w.add("iteration_trace.json", trace_to_json(tr).dump(2) + "\n");
      result.table = exponents_table(sc, rep, tr);
    } else if (kind == "solve") {
      SolveReport rep;
      GridFunction u = solve_from_config(cfg, &rep);
      w.add("solve_report.json", report_to_json(rep).dump(2) + "\n");
      w.add("field.csv", field_to_csv(u));
      if (!rep.converged) result.message = "solver did not fully converge (flagged in report)";
    } else if (kind == "besov") {
      const std::string source = cfg.get("besov.source", "solve");
      const int order = cfg.get_int("besov.order", 1);
      const double s = cfg.get_num("besov.s", 0.5);
      const double pn = cfg.get_num("besov.p_norm", 2.0);
      BesovEstimate est;
      if (source == "solve") {
        SolveReport rep;
        GridFunction u = solve_from_config(cfg, &rep);
        const ProblemSpec prob = problem_from_config(cfg);
        const std::string handling = cfg.get("besov.handling", "interior");
        BoundaryHandling bh = BoundaryHandling::InteriorShrink;
        if (handling == "odd") bh = BoundaryHandling::OddReflect;
        if (handling == "even") bh = BoundaryHandling::EvenReflect;
        BesovProbe probe = make_probe(u.grid.cell_grid(), order, pn, s);
        est = v_field_regularity(u, prob.integrand, probe, bh);
      } else if (source.rfind("abs-power:", 0) == 0) {
        const double gamma = std::stod(source.substr(10));
        GridSpec g;
        g.dim = 1;
        g.lo[0] = cfg.get_num("besov.lo", -1.0);
        g.hi[0] = cfg.get_num("besov.hi", 1.0);
        g.res[0] = cfg.get_int("besov.res", 2049);
        g.res[1] = 1;
        GridFunction f = GridFunction::sample_scalar(
            g, [gamma](std::span<const double> x) { return std::pow(std::abs(x[0]), gamma); });
        est = decay_fit(f, make_probe(g, order, pn, s));
      } else if (source == "step") {
        GridSpec g;
        g.dim = 1;
        g.lo[0] = cfg.get_num("besov.lo", -1.0);
        g.hi[0] = cfg.get_num("besov.hi", 1.0);
        g.res[0] = cfg.get_int("besov.res", 2049);
        g.res[1] = 1;
        GridFunction f = GridFunction::sample_scalar(
            g, [](std::span<const double> x) { return x[0] >= 0.0 ? 1.0 : 0.0; });
        est = decay_fit(f, make_probe(g, order, pn, s));
      } else {
        throw ConfigError("unknown besov source: " + source);
      }
      w.add("besov.json", estimate_to_json(est).dump(2) + "\n");
      w.add("seminorms.csv", estimate_to_csv(est));
    } else if (kind == "excess") {
      SolveReport rep;
      GridFunction u = solve_from_config(cfg, &rep);
      const ProblemSpec prob = problem_from_config(cfg);
      const GrowthParams& gp = prob.integrand.params();
      std::array<double, 2> x{cfg.get_num("excess.x", 0.5 * (prob.grid.lo[0] + prob.grid.hi[0])),
                              cfg.get_num("excess.y", 0.5 * (prob.grid.lo[1] + prob.grid.hi[1]))};
      const double R0 = cfg.get_num("excess.R0", 0.25 * (prob.grid.hi[0] - prob.grid.lo[0]));
      const double tau = cfg.get_num("excess.tau", 0.25);
      const int steps = cfg.get_int("excess.steps", 4);
      const double beta = cfg.get_num("excess.beta", gp.alpha / 2.0);
      ExcessProfile prof = excess_decay_profile(u, std::span<const double>(x.data(), prob.grid.dim),
                                                R0, tau, steps, beta, gp.p, gp.mu);
      w.add("excess_profile.csv", profile_to_csv(prof));
      json j;
      j["fitted_decay"] = prof.fitted_decay;
      j["fitted_decay_centered"] = prof.fitted_decay_centered;
      j["decay_consistent"] = prof.decay_consistent;
      j["beta"] = prof.beta;
      j["truncated"] = prof.truncated;
      w.add("excess.json", j.dump(2) + "\n");
    } else if (kind == "classify") {
      SolveReport rep;
      GridFunction u = solve_from_config(cfg, &rep);
      const ProblemSpec prob = problem_from_config(cfg);
      const GrowthParams& gp = prob.integrand.params();
      const double eps = cfg.get_num("classify.epsilon", 0.1);
      const double M = cfg.get_num("classify.M", 2.0);
      const double R0 = cfg.get_num("classify.R0", 0.25 * (prob.grid.hi[0] - prob.grid.lo[0]));
      const double beta = cfg.get_num("classify.beta", gp.alpha / 2.0);
      const int count = cfg.get_int("classify.samples", 33);
      std::vector<std::array<double, 2>> pts;
      for (int i = 0; i < count; ++i) {
        const double t = (i + 0.5) / count;
        std::array<double, 2> x{prob.grid.lo[0] + t * (prob.grid.hi[0] - prob.grid.lo[0]),
                                prob.grid.dim == 2
                                    ? prob.grid.lo[1] + t * (prob.grid.hi[1] - prob.grid.lo[1])
                                    : 0.0};
        pts.push_back(x);
      }
      ClassificationMap map = classify_points(u, prob, eps, M, R0, beta, pts);
      w.add("classification.csv", classification_to_csv(map, prob.grid.dim));
      int regular = 0;
      for (const auto& p : map.points) regular += p.label == PointLabel::Regular;
      json j;
      j["regular_count"] = regular;
      j["total"] = static_cast<int>(map.points.size());
      j["epsilon"] = eps;
      j["M"] = M;
      j["R0"] = R0;
      j["beta"] = beta;
      w.add("classify.json", j.dump(2) + "\n");
    } else if (kind == "gap") {
      const ProblemSpec prob = problem_from_config(cfg);
      const SolverConfig scfg = solver_from_config(cfg);
      const std::string comp = cfg.get("gap.competitor", "self");
      GapReport gr;
      if (comp == "self") {
        auto [u, rep] = relax_continuation(prob, scfg);
        gr = gap_probe(prob, u, scfg);
      } else if (comp == "quadrant-ramp") {
        gr = gap_probe(prob, checkerboard_competitor(), scfg);
      } else {
        throw ConfigError("unknown gap competitor: " + comp);
      }
      w.add("gap_report.json", gap_to_json(gr).dump(2) + "\n");
    } else if (kind == "verify-integrand") {
      const ProblemSpec prob = problem_from_config(cfg);
      const int samples = cfg.get_int("verify.samples", 400);
      GrowthReport rep = verify_growth(prob.integrand, samples,
                                       static_cast<std::uint64_t>(cfg.get_num("experiment.seed", 0)),
                                       prob.grid.lo[0], prob.grid.hi[0]);
      json j;
      j["all_pass"] = rep.all_pass;
      j["warnings"] = rep.warnings;
      json checks = json::array();
      for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name},
                          {"measured", c.measured},
                          {"declared", c.declared},
                          {"pass", c.pass},
                          {"note", c.note}});
      }
      j["checks"] = checks;
      w.add("verification.json", j.dump(2) + "\n");
    } else {
      throw ConfigError("unknown experiment kind: " + kind);
    }

    result.artifacts = w.flush(meta);
    return result;
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  } catch (const std::invalid_argument& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  } catch (const std::exception& e) {
    result.exit_code = 3;
    result.message = e.what();
    return result;
  }
}

}  // namespace vreg
