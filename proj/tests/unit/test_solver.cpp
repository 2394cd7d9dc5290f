#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vreg/experiment.hpp"
#include "vreg/solver.hpp"

using namespace vreg;

namespace {

ProblemSpec dirichlet_1d(double p, double q, double mu, int res, double scale = 1.0) {
  GrowthParams gp;
  gp.p = p;
  gp.q = q;
  gp.mu = mu;
  gp.n = 1;
  ProblemSpec prob;
  prob.integrand = IntegrandSpec::p_energy(gp, scale);
  prob.grid.dim = 1;
  prob.grid.lo = {0.0, 0.0};
  prob.grid.hi = {1.0, 1.0};
  prob.grid.res = {res, 1};
  prob.mode = BoundaryMode::Dirichlet;
  return prob;
}

double exact_benchmark(double x) {
  return (2.0 / 3.0) * (std::pow(0.5, 1.5) - std::pow(std::abs(x - 0.5), 1.5));
}

}  // namespace

TEST_CASE("zero data give the zero minimizer (Dirichlet and Neumann)") {
  ProblemSpec prob = dirichlet_1d(2.5, 2.5, 1e-4, 33);
  SolverConfig cfg;
  cfg.k_max = 2;
  auto [u, rep] = relax_continuation(prob, cfg);
  for (double v : u.values) CHECK(std::abs(v) < 1e-12);
  CHECK(rep.final_energy == doctest::Approx(0.0).epsilon(1e-12));

  prob.mode = BoundaryMode::Neumann;
  auto [un, repn] = relax_continuation(prob, cfg);
  for (double v : un.values) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("1D p=3 benchmark reproduces the closed form") {
  const auto& preset = builtin_presets().at("pLaplace1d-p3");
  ExperimentConfig cfg = ExperimentConfig::parse_text(preset);
  ProblemSpec prob = problem_from_config(cfg);
  SolverConfig scfg = solver_from_config(cfg);
  auto [u, rep] = relax_continuation(prob, scfg);
  CHECK(rep.converged);
  CHECK(rep.el_residual <= scfg.gradient_tolerance);

  double err = 0.0;
  for (int i = 0; i < prob.grid.res[0]; ++i) {
    err = std::max(err, std::abs(u.at(i) - exact_benchmark(prob.grid.coord(0, i))));
  }
  CHECK(err <= 2e-3);
  CHECK(u.at(128) == doctest::Approx(0.23570226039551584).epsilon(1e-3));

  // relaxed energy matches the quadrature of the closed form to 1e-3 relative
  const double exact_energy = -0.0942809041582063;
  CHECK(std::abs(rep.relaxed_estimate - exact_energy) <= 1e-3 * std::abs(exact_energy));

  // energy trace is non-increasing in k up to solver tolerance
  for (std::size_t k = 1; k < rep.epsilon_trace.size(); ++k) {
    CHECK(rep.epsilon_trace[k].energy <=
          rep.epsilon_trace[k - 1].energy + 1e-9 * (1.0 + std::abs(rep.epsilon_trace[k].energy)));
  }
}

TEST_CASE("p = q problems: the trace stabilizes after the first epsilon step") {
  ProblemSpec prob = dirichlet_1d(2.0, 2.0, 0.0, 65, 0.5);
  prob.forcing = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  SolverConfig cfg;
  cfg.eps0 = 1e-5;
  cfg.rho = 0.1;
  cfg.k_max = 4;
  cfg.gradient_tolerance = 1e-11;
  auto [u, rep] = relax_continuation(prob, cfg);
  REQUIRE(rep.epsilon_trace.size() == 4);
  // the relaxed value F(u_eps) is quadratically insensitive to the p=q perturbation
  const double e0 = rep.epsilon_trace[0].energy - rep.epsilon_trace[0].qterm;
  for (std::size_t k = 1; k < rep.epsilon_trace.size(); ++k) {
    const double ek = rep.epsilon_trace[k].energy - rep.epsilon_trace[k].qterm;
    CHECK(std::abs(ek - e0) <= 1e-6 * std::abs(e0));
  }
  // u = x(1-x)/2 for -u'' = 1
  for (int i = 0; i < prob.grid.res[0]; ++i) {
    const double x = prob.grid.coord(0, i);
    CHECK(u.at(i) == doctest::Approx(0.5 * x * (1.0 - x)).epsilon(5e-4));
  }
}

TEST_CASE("Neumann: compatibility is enforced and the gauge is mean-zero") {
  ProblemSpec prob = dirichlet_1d(2.0, 2.0, 0.0, 65, 0.5);
  prob.mode = BoundaryMode::Neumann;
  prob.forcing = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  CHECK_THROWS_AS(prob.validate(), std::invalid_argument);  // int f != int g_N

  // compatible pair: f = cos(pi x), g_N = 0
  prob.forcing = [](std::span<const double> x, std::span<double> out) {
    out[0] = std::cos(3.14159265358979323846 * x[0]);
  };
  SolverConfig cfg;
  cfg.eps0 = 1e-4;
  cfg.k_max = 2;
  cfg.gradient_tolerance = 1e-10;
  auto [u, rep] = relax_continuation(prob, cfg);
  double mean = 0.0;
  for (int i = 0; i < prob.grid.res[0]; ++i) {
    mean += u.at(i) * ((i == 0 || i == prob.grid.res[0] - 1) ? 0.5 : 1.0) * prob.grid.spacing(0);
  }
  CHECK(std::abs(mean) < 1e-10);

  // gauge invariance: a constant-shifted warm start lands on the same minimizer
  auto [ua, ra] = minimize_regularized(prob, 1e-6, cfg);
  GridFunction warm = ua;
  for (auto& v : warm.values) v += 5.0;
  auto [ub, rb] = minimize_regularized(prob, 1e-6, cfg, warm);
  double d = 0.0;
  for (std::size_t i = 0; i < ua.values.size(); ++i) {
    d = std::max(d, std::abs(ua.values[i] - ub.values[i]));
  }
  CHECK(d < 1e-6);
}

TEST_CASE("convexity certificate and strict-convexity contraction") {
  ProblemSpec prob = dirichlet_1d(3.0, 3.0, 1e-4, 33, 1.0);
  prob.forcing = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  SolverConfig cfg;
  cfg.eps0 = 1e-5;
  cfg.k_max = 1;
  cfg.gradient_tolerance = 1e-10;
  auto [u, rep] = minimize_regularized(prob, 1e-5, cfg);
  const double eu = functional_energy(prob, u, 1e-5);

  Rng rng(3);
  for (int s = 0; s < 50; ++s) {
    GridFunction v = u;
    for (int i = 1; i < prob.grid.res[0] - 1; ++i) v.at(i) += 0.3 * rng.normal();
    CHECK(eu <= functional_energy(prob, v, 1e-5) + 1e-9 * (1.0 + std::abs(eu)));
  }

  // F((w1+w2)/2) + c ||D(w1-w2)||_p^p <= (F(w1)+F(w2))/2 with measured c > 0
  double c_measured = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 20; ++s) {
    GridFunction w1(prob.grid, 1), w2(prob.grid, 1), mid(prob.grid, 1);
    for (int i = 1; i < prob.grid.res[0] - 1; ++i) {
      w1.at(i) = rng.normal();
      w2.at(i) = rng.normal();
    }
    for (std::size_t i = 0; i < mid.values.size(); ++i) {
      mid.values[i] = 0.5 * (w1.values[i] + w2.values[i]);
    }
    const double lhs = functional_energy(prob, mid, 0.0);
    const double rhs = 0.5 * (functional_energy(prob, w1, 0.0) + functional_energy(prob, w2, 0.0));
    GridFunction dw = discrete_gradient(w1);
    GridFunction dw2 = discrete_gradient(w2);
    double seminorm_p = 0.0;
    for (int i = 0; i < dw.grid.node_count(); ++i) {
      seminorm_p += prob.grid.cell_volume() * std::pow(std::abs(dw.at(i) - dw2.at(i)), 3.0);
    }
    if (seminorm_p > 1e-12) c_measured = std::min(c_measured, (rhs - lhs) / seminorm_p);
  }
  CHECK(c_measured > 0.0);
  MESSAGE("measured strict-convexity constant: ", c_measured);
}

TEST_CASE("el_residual: optimality, linear growth under perturbation, p=2 stress") {
  const auto& preset = builtin_presets().at("poisson1d-p2");
  ExperimentConfig cfg = ExperimentConfig::parse_text(preset);
  ProblemSpec prob = problem_from_config(cfg);
  SolverConfig scfg = solver_from_config(cfg);
  auto [u, rep] = relax_continuation(prob, scfg);
  CHECK(rep.el_residual <= scfg.gradient_tolerance);

  // directional perturbation u + delta psi0: residual grows linearly
  auto perturbed = [&](double delta) {
    GridFunction v = u;
    for (int i = 1; i < prob.grid.res[0] - 1; ++i) {
      const double x = prob.grid.coord(0, i);
      v.at(i) += delta * std::sin(3.14159265358979323846 * x);
    }
    return el_residual(prob, v).first;
  };
  const double r1 = perturbed(1e-4), r2 = perturbed(2e-4);
  CHECK(r2 / r1 == doctest::Approx(2.0).epsilon(0.2));

  // p=2 with scale 1/2: stress = Du, so the stress norm is ||Du||_{L^2}
  auto [res0, stress] = el_residual(prob, u);
  GridFunction du = discrete_gradient(u);
  double l2 = 0.0;
  for (int i = 0; i < du.grid.node_count(); ++i) {
    l2 += prob.grid.cell_volume() * du.at(i) * du.at(i);
  }
  CHECK(stress == doctest::Approx(std::sqrt(l2)).epsilon(1e-12));

  // non-conforming field rejected
  GridSpec other = prob.grid;
  other.res[0] = 31;
  GridFunction wrong(other, 1);
  CHECK_THROWS_AS(el_residual(prob, wrong), std::invalid_argument);
}

TEST_CASE("non-convergence is flagged, best iterate returned") {
  ProblemSpec prob = dirichlet_1d(3.0, 3.0, 1e-8, 129, 1.0 / 3.0);
  prob.forcing = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  SolverConfig cfg;
  cfg.max_iterations = 1;
  cfg.gradient_tolerance = 1e-12;
  auto [u, rep] = minimize_regularized(prob, 1e-4, cfg);
  CHECK_FALSE(rep.converged);
  bool flagged = false;
  for (const auto& n : rep.notes) flagged = flagged || n.find("non-convergence") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("gap probe: minimality makes the self-competitor indicator non-positive") {
  ProblemSpec prob = dirichlet_1d(2.2, 2.2, 1e-6, 33);
  prob.forcing = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  SolverConfig cfg;
  cfg.eps0 = 1e-3;
  cfg.rho = 0.25;
  cfg.k_max = 5;
  cfg.gradient_tolerance = 1e-10;
  auto [u, rep] = relax_continuation(prob, cfg);
  GapReport gr = gap_probe(prob, u, cfg);
  CHECK(gr.gap_indicator <= gr.tolerance);
  CHECK_FALSE(gr.gap_flagged);

  // any finite-energy competitor: indicator stays below tolerance
  GridFunction zero(prob.grid, 1);
  GapReport gr0 = gap_probe(prob, zero, cfg);
  CHECK(gr0.gap_indicator <= gr0.tolerance);
}

TEST_CASE("adaptive quadrature flags a divergent competitor") {
  GrowthParams gp;
  gp.p = 2;
  gp.q = 2;
  gp.n = 2;
  ProblemSpec prob;
  prob.integrand = IntegrandSpec::p_energy(gp);
  prob.grid.dim = 2;
  prob.grid.lo = {-1.0, -1.0};
  prob.grid.hi = {1.0, 1.0};
  prob.grid.res = {9, 9};
  prob.mode = BoundaryMode::Dirichlet;

  // u = log r: |Du| = 1/r, int |Du|^2 diverges logarithmically at the origin
  ClosedFormField log_field;
  log_field.value = [](std::span<const double> x, std::span<double> out) {
    out[0] = 0.5 * std::log(std::max(1e-300, x[0] * x[0] + x[1] * x[1]));
  };
  log_field.gradient = [](std::span<const double> x, std::span<double> out) {
    const double r2 = std::max(1e-300, x[0] * x[0] + x[1] * x[1]);
    out[0] = x[0] / r2;
    out[1] = x[1] / r2;
  };
  log_field.singular_points = {{0.0, 0.0}};
  bool diverged = false;
  adaptive_functional_energy(prob, log_field, 40, &diverged);
  CHECK(diverged);

  // an integrable singularity settles: u = r^{0.6}
  ClosedFormField ok_field;
  ok_field.value = [](std::span<const double> x, std::span<double> out) {
    out[0] = std::pow(x[0] * x[0] + x[1] * x[1], 0.3);
  };
  ok_field.gradient = [](std::span<const double> x, std::span<double> out) {
    const double r2 = std::max(1e-300, x[0] * x[0] + x[1] * x[1]);
    const double f = 0.6 * std::pow(r2, 0.3 - 1.0);
    out[0] = f * x[0];
    out[1] = f * x[1];
  };
  ok_field.singular_points = {{0.0, 0.0}};
  diverged = true;
  const double e = adaptive_functional_energy(prob, ok_field, 40, &diverged);
  CHECK_FALSE(diverged);
  CHECK(std::isfinite(e));
}

TEST_CASE("mixed boundary mode: Dirichlet x-faces, Neumann y-faces") {
  GrowthParams gp;
  gp.p = 2;
  gp.q = 2;
  gp.mu = 0.0;
  gp.n = 2;
  ProblemSpec prob;
  prob.integrand = IntegrandSpec::p_energy(gp, 0.5);
  prob.grid.dim = 2;
  prob.grid.lo = {0.0, 0.0};
  prob.grid.hi = {1.0, 1.0};
  prob.grid.res = {17, 17};
  prob.grid.tags = {BoundaryTag::Dirichlet, BoundaryTag::Dirichlet, BoundaryTag::Neumann,
                    BoundaryTag::Neumann};
  prob.mode = BoundaryMode::Mixed;
  prob.dirichlet_data = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
  SolverConfig cfg;
  cfg.eps0 = 1e-6;
  cfg.k_max = 1;
  cfg.gradient_tolerance = 1e-9;
  auto [u, rep] = relax_continuation(prob, cfg);
  CHECK(rep.converged);
  // u = x is harmonic, matches the Dirichlet data and has zero normal
  // derivative on the Neumann faces: it is the exact discrete solution
  for (int idx = 0; idx < prob.grid.node_count(); ++idx) {
    const double x = prob.grid.coord(0, idx % prob.grid.res[0]);
    CHECK(u.at(idx) == doctest::Approx(x).epsilon(1e-7));
  }
}

TEST_CASE("vector target m = 2: components decouple for the quadratic energy") {
  GrowthParams gp;
  gp.p = 2;
  gp.q = 2;
  gp.mu = 0.0;
  gp.n = 1;
  gp.m = 2;
  ProblemSpec prob;
  prob.integrand = IntegrandSpec::p_energy(gp, 0.5);
  prob.grid.dim = 1;
  prob.grid.lo = {0.0, 0.0};
  prob.grid.hi = {1.0, 1.0};
  prob.grid.res = {65, 1};
  prob.mode = BoundaryMode::Dirichlet;
  prob.forcing = [](std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
    out[1] = 2.0;
  };
  SolverConfig cfg;
  cfg.eps0 = 1e-8;
  cfg.k_max = 1;
  cfg.gradient_tolerance = 1e-11;
  auto [u, rep] = relax_continuation(prob, cfg);
  CHECK(rep.converged);
  for (int i = 0; i < prob.grid.res[0]; ++i) {
    const double x = prob.grid.coord(0, i);
    CHECK(u.at(i, 0) == doctest::Approx(0.5 * x * (1.0 - x)).epsilon(5e-4));
    CHECK(u.at(i, 1) == doctest::Approx(x * (1.0 - x)).epsilon(5e-4));
  }
}
