#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vreg/grid.hpp"
#include "vreg/integrand.hpp"

namespace vreg {

using FieldFn = std::function<void(std::span<const double>, std::span<double>)>;

enum class BoundaryMode { Dirichlet, Neumann, Mixed };

/// One variational problem: minimize int F(x,Du) - f.u dx + int g_N.u dH over
/// fields honoring the boundary mode. In Mixed mode the per-face tags of the
/// grid decide which faces are pinned.
struct ProblemSpec {
  IntegrandSpec integrand;
  GridSpec grid;
  FieldFn forcing;         // null => f = 0
  FieldFn dirichlet_data;  // null => g_D = 0
  FieldFn neumann_data;    // null => g_N = 0
  BoundaryMode mode = BoundaryMode::Dirichlet;

  BoundaryTag face_tag(int face) const;
  /// Componentwise |int f - int g_N|; must be <= 1e-10 x scale in Neumann mode.
  std::vector<double> compatibility_residual() const;
  void validate() const;
};

struct SolverConfig {
  double eps0 = 1e-1;
  double rho = 0.5;
  int k_max = 12;
  int max_iterations = 20000;
  double gradient_tolerance = 1e-8;
  double armijo_shrink = 0.5;
  double armijo_c1 = 1e-4;
  double mu_floor = 1e-8;
  double gap_tolerance = 1e-6;
};

struct EpsStep {
  double epsilon = 0.0;
  double energy = 0.0;  // F_eps(u_eps)
  double qterm = 0.0;   // eps * int |Du|^q
  double grad_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  double w1p_change = 0.0;  // ||u_k - u_{k-1}||_{W^{1,p}} (0 at the first step)
};

struct SolveReport {
  double final_energy = 0.0;
  double el_residual = 0.0;
  double stress_qprime_norm = 0.0;
  bool converged = true;
  std::vector<EpsStep> epsilon_trace;
  double relaxed_estimate = 0.0;    // F_eps(u) - eps int |Du|^q at the last eps
  double richardson_estimate = 0.0; // extrapolated across the last three eps
  double qterm_slope = 0.0;         // slope of log qterm vs log(1/eps)
  bool lavrentiev_flag = false;     // qterm not decaying along the schedule
  std::vector<std::string> notes;
};

/// Discrete value of F(u) + epsilon int |Du|^q - int f.u + int g_N.u by the
/// cell-midpoint rule (epsilon = 0 gives the unregularized functional).
double functional_energy(const ProblemSpec& problem, const GridFunction& u, double epsilon);

/// Minimizes F_eps by Polak-Ribiere NCG with Armijo backtracking. Dirichlet
/// values are pinned; Neumann solutions are mean-zero gauged per component.
std::pair<GridFunction, SolveReport> minimize_regularized(
    const ProblemSpec& problem, double epsilon, const SolverConfig& config,
    const std::optional<GridFunction>& warm_start = std::nullopt);

/// Runs the geometric epsilon schedule with warm starts and reports the
/// extrapolated relaxed energy.
std::pair<GridFunction, SolveReport> relax_continuation(const ProblemSpec& problem,
                                                        const SolverConfig& config);

/// (dual-norm residual of the discrete weak Euler-Lagrange system over test
/// fields honoring the boundary mode, L^{q'} norm of the stress dF(x,Du)).
std::pair<double, double> el_residual(const ProblemSpec& problem, const GridFunction& u);

/// Closed-form competitor for the Lavrentiev probe; singular points are
/// refined adaptively during quadrature.
struct ClosedFormField {
  FieldFn value;
  FieldFn gradient;  // m x n entries
  std::vector<std::array<double, 2>> singular_points;
};

struct GapReport {
  double relaxed_estimate = 0.0;
  double richardson_estimate = 0.0;
  double competitor_energy = 0.0;
  double gap_indicator = 0.0;  // relaxed_estimate - competitor_energy
  bool competitor_diverged = false;
  bool gap_flagged = false;
  double qterm_slope = 0.0;
  double tolerance = 0.0;
};

GapReport gap_probe(const ProblemSpec& problem, const GridFunction& competitor,
                    const SolverConfig& config);
GapReport gap_probe(const ProblemSpec& problem, const ClosedFormField& competitor,
                    const SolverConfig& config);

/// Adaptive cell-subdivision quadrature of the functional on a closed-form
/// field; sets *diverged when refinement near singular points fails to settle.
double adaptive_functional_energy(const ProblemSpec& problem, const ClosedFormField& v,
                                  int max_depth, bool* diverged);

}  // namespace vreg
