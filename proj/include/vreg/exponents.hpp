#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace vreg {

enum class Bc { Dirichlet, Neumann, Mixed };

/// Inputs of the exponent calculus: growth exponents, data classes and the
/// structural flags appearing in the theorems' hypotheses.
struct Scenario {
  int n = 2;
  double p = 2.0;
  double q = 2.0;
  double alpha = 1.0;
  double beta = std::numeric_limits<double>::quiet_NaN();  // forcing class; NaN = base class
  int fine_index = 0;        // Besov fine index of f: 1 or 0 (= infinity)
  Bc bc = Bc::Dirichlet;
  bool radial = false;
  bool autonomous = false;
  bool homogeneous_boundary = true;
  bool apriori_w1q = false;  // u in W^{1,q} known a-priori
  double g_regularity = std::numeric_limits<double>::quiet_NaN();

  void validate() const;
  double p_conj() const { return p / (p - 1.0); }
  /// Strong forcing class of the improved-differentiability statements:
  /// p >= 2, f in B^{beta-1,p'}_1 with beta in [alpha, 2].
  bool strong_data() const {
    return p >= 2.0 && fine_index == 1 && std::isfinite(beta) && beta >= alpha && beta <= 2.0;
  }
};

struct QRange {
  std::map<std::string, double> bounds;     // basic, apriori, autonomous, partial_regularity
  std::map<std::string, bool> satisfied;    // q strictly below the bound
};

QRange q_range(const Scenario& sc);

struct IterStep {
  double delta = 0.0;   // delta_k at entry
  char branch = 'b';    // 'a': two-step regime (tau_{2,0} > 2), 'b': direct
  double tau1 = 0.0;
  double tau2 = 0.0;
  double sigma = 0.0;
  double xi = 0.0;      // xi_k = n/(n - 2 delta_{k-1})
  double theta = 0.0;
  double kappa = 0.0;   // kappa_k
  int inner_steps = 0;  // j0 in the two-step regime
  std::vector<double> inner_deltas;
};

struct IterationTrace {
  bool applicable = true;
  std::string reason;
  std::vector<double> deltas;  // delta_0 .. delta_K
  std::vector<IterStep> steps;
  double kappa_infinity = 0.0;
  double limit = 0.0;
  bool neumann_capped = false;  // stopped at the first delta >= 1/2 (delta_0 flag)
  double epsilon_slack = 0.0;   // auxiliary eps, resolved symbolically as 0+
};

/// Runs the differentiability iteration delta_0 = alpha/2,
/// delta' = alpha/2 + min(delta, sigma)/max(2,p) (Step-5 form for the strong
/// class), with the two-step inner recursion when delta_k is below the
/// tau_{2,0} threshold. Inapplicable scenarios return an explanatory trace.
IterationTrace iterate_deltas(const Scenario& sc, int k_max);

struct BoundaryCondition {
  bool holds = false;
  bool applicable = true;
  std::string inequality;  // the inequality evaluated, with numbers
  std::string theorem;
};

BoundaryCondition boundary_regularity_condition(const Scenario& sc);

struct ExponentReport {
  std::map<std::string, double> q_upper_bounds;
  double delta_predicted = 0.0;
  bool delta_neumann_cap = false;  // "exceeds 1/2 but unquantified" delta_0 flag
  double singular_dim_bound = 0.0;
  bool dim_bound_clamped = false;
  BoundaryCondition boundary_regular;
  std::vector<std::string> applicable;  // theorems whose hypotheses hold
  std::vector<std::string> notes;
};

/// Closed-form predictions: delta = (alpha/2) min(2,p') for the base class,
/// delta = min(p' beta/2, alpha) for the strong class, with the Neumann
/// inhomogeneous cap flag and the dimension/threshold companions.
ExponentReport predicted_delta(const Scenario& sc);

/// dim_H Sigma <= n - alpha min(2,p') (strong class: n - min(2 alpha, p' beta)),
/// clamped at zero.
double singular_dim_bound(const Scenario& sc);

struct EmbeddingResult {
  bool applicable = true;
  bool holds = false;
};

/// B^{s,p}_{q_fine} -> B^{s1,p1}_{q1_fine} embedding test:
/// s - n/p >= s1 - n/p1, strict when the fine indices reverse order.
EmbeddingResult embedding_check(double s, double p, double s1, double p1, double q_fine,
                                double q1_fine, int n);

/// kappa_infinity of the limiting interpolation step (branch-appropriate form).
double kappa_infinity(const Scenario& sc);

}  // namespace vreg
