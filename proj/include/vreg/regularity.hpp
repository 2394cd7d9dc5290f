#pragma once

#include <array>
#include <string>
#include <vector>

#include "vreg/solver.hpp"

namespace vreg {

/// Excess energy E(x,R) = avg over cells of Omega_R(x) of
/// |V_p(Du - (Du)_{Omega_R})|^2, plus R^{2 beta}. Averages use the cells whose
/// centers fall in Omega cap B_R(x); at least 4 cells are required.
double excess(const GridFunction& u, std::span<const double> x, double R, double beta, double p,
              double mu);

struct ExcessProfile {
  std::array<double, 2> center{};
  double beta = 0.5;
  std::vector<double> radii;
  std::vector<double> excess_values;    // E(x, tau^k R0)
  std::vector<double> excess_centered;  // E - R^{2 beta} (pure V-oscillation)
  std::vector<double> mean_grad_norms;
  double fitted_decay = 0.0;           // slope of log E vs log R
  double fitted_decay_centered = 0.0;  // slope of the pure V-oscillation term
  bool decay_consistent = false;       // fitted_decay >= 2 beta - 0.2
  bool truncated = false;
};

/// E(x, tau^k R0) for k = 0..steps; radii that underflow the lattice truncate
/// the profile with a warning flag. Requires tau in (0, 1/4].
ExcessProfile excess_decay_profile(const GridFunction& u, std::span<const double> x, double R0,
                                   double tau, int steps, double beta, double p, double mu);

enum class PointLabel { Regular, SingularCandidate };

struct ClassifiedPoint {
  std::array<double, 2> x{};
  PointLabel label = PointLabel::SingularCandidate;
  double excess_min = 0.0;  // smallest centered excess over the tested radii
  double r_at_min = 0.0;
  double mean_grad_at_min = 0.0;
};

struct ClassificationMap {
  double epsilon = 0.0, M = 0.0, R0 = 0.0, beta = 0.5;
  std::vector<ClassifiedPoint> points;
};

/// Epsilon-regularity test: a point is regular iff for some tested R < R0 the
/// mean gradient stays within M and the centered excess is below epsilon^2.
ClassificationMap classify_points(const GridFunction& u, const ProblemSpec& problem, double epsilon,
                                  double M, double R0, double beta,
                                  std::span<const std::array<double, 2>> sample);

struct AffineMap {
  std::vector<double> offset;    // m entries
  std::vector<double> gradient;  // m x n entries
};

struct CaccioppoliRecord {
  double lhs = 0.0;              // avg_{Omega_{R/2}} |V_p(D(u-a))|^2
  double rhs_lower_order = 0.0;  // avg_{Omega_R} |V_p((u-a)/R)|^2
  double rhs_vterm = 0.0;        // |V_{p'}(R^alpha L)|^2
  double rhs_qp_power = 0.0;     // (avg |V_p(D(u-a))|^2 + lower order)^{q/p}
  double L = 0.0;
  double ratio = 0.0;            // lhs / sum of rhs groups
};

/// Evaluates both sides of the boundary Caccioppoli inequality without the
/// unknown constant; the ratio is the testable content.
CaccioppoliRecord caccioppoli_ratio(const GridFunction& u, const ProblemSpec& problem,
                                    std::span<const double> x, double R, const AffineMap& a);

std::string classification_to_csv(const ClassificationMap& map, int dim);
std::string profile_to_csv(const ExcessProfile& profile);

}  // namespace vreg
