#pragma once

#include <array>
#include <string>
#include <vector>

#include "vreg/grid.hpp"
#include "vreg/integrand.hpp"

namespace vreg {

/// Dyadic difference-quotient probe. Shifts are steps*dir in lattice units;
/// directions are the axis directions plus the diagonals in 2D.
struct BesovProbe {
  double s = 0.5;          // smoothness candidate used for seminorm scaling
  double p_norm = 2.0;     // integrability exponent
  int order = 1;           // 1: Delta_h, 2: Delta_h^2
  std::vector<std::array<int, 2>> directions;
  std::vector<int> multiples;  // dyadic lattice multiples, largest first
  // optional spatial restriction of the L^p norm (used when differences of a
  // reflected field are measured over the original domain only)
  bool has_window = false;
  std::array<double, 2> window_lo{0.0, 0.0};
  std::array<double, 2> window_hi{0.0, 0.0};

  void validate(const GridSpec& g) const;
};

/// Default probe: h_j = (width/8) 2^{-j} snapped to the lattice, j = 0..6.
BesovProbe make_probe(const GridSpec& g, int order = 1, double p_norm = 2.0, double s = 0.5,
                      bool axes_only = false);

struct SeminormEntry {
  std::array<int, 2> direction;
  double h = 0.0;         // |shift|
  double raw_norm = 0.0;  // ||Delta_h v||_{L^p(Omega^h)}
  double seminorm = 0.0;  // |h|^{-s} raw_norm
  bool used_in_fit = true;
};

struct BesovEstimate {
  double slope = 0.0;    // fitted decay exponent of log raw_norm vs log|h|
  double r_squared = 1.0;
  std::vector<std::pair<std::array<int, 2>, double>> per_direction;
  std::vector<SeminormEntry> seminorm_at;
  bool saturated = false;  // slope >= order - 0.05 (estimator ceiling)
  double s = 0.0;
  double p_norm = 2.0;
  int order = 1;
  std::vector<std::string> warnings;
};

/// sup over probe shifts of |h|^{-s} ||Delta_h v||_{L^p(Omega^h)} (trapezoid
/// weights on the shrunken lattice). Shifts with empty Omega^h are skipped.
double seminorm(const GridFunction& v, const BesovProbe& probe);

/// Log-log decay fit pooled over directions. Only shifts whose Omega^h keeps
/// at least half the nodes enter the fit; all-zero differences yield the
/// +infinity slope sentinel with seminorm 0.
BesovEstimate decay_fit(const GridFunction& v, const BesovProbe& probe);

enum class BoundaryHandling { InteriorShrink, OddReflect, EvenReflect };

/// Measured Besov exponent of V_{p,mu}(Du): reflects u across the first
/// Dirichlet face (odd) or Neumann face (even) when requested, forms
/// V_{p,mu}(Du) at cell centers and runs decay_fit with p_norm = 2.
BesovEstimate v_field_regularity(const GridFunction& u, const IntegrandSpec& integrand,
                                 BesovProbe probe, BoundaryHandling handling);

std::string estimate_to_csv(const BesovEstimate& e);

}  // namespace vreg
