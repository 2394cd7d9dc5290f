#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vreg/util.hpp"

namespace vreg {

enum class BoundaryTag { Dirichlet, Neumann };

/// Axis-aligned faces of the domain box. In 1D only XMin/XMax exist.
enum Face : int { XMin = 0, XMax = 1, YMin = 2, YMax = 3 };

enum class Parity { Odd, Even, Zero };

/// Uniform rectangular lattice on [lo1,hi1] (x [lo2,hi2]). Node lattices carry
/// the domain endpoints; cell_grid() is the staggered lattice of cell centers.
struct GridSpec {
  int dim = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<int, 2> res{3, 1};  // nodes per axis; res[1] = 1 in 1D
  std::array<BoundaryTag, 4> tags{BoundaryTag::Dirichlet, BoundaryTag::Dirichlet,
                                  BoundaryTag::Dirichlet, BoundaryTag::Dirichlet};
  bool corner_mode = false;

  void validate() const;
  double spacing(int axis) const { return (hi[axis] - lo[axis]) / (res[axis] - 1); }
  int node_count() const { return res[0] * (dim == 2 ? res[1] : 1); }
  int cells(int axis) const { return res[axis] - 1; }
  int cell_count() const { return cells(0) * (dim == 2 ? cells(1) : 1); }
  double cell_volume() const { return dim == 2 ? spacing(0) * spacing(1) : spacing(0); }
  double coord(int axis, int i) const { return lo[axis] + i * spacing(axis); }
  int index(int i, int j = 0) const { return i + res[0] * j; }
  void node_point(int idx, std::span<double> x) const;
  GridSpec cell_grid() const;  // staggered lattice of cell centers
  bool same_lattice(const GridSpec& o) const;
};

/// R^m-valued field sampled on the nodes of a GridSpec.
struct GridFunction {
  GridSpec grid;
  int m = 1;
  std::vector<double> values;  // values[node*m + c]

  GridFunction() = default;
  GridFunction(GridSpec g, int comps) : grid(g), m(comps), values(static_cast<std::size_t>(g.node_count()) * comps, 0.0) {}

  double& at(int node, int c = 0) { return values[static_cast<std::size_t>(node) * m + c]; }
  double at(int node, int c = 0) const { return values[static_cast<std::size_t>(node) * m + c]; }
  std::span<const double> node_values(int node) const { return {values.data() + static_cast<std::size_t>(node) * m, static_cast<std::size_t>(m)}; }

  static GridFunction sample(const GridSpec& g, int comps,
                             const std::function<void(std::span<const double>, std::span<double>)>& f);
  static GridFunction sample_scalar(const GridSpec& g, const std::function<double(std::span<const double>)>& f);
};

/// Forward differences per axis at cell centers; in 2D the transverse average
/// puts all partials at the same point. Exact on affine fields. Components of
/// the result: (c, axis) -> c*n + axis.
GridFunction discrete_gradient(const GridFunction& u);

/// Midpoint rule over the cells of u's own lattice (corner-averaged values).
/// Exact for cellwise-constant and affine integrands. Returns per-component sums
/// for m = 1 convenience use integrate_scalar.
std::vector<double> integrate(const GridFunction& u);
double integrate_scalar(const GridFunction& u);

/// Midpoint rule over the boundary faces (facet segments in 2D, endpoints in 1D).
std::vector<double> boundary_integrate(const GridFunction& u, Face face);
std::vector<double> boundary_integrate_all(const GridFunction& u);

/// First (order 1) or second (order 2) difference along lattice shift `steps`
/// (integer multiples of the spacing per axis). The result lives on the
/// shrunken lattice Omega^h recorded in its GridSpec.
GridFunction shift_difference(const GridFunction& u, std::array<int, 2> steps, int order);

/// Reflects u across an axis-aligned face; odd/even/zero parity. Works for
/// node lattices (face carries a node) and staggered lattices alike. For odd
/// parity the trace of u on the face is checked; violations beyond
/// 1e-8 x field scale are reported through `trace_warning` when non-null.
GridFunction extend(const GridFunction& u, Face face, Parity parity, std::string* trace_warning = nullptr);

/// Fonseca-Maly smoothing: w(x) is the average of u over the lattice ball of
/// radius theta(x) = max(0, min(|x-center|-r_prime, s_prime-|x-center|))/2;
/// w = u outside the annulus exactly, and T preserves affine maps.
GridFunction smooth_annulus(const GridFunction& u, std::span<const double> center, double r_prime,
                            double s_prime);

/// Symmetric staggered sample points +-(i+1/2)h for the cancellation check;
/// returns the 2*half_count points of (-s,s) in increasing order.
std::vector<double> staggered_symmetric_points(double s, int half_count);

/// Residual of the reflection cancellation identity for fields sampled on
/// staggered_symmetric_points: sum over t>0 of
///   Delta_h(sigma . Delta_{-h} tau) + Delta_{-h}(sigma . Delta_h tau),
/// times the spacing. Vanishes (to roundoff) when sigma and tau are both odd
/// or both even and vanish near the outer endpoints; `parity` declares which.
/// h = h_steps * spacing. sigma and tau may be vector valued (m components,
/// interleaved); the product is the pointwise dot product.
double cancellation_check(std::span<const double> sigma, std::span<const double> tau, int m,
                          double s, int h_steps, Parity parity);

/// Writes the field as CSV `x[,y],component_index,value`, nodes ordered
/// lexicographically by (x, y).
std::string field_to_csv(const GridFunction& u);

}  // namespace vreg
