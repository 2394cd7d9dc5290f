#include "vreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vreg {

void GridSpec::validate() const {
  if (dim < 1 || dim > 2) throw std::invalid_argument("GridSpec: dim must be 1 or 2");
  for (int a = 0; a < dim; ++a) {
    if (res[a] < 2) throw std::invalid_argument("GridSpec: need at least 2 nodes per axis");
    if (!(hi[a] > lo[a])) throw std::invalid_argument("GridSpec: empty extent");
  }
  if (dim == 1 && res[1] != 1) throw std::invalid_argument("GridSpec: res[1] must be 1 in 1D");
}

void GridSpec::node_point(int idx, std::span<double> x) const {
  const int i = idx % res[0];
  x[0] = coord(0, i);
  if (dim == 2) x[1] = coord(1, idx / res[0]);
}

GridSpec GridSpec::cell_grid() const {
  GridSpec c = *this;
  for (int a = 0; a < dim; ++a) {
    const double h = spacing(a);
    c.lo[a] = lo[a] + 0.5 * h;
    c.hi[a] = hi[a] - 0.5 * h;
    c.res[a] = res[a] - 1;
  }
  return c;
}

bool GridSpec::same_lattice(const GridSpec& o) const {
  if (dim != o.dim) return false;
  for (int a = 0; a < dim; ++a) {
    const double h = spacing(a);
    if (std::abs(h - o.spacing(a)) > 1e-12 * h) return false;
    const double off = (o.lo[a] - lo[a]) / h;
    if (std::abs(off - std::round(off)) > 1e-9) return false;
  }
  return true;
}

GridFunction GridFunction::sample(const GridSpec& g, int comps,
                                  const std::function<void(std::span<const double>, std::span<double>)>& f) {
  GridFunction u(g, comps);
  std::array<double, 2> x{};
  std::vector<double> buf(comps);
  for (int idx = 0; idx < g.node_count(); ++idx) {
    g.node_point(idx, std::span<double>(x.data(), g.dim));
    f(std::span<const double>(x.data(), g.dim), buf);
    for (int c = 0; c < comps; ++c) u.at(idx, c) = buf[c];
  }
  return u;
}

GridFunction GridFunction::sample_scalar(const GridSpec& g,
                                         const std::function<double(std::span<const double>)>& f) {
  return sample(g, 1, [&](std::span<const double> x, std::span<double> out) { out[0] = f(x); });
}

GridFunction discrete_gradient(const GridFunction& u) {
  const GridSpec& g = u.grid;
  g.validate();
  const int n = g.dim, m = u.m;
  GridFunction du(g.cell_grid(), m * n);
  if (n == 1) {
    const double h = g.spacing(0);
    for (int i = 0; i < g.cells(0); ++i) {
      for (int c = 0; c < m; ++c) du.at(i, c) = (u.at(i + 1, c) - u.at(i, c)) / h;
    }
    return du;
  }
  const double hx = g.spacing(0), hy = g.spacing(1);
  for (int j = 0; j < g.cells(1); ++j) {
    for (int i = 0; i < g.cells(0); ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j), c0 = g.index(i, j + 1), d = g.index(i + 1, j + 1);
      const int cell = i + g.cells(0) * j;
      for (int c = 0; c < m; ++c) {
        du.at(cell, c * n + 0) = 0.5 * ((u.at(b, c) - u.at(a, c)) + (u.at(d, c) - u.at(c0, c))) / hx;
        du.at(cell, c * n + 1) = 0.5 * ((u.at(c0, c) - u.at(a, c)) + (u.at(d, c) - u.at(b, c))) / hy;
      }
    }
  }
  return du;
}

std::vector<double> integrate(const GridFunction& u) {
  const GridSpec& g = u.grid;
  std::vector<double> sum(u.m, 0.0);
  const double vol = g.cell_volume();
  if (g.dim == 1) {
    for (int i = 0; i < g.cells(0); ++i) {
      for (int c = 0; c < u.m; ++c) sum[c] += 0.5 * (u.at(i, c) + u.at(i + 1, c)) * vol;
    }
    return sum;
  }
  for (int j = 0; j < g.cells(1); ++j) {
    for (int i = 0; i < g.cells(0); ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j), c0 = g.index(i, j + 1), d = g.index(i + 1, j + 1);
      for (int c = 0; c < u.m; ++c) {
        sum[c] += 0.25 * (u.at(a, c) + u.at(b, c) + u.at(c0, c) + u.at(d, c)) * vol;
      }
    }
  }
  return sum;
}

double integrate_scalar(const GridFunction& u) {
  if (u.m != 1) throw std::invalid_argument("integrate_scalar: field is not scalar");
  return integrate(u)[0];
}

std::vector<double> boundary_integrate(const GridFunction& u, Face face) {
  const GridSpec& g = u.grid;
  const int axis = face / 2;
  if (axis >= g.dim) throw std::invalid_argument("boundary_integrate: face not present in this dimension");
  std::vector<double> sum(u.m, 0.0);
  if (g.dim == 1) {
    const int i = (face == XMin) ? 0 : g.res[0] - 1;
    for (int c = 0; c < u.m; ++c) sum[c] += u.at(i, c);
    return sum;
  }
  const int t = 1 - axis;  // tangential axis
  const double ht = g.spacing(t);
  const int fixed = (face % 2 == 0) ? 0 : g.res[axis] - 1;
  for (int k = 0; k < g.res[t] - 1; ++k) {
    const int a = (axis == 0) ? g.index(fixed, k) : g.index(k, fixed);
    const int b = (axis == 0) ? g.index(fixed, k + 1) : g.index(k + 1, fixed);
    for (int c = 0; c < u.m; ++c) sum[c] += 0.5 * (u.at(a, c) + u.at(b, c)) * ht;
  }
  return sum;
}

std::vector<double> boundary_integrate_all(const GridFunction& u) {
  std::vector<double> sum(u.m, 0.0);
  for (int f = 0; f < 2 * u.grid.dim; ++f) {
    auto part = boundary_integrate(u, static_cast<Face>(f));
    for (int c = 0; c < u.m; ++c) sum[c] += part[c];
  }
  return sum;
}

GridFunction shift_difference(const GridFunction& u, std::array<int, 2> steps, int order) {
  const GridSpec& g = u.grid;
  if (order != 1 && order != 2) throw std::invalid_argument("shift_difference: order must be 1 or 2");
  if (steps[0] == 0 && (g.dim == 1 || steps[1] == 0)) {
    throw std::invalid_argument("shift_difference: zero shift");
  }
  if (g.dim == 1) steps[1] = 0;

  GridSpec out = g;
  std::array<int, 2> base{0, 0};  // index offset of the output origin in u
  for (int a = 0; a < g.dim; ++a) {
    const int s = std::abs(steps[a]);
    const int margin = (order == 1) ? s : 2 * s;
    if (margin >= g.res[a]) throw std::invalid_argument("shift_difference: shift exceeds domain width");
    out.res[a] = g.res[a] - margin;
    if (order == 1) {
      if (steps[a] >= 0) {
        out.hi[a] = g.hi[a] - s * g.spacing(a);
      } else {
        out.lo[a] = g.lo[a] + s * g.spacing(a);
        base[a] = s;
      }
    } else {
      out.lo[a] = g.lo[a] + s * g.spacing(a);
      out.hi[a] = g.hi[a] - s * g.spacing(a);
      base[a] = s;
    }
  }

  GridFunction d(out, u.m);
  const int nyo = (g.dim == 2) ? out.res[1] : 1;
  for (int j = 0; j < nyo; ++j) {
    for (int i = 0; i < out.res[0]; ++i) {
      const int src = g.index(base[0] + i, base[1] + j);
      const int plus = g.index(base[0] + i + steps[0], base[1] + j + steps[1]);
      const int dst = i + out.res[0] * j;
      if (order == 1) {
        for (int c = 0; c < u.m; ++c) d.values[static_cast<std::size_t>(dst) * u.m + c] = u.at(plus, c) - u.at(src, c);
      } else {
        const int minus = g.index(base[0] + i - steps[0], base[1] + j - steps[1]);
        for (int c = 0; c < u.m; ++c) {
          d.values[static_cast<std::size_t>(dst) * u.m + c] =
              u.at(plus, c) + u.at(minus, c) - 2.0 * u.at(src, c);
        }
      }
    }
  }
  return d;
}

GridFunction extend(const GridFunction& u, Face face, Parity parity, std::string* trace_warning) {
  const GridSpec& g = u.grid;
  const int axis = face / 2;
  if (axis >= g.dim) throw std::invalid_argument("extend: face not present in this dimension (non-axis-aligned faces unsupported)");
  const bool min_side = (face % 2 == 0);
  const double h = g.spacing(axis);
  const int N = g.res[axis];

  // Mirror about the face node plane: new lattice has 2N-1 nodes along `axis`,
  // the face node shared. (Staggered fields reflect through besov's handling.)
  GridSpec out = g;
  out.res[axis] = 2 * N - 1;
  if (min_side) {
    out.lo[axis] = g.lo[axis] - (N - 1) * h;
  } else {
    out.hi[axis] = g.hi[axis] + (N - 1) * h;
  }

  if (parity == Parity::Odd && trace_warning) {
    double scale = 0.0, trace = 0.0;
    for (const double v : u.values) scale = std::max(scale, std::abs(v));
    const int fixed = min_side ? 0 : N - 1;
    const int nt = (g.dim == 2) ? g.res[1 - axis] : 1;
    for (int k = 0; k < nt; ++k) {
      const int idx = (g.dim == 1) ? fixed : (axis == 0 ? g.index(fixed, k) : g.index(k, fixed));
      for (int c = 0; c < u.m; ++c) trace = std::max(trace, std::abs(u.at(idx, c)));
    }
    if (trace > 1e-8 * std::max(scale, 1e-300)) {
      *trace_warning = "odd extension: trace on face is not zero (max " + fmt17(trace) + ")";
    }
  }

  GridFunction e(out, u.m);
  const int nxo = out.res[0], nyo = (out.dim == 2) ? out.res[1] : 1;
  for (int j = 0; j < nyo; ++j) {
    for (int i = 0; i < nxo; ++i) {
      const int ia = (axis == 0) ? i : j;  // index along the reflection axis in `out`
      bool mirrored;
      int orig;  // node index along the reflection axis in the original grid
      if (min_side) {
        mirrored = ia < N - 1;
        orig = mirrored ? (N - 1 - ia) : ia - (N - 1);
      } else {
        mirrored = ia > N - 1;
        orig = mirrored ? (2 * (N - 1) - ia) : ia;
      }
      int src;
      if (g.dim == 1) {
        src = orig;
      } else if (axis == 0) {
        src = g.index(orig, j);
      } else {
        src = g.index(i, orig);
      }
      const int dst = i + nxo * j;
      for (int c = 0; c < u.m; ++c) {
        double v = u.at(src, c);
        if (mirrored) {
          if (parity == Parity::Odd) v = -v;
          if (parity == Parity::Zero) v = 0.0;
        }
        e.values[static_cast<std::size_t>(dst) * u.m + c] = v;
      }
    }
  }
  return e;
}

GridFunction smooth_annulus(const GridFunction& u, std::span<const double> center, double r_prime,
                            double s_prime) {
  const GridSpec& g = u.grid;
  if (!(0.0 < r_prime && r_prime < s_prime)) {
    throw std::invalid_argument("smooth_annulus: need 0 < r' < s'");
  }
  double bdist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < g.dim; ++a) {
    bdist = std::min(bdist, std::min(center[a] - g.lo[a], g.hi[a] - center[a]));
  }
  const double theta_max = 0.25 * (s_prime - r_prime);
  if (s_prime + theta_max > bdist + 1e-12) {
    throw std::invalid_argument("smooth_annulus: annulus (plus averaging radius) leaves the domain");
  }

  // cell centers and corner-averaged values of u there
  const GridSpec cg = g.cell_grid();
  GridFunction ucell(cg, u.m);
  if (g.dim == 1) {
    for (int i = 0; i < g.cells(0); ++i) {
      for (int c = 0; c < u.m; ++c) ucell.at(i, c) = 0.5 * (u.at(i, c) + u.at(i + 1, c));
    }
  } else {
    for (int j = 0; j < g.cells(1); ++j) {
      for (int i = 0; i < g.cells(0); ++i) {
        const int cell = i + g.cells(0) * j;
        for (int c = 0; c < u.m; ++c) {
          ucell.at(cell, c) = 0.25 * (u.at(g.index(i, j), c) + u.at(g.index(i + 1, j), c) +
                                      u.at(g.index(i, j + 1), c) + u.at(g.index(i + 1, j + 1), c));
        }
      }
    }
  }

  GridFunction w = u;
  std::array<double, 2> x{}, cpt{};
  for (int idx = 0; idx < g.node_count(); ++idx) {
    g.node_point(idx, std::span<double>(x.data(), g.dim));
    double d2 = 0.0;
    for (int a = 0; a < g.dim; ++a) d2 += (x[a] - center[a]) * (x[a] - center[a]);
    const double d = std::sqrt(d2);
    const double theta = 0.5 * std::max(0.0, std::min(d - r_prime, s_prime - d));
    if (theta <= 0.0) continue;

    std::vector<double> acc(u.m, 0.0);
    int count = 0;
    for (int cidx = 0; cidx < cg.node_count(); ++cidx) {
      cg.node_point(cidx, std::span<double>(cpt.data(), cg.dim));
      double r2 = 0.0;
      for (int a = 0; a < g.dim; ++a) r2 += (cpt[a] - x[a]) * (cpt[a] - x[a]);
      if (r2 <= theta * theta) {
        for (int c = 0; c < u.m; ++c) acc[c] += ucell.at(cidx, c);
        ++count;
      }
    }
    if (count == 0) continue;  // theta below lattice scale: keep the point value
    for (int c = 0; c < u.m; ++c) w.at(idx, c) = acc[c] / count;
  }
  return w;
}

std::vector<double> staggered_symmetric_points(double s, int half_count) {
  const double dt = s / half_count;
  std::vector<double> pts(2 * static_cast<std::size_t>(half_count));
  for (int i = 0; i < 2 * half_count; ++i) pts[i] = (i - half_count + 0.5) * dt;
  return pts;
}

double cancellation_check(std::span<const double> sigma, std::span<const double> tau, int m,
                          double s, int h_steps, Parity parity) {
  if (parity == Parity::Zero) throw std::invalid_argument("cancellation_check: parity must be odd or even");
  if (sigma.size() != tau.size() || sigma.size() % (2 * static_cast<std::size_t>(m)) != 0) {
    throw std::invalid_argument("cancellation_check: fields must share a symmetric staggered lattice");
  }
  const int total = static_cast<int>(sigma.size()) / m;
  const int N = total / 2;
  const double dt = s / N;
  if (h_steps < 1 || h_steps > N / 2) {
    throw std::invalid_argument("cancellation_check: need 1 <= h_steps <= half_count/2 (|h| <= s/2)");
  }

  // zero padding outside the sampled window (fields must vanish near +-s)
  auto dot_shift = [&](int k, int k2) {
    if (k < 0 || k >= total || k2 < 0 || k2 >= total) return 0.0;
    double d = 0.0;
    for (int c = 0; c < m; ++c) d += sigma[static_cast<std::size_t>(k) * m + c] *
                                     (tau[static_cast<std::size_t>(k2) * m + c]);
    return d;
  };
  // G(k) = sigma(k).(tau(k-h) - tau(k));  K(k) = sigma(k).(tau(k+h) - tau(k))
  auto G = [&](int k) { return dot_shift(k, k - h_steps) - dot_shift(k, k); };
  auto K = [&](int k) { return dot_shift(k, k + h_steps) - dot_shift(k, k); };

  double acc = 0.0;
  for (int k = N; k < total + h_steps; ++k) {
    acc += (G(k + h_steps) - G(k)) + (K(k - h_steps) - K(k));
  }
  return std::abs(acc * dt);
}

std::string field_to_csv(const GridFunction& u) {
  const GridSpec& g = u.grid;
  std::ostringstream os;
  os << (g.dim == 2 ? "x,y,component_index,value\n" : "x,component_index,value\n");
  const int ny = (g.dim == 2) ? g.res[1] : 1;
  for (int i = 0; i < g.res[0]; ++i) {
    for (int j = 0; j < ny; ++j) {
      const int idx = g.index(i, j);
      for (int c = 0; c < u.m; ++c) {
        os << fmt17(g.coord(0, i));
        if (g.dim == 2) os << ',' << fmt17(g.coord(1, j));
        os << ',' << c << ',' << fmt17(u.at(idx, c)) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace vreg
