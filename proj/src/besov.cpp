#include "vreg/besov.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vreg {

void BesovProbe::validate(const GridSpec& g) const {
  if (directions.empty() || multiples.empty()) throw std::invalid_argument("BesovProbe: empty probe");
  if (order != 1 && order != 2) throw std::invalid_argument("BesovProbe: order must be 1 or 2");
  if (!(p_norm >= 1.0)) throw std::invalid_argument("BesovProbe: p_norm >= 1");
  for (const auto& d : directions) {
    for (int mult : multiples) {
      for (int a = 0; a < g.dim; ++a) {
        const double len = std::abs(d[a]) * mult * g.spacing(a);
        const double width = g.hi[a] - g.lo[a];
        if (len > width / 3.0 + 1e-12) {
          throw std::invalid_argument("BesovProbe: shift exceeds domain width/3");
        }
      }
    }
  }
}

BesovProbe make_probe(const GridSpec& g, int order, double p_norm, double s, bool axes_only) {
  BesovProbe p;
  p.s = s;
  p.p_norm = p_norm;
  p.order = order;
  p.directions.push_back({1, 0});
  if (g.dim == 2) {
    p.directions.push_back({0, 1});
    if (!axes_only) {
      p.directions.push_back({1, 1});
      p.directions.push_back({1, -1});
    }
  }
  int base = g.res[0] - 1;
  for (int a = 1; a < g.dim; ++a) base = std::min(base, g.res[a] - 1);
  // h_j = (width/8) 2^{-j}, j = 0..6, snapped to lattice powers of two; shifts
  // below 2 lattice units carry mostly quantization error and are dropped
  int start = 1;
  while (2 * start <= std::max(1, base / 8)) start *= 2;
  const int floor_mult = std::min(start, 2);
  int mult = start;
  for (int j = 0; j <= 6 && mult >= floor_mult; ++j, mult /= 2) {
    p.multiples.push_back(mult);
  }
  return p;
}

namespace {

double shift_length(const GridSpec& g, const std::array<int, 2>& dir, int mult) {
  double l2 = 0.0;
  for (int a = 0; a < g.dim; ++a) {
    const double d = dir[a] * mult * g.spacing(a);
    l2 += d * d;
  }
  return std::sqrt(l2);
}

/// L^p norm with per-axis trapezoid weights (exact measure of the window),
/// optionally restricted to the probe window.
double lp_norm(const GridFunction& v, const BesovProbe& probe) {
  const GridSpec& g = v.grid;
  const double p = probe.p_norm;
  std::array<int, 2> ilo{0, 0}, ihi{g.res[0] - 1, g.dim == 2 ? g.res[1] - 1 : 0};
  if (probe.has_window) {
    for (int a = 0; a < g.dim; ++a) {
      const double h = g.spacing(a);
      while (ilo[a] < ihi[a] && g.coord(a, ilo[a]) < probe.window_lo[a] - 0.5 * h) ++ilo[a];
      while (ihi[a] > ilo[a] && g.coord(a, ihi[a]) > probe.window_hi[a] + 0.5 * h) --ihi[a];
    }
  }
  double acc = 0.0;
  for (int j = ilo[1]; j <= ihi[1]; ++j) {
    const double wy =
        (g.dim == 2) ? ((j == ilo[1] || j == ihi[1]) ? 0.5 : 1.0) * g.spacing(1) : 1.0;
    for (int i = ilo[0]; i <= ihi[0]; ++i) {
      const double wx = ((i == ilo[0] || i == ihi[0]) ? 0.5 : 1.0) * g.spacing(0);
      const int idx = g.index(i, j);
      double mag2 = 0.0;
      for (int c = 0; c < v.m; ++c) mag2 += v.at(idx, c) * v.at(idx, c);
      acc += wx * wy * std::pow(mag2, 0.5 * p);
    }
  }
  return std::pow(acc, 1.0 / p);
}

struct ProbeSample {
  SeminormEntry entry;
  bool empty = false;
};

ProbeSample probe_one(const GridFunction& v, const BesovProbe& probe,
                      const std::array<int, 2>& dir, int mult) {
  ProbeSample s;
  s.entry.direction = dir;
  s.entry.h = shift_length(v.grid, dir, mult);
  std::array<int, 2> steps{dir[0] * mult, v.grid.dim == 2 ? dir[1] * mult : 0};
  try {
    GridFunction d = shift_difference(v, steps, probe.order);
    s.entry.raw_norm = lp_norm(d, probe);
    if (probe.has_window) {
      // windowed measurements combine both orientations, so that differences
      // straddling a reflected face are charged to base points inside it
      GridFunction dm = shift_difference(v, {-steps[0], -steps[1]}, probe.order);
      const double nm = lp_norm(dm, probe);
      s.entry.raw_norm = std::pow(std::pow(s.entry.raw_norm, probe.p_norm) +
                                      std::pow(nm, probe.p_norm),
                                  1.0 / probe.p_norm);
    }
    s.entry.seminorm = std::pow(s.entry.h, -probe.s) * s.entry.raw_norm;
    s.entry.used_in_fit = d.grid.node_count() * 2 >= v.grid.node_count();
  } catch (const std::invalid_argument&) {
    s.empty = true;
  }
  return s;
}

}  // namespace

double seminorm(const GridFunction& v, const BesovProbe& probe) {
  probe.validate(v.grid);
  double best = 0.0;
  for (const auto& dir : probe.directions) {
    for (int mult : probe.multiples) {
      ProbeSample s = probe_one(v, probe, dir, mult);
      if (!s.empty) best = std::max(best, s.entry.seminorm);
    }
  }
  return best;
}

BesovEstimate decay_fit(const GridFunction& v, const BesovProbe& probe) {
  probe.validate(v.grid);
  BesovEstimate est;
  est.s = probe.s;
  est.p_norm = probe.p_norm;
  est.order = probe.order;

  std::vector<double> lx, ly;
  bool any_nonzero = false;
  for (const auto& dir : probe.directions) {
    std::vector<double> dlx, dly;
    for (int mult : probe.multiples) {
      ProbeSample s = probe_one(v, probe, dir, mult);
      if (s.empty) {
        est.warnings.push_back("shift skipped: empty Omega^h");
        continue;
      }
      if (s.entry.raw_norm > 0.0) any_nonzero = true;
      est.seminorm_at.push_back(s.entry);
      if (s.entry.used_in_fit && s.entry.raw_norm > 0.0) {
        dlx.push_back(std::log(s.entry.h));
        dly.push_back(std::log(s.entry.raw_norm));
      }
    }
    if (dlx.size() >= 2) {
      est.per_direction.emplace_back(dir, fit_line(dlx, dly).slope);
      lx.insert(lx.end(), dlx.begin(), dlx.end());
      ly.insert(ly.end(), dly.begin(), dly.end());
    }
  }

  if (!any_nonzero) {
    est.slope = std::numeric_limits<double>::infinity();
    est.r_squared = 1.0;
    est.saturated = true;
    est.warnings.push_back("all differences vanish: slope sentinel +inf");
    return est;
  }
  if (lx.size() < 4) throw std::invalid_argument("decay_fit: fewer than 4 usable h values");

  LineFit f = fit_line(lx, ly);
  est.slope = f.slope;
  est.r_squared = std::clamp(f.r_squared, 0.0, 1.0);
  est.saturated = est.slope >= probe.order - 0.05;

  double aniso = 0.0;
  for (std::size_t a = 0; a < est.per_direction.size(); ++a) {
    for (std::size_t b = a + 1; b < est.per_direction.size(); ++b) {
      aniso = std::max(aniso, std::abs(est.per_direction[a].second - est.per_direction[b].second));
    }
  }
  if (aniso > 0.15) {
    est.warnings.push_back("anisotropy between directions exceeds 0.15 (" + fmt17(aniso) + ")");
  }
  return est;
}

BesovEstimate v_field_regularity(const GridFunction& u, const IntegrandSpec& integrand,
                                 BesovProbe probe, BoundaryHandling handling) {
  const GrowthParams& g = integrand.params();
  GridFunction base = u;
  std::string trace_warning;

  if (handling != BoundaryHandling::InteriorShrink) {
    const bool want_dirichlet = (handling == BoundaryHandling::OddReflect);
    const BoundaryTag want = want_dirichlet ? BoundaryTag::Dirichlet : BoundaryTag::Neumann;
    int face = -1;
    for (int f = 0; f < 2 * u.grid.dim; ++f) {
      if (u.grid.tags[f] == want) {
        face = f;
        break;
      }
    }
    if (face < 0) {
      throw std::invalid_argument("v_field_regularity: no face tagged for the requested reflection");
    }
    base = extend(u, static_cast<Face>(face), want_dirichlet ? Parity::Odd : Parity::Even,
                  &trace_warning);
    // differences may straddle the face, but the norm is taken over the
    // original domain's cells only
    const GridSpec cg = u.grid.cell_grid();
    probe.has_window = true;
    probe.window_lo = {cg.lo[0], cg.lo[1]};
    probe.window_hi = {cg.hi[0], cg.hi[1]};
  }

  GridFunction du = discrete_gradient(base);
  GridFunction vf(du.grid, du.m);
  for (int idx = 0; idx < du.grid.node_count(); ++idx) {
    v_transform(g.p, g.mu, du.node_values(idx),
                std::span<double>(vf.values.data() + static_cast<std::size_t>(idx) * vf.m, vf.m));
  }

  probe.p_norm = 2.0;
  BesovEstimate est = decay_fit(vf, probe);
  if (!trace_warning.empty()) est.warnings.push_back(trace_warning);
  return est;
}

std::string estimate_to_csv(const BesovEstimate& e) {
  std::ostringstream os;
  os << "direction,h,seminorm\n";
  for (const auto& s : e.seminorm_at) {
    os << s.direction[0] << '|' << s.direction[1];
    os << ',' << fmt17(s.h) << ',' << fmt17(s.seminorm) << '\n';
  }
  return os.str();
}

}  // namespace vreg
