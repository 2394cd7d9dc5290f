#include "vreg/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vreg/besov.hpp"

namespace vreg {

namespace {

struct CellSelection {
  std::vector<int> cells;
  std::vector<double> mean;  // mean gradient over the selection, m*n entries
  double vexcess = 0.0;      // avg |V_p(Du - mean)|^2
};

/// Cells of the gradient lattice whose centers lie in B_R(x).
CellSelection select_cells(const GridFunction& du, std::span<const double> x, double R, double p,
                           double mu) {
  const GridSpec& cg = du.grid;
  CellSelection sel;
  std::array<double, 2> c{};
  for (int idx = 0; idx < cg.node_count(); ++idx) {
    cg.node_point(idx, std::span<double>(c.data(), cg.dim));
    double d2 = 0.0;
    for (int a = 0; a < cg.dim; ++a) d2 += (c[a] - x[a]) * (c[a] - x[a]);
    if (d2 <= R * R) sel.cells.push_back(idx);
  }
  if (sel.cells.size() < 4) return sel;
  sel.mean.assign(du.m, 0.0);
  for (int idx : sel.cells) {
    for (int c2 = 0; c2 < du.m; ++c2) sel.mean[c2] += du.at(idx, c2);
  }
  for (double& v : sel.mean) v /= static_cast<double>(sel.cells.size());
  std::vector<double> diff(du.m);
  double acc = 0.0;
  for (int idx : sel.cells) {
    for (int c2 = 0; c2 < du.m; ++c2) diff[c2] = du.at(idx, c2) - sel.mean[c2];
    acc += v_norm_sq(p, mu, diff);
  }
  sel.vexcess = acc / static_cast<double>(sel.cells.size());
  return sel;
}

double frobenius(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double excess(const GridFunction& u, std::span<const double> x, double R, double beta, double p,
              double mu) {
  require_finite(x, "excess");
  GridFunction du = discrete_gradient(u);
  CellSelection sel = select_cells(du, x, R, p, mu);
  if (sel.cells.size() < 4) {
    throw std::invalid_argument("excess: ball covers fewer than 4 cells");
  }
  return sel.vexcess + std::pow(R, 2.0 * beta);
}

ExcessProfile excess_decay_profile(const GridFunction& u, std::span<const double> x, double R0,
                                   double tau, int steps, double beta, double p, double mu) {
  if (!(tau > 0.0 && tau <= 0.25)) throw std::invalid_argument("excess_decay_profile: tau in (0, 1/4]");
  ExcessProfile prof;
  prof.center = {x[0], x.size() > 1 ? x[1] : 0.0};
  prof.beta = beta;
  GridFunction du = discrete_gradient(u);
  for (int k = 0; k <= steps; ++k) {
    const double R = R0 * std::pow(tau, k);
    CellSelection sel = select_cells(du, x, R, p, mu);
    if (sel.cells.size() < 4) {
      prof.truncated = true;
      break;
    }
    prof.radii.push_back(R);
    prof.excess_centered.push_back(sel.vexcess);
    prof.excess_values.push_back(sel.vexcess + std::pow(R, 2.0 * beta));
    prof.mean_grad_norms.push_back(frobenius(sel.mean));
  }
  if (prof.radii.size() >= 2) {
    std::vector<double> lx, ly, lyc;
    for (std::size_t i = 0; i < prof.radii.size(); ++i) {
      lx.push_back(std::log(prof.radii[i]));
      ly.push_back(std::log(std::max(prof.excess_values[i], 1e-300)));
      lyc.push_back(std::log(std::max(prof.excess_centered[i], 1e-300)));
    }
    prof.fitted_decay = fit_line(lx, ly).slope;
    prof.fitted_decay_centered = fit_line(lx, lyc).slope;
    prof.decay_consistent = prof.fitted_decay >= 2.0 * beta - 0.2;
  }
  return prof;
}

ClassificationMap classify_points(const GridFunction& u, const ProblemSpec& problem, double epsilon,
                                  double M, double R0, double beta,
                                  std::span<const std::array<double, 2>> sample) {
  if (!(epsilon > 0.0 && M > 0.0 && R0 > 0.0)) {
    throw std::invalid_argument("classify_points: thresholds must be positive");
  }
  ClassificationMap map;
  map.epsilon = epsilon;
  map.M = M;
  map.R0 = R0;
  map.beta = beta;
  GridFunction du = discrete_gradient(u);

  for (const auto& pt : sample) {
    ClassifiedPoint cp;
    cp.x = pt;
    cp.excess_min = std::numeric_limits<double>::infinity();
    bool regular = false;
    for (double R = R0 * 0.5; R > 0.0; R *= 0.5) {  // tested radii R < R0
      CellSelection sel = select_cells(du, std::span<const double>(pt.data(), u.grid.dim), R,
                                       problem.integrand.params().p, problem.integrand.params().mu);
      if (sel.cells.size() < 4) break;
      const double mg = frobenius(sel.mean);
      if (sel.vexcess < cp.excess_min) {
        cp.excess_min = sel.vexcess;
        cp.r_at_min = R;
        cp.mean_grad_at_min = mg;
      }
      if (mg <= M && sel.vexcess < epsilon * epsilon) {
        regular = true;
        break;
      }
    }
    cp.label = regular ? PointLabel::Regular : PointLabel::SingularCandidate;
    map.points.push_back(std::move(cp));
  }
  return map;
}

CaccioppoliRecord caccioppoli_ratio(const GridFunction& u, const ProblemSpec& problem,
                                    std::span<const double> x, double R, const AffineMap& a) {
  const GrowthParams& g = problem.integrand.params();
  const int m = g.m, n = u.grid.dim;
  CaccioppoliRecord rec;
  GridFunction du = discrete_gradient(u);

  // D(u - a) and (u - a)/R sampled at cell centers
  const GridSpec cg = du.grid;
  std::array<double, 2> c{};
  std::vector<double> diff(m * n), udiff(m);
  auto cell_udiff = [&](int i, int j, std::span<const double> cc, std::span<double> out) {
    for (int comp = 0; comp < m; ++comp) {
      double ubar;
      if (n == 1) {
        ubar = 0.5 * (u.at(i, comp) + u.at(i + 1, comp));
      } else {
        ubar = 0.25 * (u.at(u.grid.index(i, j), comp) + u.at(u.grid.index(i + 1, j), comp) +
                       u.at(u.grid.index(i, j + 1), comp) + u.at(u.grid.index(i + 1, j + 1), comp));
      }
      double aval = a.offset.empty() ? 0.0 : a.offset[comp];
      for (int ax = 0; ax < n; ++ax) aval += a.gradient[comp * n + ax] * cc[ax];
      out[comp] = ubar - aval;
    }
  };

  // Neumann problems are translation invariant: normalize the additive
  // constant to the ball mean of u - a, as the boundary estimate does
  std::vector<double> gauge(m, 0.0);
  if (problem.mode == BoundaryMode::Neumann) {
    int cnt = 0;
    const int cy0 = (n == 2) ? u.grid.cells(1) : 1;
    for (int j = 0; j < cy0; ++j) {
      for (int i = 0; i < u.grid.cells(0); ++i) {
        cg.node_point(i + u.grid.cells(0) * j, std::span<double>(c.data(), n));
        double d2 = 0.0;
        for (int ax = 0; ax < n; ++ax) d2 += (c[ax] - x[ax]) * (c[ax] - x[ax]);
        if (d2 > R * R) continue;
        cell_udiff(i, j, std::span<const double>(c.data(), n), udiff);
        for (int comp = 0; comp < m; ++comp) gauge[comp] += udiff[comp];
        ++cnt;
      }
    }
    if (cnt > 0) {
      for (double& v : gauge) v /= cnt;
    }
  }

  double lhs_acc = 0.0, lo_acc = 0.0, grad_acc = 0.0;
  int lhs_count = 0, count = 0;
  const int cy = (n == 2) ? u.grid.cells(1) : 1;
  for (int j = 0; j < cy; ++j) {
    for (int i = 0; i < u.grid.cells(0); ++i) {
      const int cell = i + u.grid.cells(0) * j;
      cg.node_point(cell, std::span<double>(c.data(), n));
      double d2 = 0.0;
      for (int ax = 0; ax < n; ++ax) d2 += (c[ax] - x[ax]) * (c[ax] - x[ax]);
      if (d2 > R * R) continue;
      for (int comp = 0; comp < m; ++comp) {
        for (int ax = 0; ax < n; ++ax) {
          diff[comp * n + ax] = du.at(cell, comp * n + ax) - a.gradient[comp * n + ax];
        }
      }
      cell_udiff(i, j, std::span<const double>(c.data(), n), udiff);
      for (int comp = 0; comp < m; ++comp) udiff[comp] = (udiff[comp] - gauge[comp]) / R;
      const double vg = v_norm_sq(g.p, g.mu, diff);
      grad_acc += vg;
      lo_acc += v_norm_sq(g.p, g.mu, udiff);
      ++count;
      if (d2 <= 0.25 * R * R) {
        lhs_acc += vg;
        ++lhs_count;
      }
    }
  }
  if (count == 0 || lhs_count == 0) {
    throw std::invalid_argument("caccioppoli_ratio: ball does not cover the lattice");
  }
  rec.lhs = lhs_acc / lhs_count;
  rec.rhs_lower_order = lo_acc / count;

  // L = 1 + [g_N]_{C^{0,alpha}} + ||f||_{L^{n/(1-alpha)}} on the ball
  double holder = 0.0;
  if (problem.neumann_data) {
    std::vector<std::array<double, 2>> bpts;
    std::array<double, 2> bp{};
    for (int f = 0; f < 2 * n; ++f) {
      if (problem.face_tag(f) != BoundaryTag::Neumann) continue;
      const int axis = f / 2;
      bp[axis] = (f % 2 == 0) ? u.grid.lo[axis] : u.grid.hi[axis];
      const int t = 1 - axis;
      const int K = (n == 2) ? u.grid.res[t] : 1;
      for (int k = 0; k < K; ++k) {
        if (n == 2) bp[t] = u.grid.coord(t, k);
        double d2 = 0.0;
        for (int ax = 0; ax < n; ++ax) d2 += (bp[ax] - x[ax]) * (bp[ax] - x[ax]);
        if (d2 <= R * R) bpts.push_back(bp);
      }
    }
    std::vector<double> ga(m), gb(m);
    for (std::size_t i = 0; i < bpts.size(); ++i) {
      for (std::size_t j2 = i + 1; j2 < bpts.size(); ++j2) {
        problem.neumann_data(std::span<const double>(bpts[i].data(), n), ga);
        problem.neumann_data(std::span<const double>(bpts[j2].data(), n), gb);
        double dg = 0.0, dx2 = 0.0;
        for (int comp = 0; comp < m; ++comp) dg += (ga[comp] - gb[comp]) * (ga[comp] - gb[comp]);
        for (int ax = 0; ax < n; ++ax) dx2 += (bpts[i][ax] - bpts[j2][ax]) * (bpts[i][ax] - bpts[j2][ax]);
        if (dx2 > 0.0) holder = std::max(holder, std::sqrt(dg) / std::pow(std::sqrt(dx2), g.alpha));
      }
    }
  }
  double fnorm = 0.0;
  if (problem.forcing) {
    std::vector<double> fv(m);
    const double expo = (g.alpha >= 1.0) ? std::numeric_limits<double>::infinity()
                                         : static_cast<double>(n) / (1.0 - g.alpha);
    double acc = 0.0;
    for (int cell = 0; cell < cg.node_count(); ++cell) {
      cg.node_point(cell, std::span<double>(c.data(), n));
      double d2 = 0.0;
      for (int ax = 0; ax < n; ++ax) d2 += (c[ax] - x[ax]) * (c[ax] - x[ax]);
      if (d2 > R * R) continue;
      problem.forcing(std::span<const double>(c.data(), n), fv);
      const double mag = frobenius(fv);
      if (std::isinf(expo)) {
        acc = std::max(acc, mag);
      } else {
        acc += u.grid.cell_volume() * std::pow(mag, expo);
      }
    }
    fnorm = std::isinf(expo) ? acc : std::pow(acc, 1.0 / expo);
  }
  rec.L = 1.0 + holder + fnorm;

  const double arg = std::pow(R, g.alpha) * rec.L;
  std::array<double, 1> va{arg};
  rec.rhs_vterm = v_norm_sq(g.p_conj(), std::pow(g.mu, g.p - 1.0), va);
  rec.rhs_qp_power = std::pow(grad_acc / count + rec.rhs_lower_order, g.q / g.p);

  const double denom = rec.rhs_lower_order + rec.rhs_vterm + rec.rhs_qp_power;
  rec.ratio = (denom > 0.0) ? rec.lhs / denom : 0.0;
  return rec;
}

std::string classification_to_csv(const ClassificationMap& map, int dim) {
  std::ostringstream os;
  os << (dim == 2 ? "x,y,label,excess_min,R_at_min\n" : "x,label,excess_min,R_at_min\n");
  for (const auto& p : map.points) {
    os << fmt17(p.x[0]);
    if (dim == 2) os << ',' << fmt17(p.x[1]);
    os << ',' << (p.label == PointLabel::Regular ? "regular" : "singular-candidate") << ','
       << fmt17(p.excess_min) << ',' << fmt17(p.r_at_min) << '\n';
  }
  return os.str();
}

std::string profile_to_csv(const ExcessProfile& profile) {
  std::ostringstream os;
  os << "R,excess,mean_grad_norm\n";
  for (std::size_t i = 0; i < profile.radii.size(); ++i) {
    os << fmt17(profile.radii[i]) << ',' << fmt17(profile.excess_values[i]) << ','
       << fmt17(profile.mean_grad_norms[i]) << '\n';
  }
  return os.str();
}

}  // namespace vreg
