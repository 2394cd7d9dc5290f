#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vreg/grid.hpp"

using namespace vreg;

namespace {

GridSpec grid1d(double lo, double hi, int res) {
  GridSpec g;
  g.dim = 1;
  g.lo = {lo, 0.0};
  g.hi = {hi, 1.0};
  g.res = {res, 1};
  return g;
}

GridSpec grid2d(double lo, double hi, int res) {
  GridSpec g;
  g.dim = 2;
  g.lo = {lo, lo};
  g.hi = {hi, hi};
  g.res = {res, res};
  return g;
}

}  // namespace

TEST_CASE("discrete gradient is zero on constants and exact on affine fields") {
  const GridSpec g = grid2d(0.0, 1.0, 17);
  GridFunction c = GridFunction::sample_scalar(g, [](std::span<const double>) { return 3.5; });
  GridFunction dc = discrete_gradient(c);
  for (double v : dc.values) CHECK(v == 0.0);

  // affine with m = 2 components
  GridFunction aff = GridFunction::sample(g, 2, [](std::span<const double> x, std::span<double> out) {
    out[0] = 1.5 * x[0] - 2.0 * x[1] + 0.3;
    out[1] = -0.7 * x[0] + 0.1 * x[1];
  });
  GridFunction da = discrete_gradient(aff);
  for (int idx = 0; idx < da.grid.node_count(); ++idx) {
    CHECK(da.at(idx, 0) == doctest::Approx(1.5).epsilon(1e-13));
    CHECK(da.at(idx, 1) == doctest::Approx(-2.0).epsilon(1e-13));
    CHECK(da.at(idx, 2) == doctest::Approx(-0.7).epsilon(1e-13));
    CHECK(da.at(idx, 3) == doctest::Approx(0.1).epsilon(1e-13));
  }
}

TEST_CASE("gradient of x^2 is exact at cell centers; sine is second order") {
  const GridSpec g = grid1d(0.0, 1.0, 101);
  GridFunction u = GridFunction::sample_scalar(g, [](std::span<const double> x) { return x[0] * x[0]; });
  GridFunction du = discrete_gradient(u);
  for (int i = 0; i < du.grid.node_count(); ++i) {
    const double xc = du.grid.coord(0, i);
    CHECK(du.at(i) == doctest::Approx(2.0 * xc).epsilon(1e-12));
  }

  // forward differences at centers are second order: error ratio ~ 4 per halving
  auto sine_err = [](int res) {
    const GridSpec gs = grid1d(0.0, 1.0, res);
    GridFunction s = GridFunction::sample_scalar(gs, [](std::span<const double> x) { return std::sin(3.0 * x[0]); });
    GridFunction ds = discrete_gradient(s);
    double err = 0.0;
    for (int i = 0; i < ds.grid.node_count(); ++i) {
      err = std::max(err, std::abs(ds.at(i) - 3.0 * std::cos(3.0 * ds.grid.coord(0, i))));
    }
    return err;
  };
  const double e1 = sine_err(51), e2 = sine_err(101);
  CHECK(e1 / e2 > 3.4);
  CHECK(e1 / e2 < 4.6);
}

TEST_CASE("midpoint quadrature: constants, boundary measure, linear exactness") {
  const GridSpec g2 = grid2d(0.0, 1.0, 13);
  GridFunction one2 = GridFunction::sample_scalar(g2, [](std::span<const double>) { return 1.0; });
  CHECK(integrate_scalar(one2) == doctest::Approx(1.0).epsilon(1e-14));
  auto b = boundary_integrate_all(one2);
  CHECK(b[0] == doctest::Approx(4.0).epsilon(1e-14));

  const GridSpec g1 = grid1d(0.0, 1.0, 17);
  GridFunction lin = GridFunction::sample_scalar(g1, [](std::span<const double> x) { return x[0]; });
  CHECK(integrate_scalar(lin) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("shift differences: closed forms and the operator identity") {
  const GridSpec g = grid1d(0.0, 1.0, 33);
  GridFunction aff = GridFunction::sample_scalar(g, [](std::span<const double> x) { return 2.0 * x[0] + 1.0; });
  GridFunction d2 = shift_difference(aff, {3, 0}, 2);
  for (double v : d2.values) CHECK(std::abs(v) < 1e-14);

  GridFunction sq = GridFunction::sample_scalar(g, [](std::span<const double> x) { return x[0] * x[0]; });
  const double h = 4.0 * g.spacing(0);
  GridFunction d2s = shift_difference(sq, {4, 0}, 2);
  for (double v : d2s.values) CHECK(v == doctest::Approx(2.0 * h * h).epsilon(1e-11));
  // Omega^h metadata shrinks by |h| on both sides
  CHECK(d2s.grid.lo[0] == doctest::Approx(g.lo[0] + h));
  CHECK(d2s.grid.hi[0] == doctest::Approx(g.hi[0] - h));

  GridFunction c = GridFunction::sample_scalar(g, [](std::span<const double>) { return 7.0; });
  GridFunction d1 = shift_difference(c, {5, 0}, 1);
  for (double v : d1.values) CHECK(v == 0.0);

  // Delta_h(-Delta_{-h}) = Delta_h^2 as operators on an arbitrary field
  Rng rng(3);
  GridFunction r = GridFunction::sample_scalar(g, [&](std::span<const double>) { return rng.normal(); });
  GridFunction a1 = shift_difference(r, {2, 0}, 1);                   // Delta_h
  GridFunction a2 = shift_difference(a1, {-2, 0}, 1);                 // Delta_{-h} Delta_h
  GridFunction b2 = shift_difference(r, {2, 0}, 2);                   // Delta_h^2
  REQUIRE(a2.grid.node_count() == b2.grid.node_count());
  for (int i = 0; i < b2.grid.node_count(); ++i) {
    CHECK(-a2.at(i) == doctest::Approx(b2.at(i)).epsilon(1e-13));  // Delta_h(-Delta_{-h}) = Delta_h^2
  }

  CHECK_THROWS_AS(shift_difference(c, {0, 0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(shift_difference(c, {40, 0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(shift_difference(c, {1, 0}, 3), std::invalid_argument);
}

TEST_CASE("telescoping identity: node sums of Delta_h collapse to boundary slabs") {
  const GridSpec g = grid1d(0.0, 2.0, 41);
  Rng rng(13);
  GridFunction u = GridFunction::sample_scalar(g, [&](std::span<const double>) { return rng.normal(); });
  const int s = 5;
  GridFunction d = shift_difference(u, {s, 0}, 1);
  double lhs = 0.0;
  for (double v : d.values) lhs += v;
  double right = 0.0, left = 0.0;
  for (int i = 0; i < s; ++i) {
    right += u.at(g.res[0] - s + i);
    left += u.at(i);
  }
  CHECK(lhs == doctest::Approx(right - left).epsilon(1e-12));
}

TEST_CASE("extensions: odd, even, zero across a face") {
  const GridSpec g = grid1d(0.0, 1.0, 9);
  GridFunction u = GridFunction::sample_scalar(g, [](std::span<const double> x) { return x[0]; });

  GridFunction odd = extend(u, XMin, Parity::Odd);
  CHECK(odd.grid.res[0] == 17);
  CHECK(odd.grid.lo[0] == doctest::Approx(-1.0));
  for (int i = 0; i < 17; ++i) {
    CHECK(odd.at(i) == doctest::Approx(odd.grid.coord(0, i)).epsilon(1e-13));  // x stays x
  }

  GridFunction even = extend(u, XMin, Parity::Even);
  for (int i = 0; i < 17; ++i) {
    CHECK(even.at(i) == doctest::Approx(std::abs(even.grid.coord(0, i))).epsilon(1e-13));
  }

  GridFunction ones = GridFunction::sample_scalar(g, [](std::span<const double>) { return 1.0; });
  GridFunction zero = extend(ones, XMin, Parity::Zero);
  for (int i = 0; i < 17; ++i) {
    const double expect = zero.grid.coord(0, i) < 0.0 ? 0.0 : 1.0;
    CHECK(zero.at(i) == expect);
  }

  // odd extension of a field with nonzero trace warns
  std::string warning;
  extend(ones, XMin, Parity::Odd, &warning);
  CHECK(!warning.empty());
  warning.clear();
  extend(u, XMin, Parity::Odd, &warning);  // trace of x at x=0 vanishes
  CHECK(warning.empty());

  // YMin face does not exist in 1D
  CHECK_THROWS_AS(extend(u, YMin, Parity::Odd), std::invalid_argument);
}

TEST_CASE("odd and even extensions commute across orthogonal faces (corner case)") {
  const GridSpec g = grid2d(0.0, 1.0, 7);
  Rng rng(17);
  GridFunction u = GridFunction::sample_scalar(g, [&](std::span<const double> x) {
    return x[0] * (1.0 + 0.3 * rng.uniform01()) + x[1];  // vanishes on x = 0
  });
  GridFunction a = extend(extend(u, XMin, Parity::Odd), YMin, Parity::Even);
  GridFunction b = extend(extend(u, YMin, Parity::Even), XMin, Parity::Odd);
  REQUIRE(a.grid.node_count() == b.grid.node_count());
  CHECK(a.grid.lo[0] == b.grid.lo[0]);
  CHECK(a.grid.lo[1] == b.grid.lo[1]);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("smoothing operator: affine preservation and annulus locality") {
  const GridSpec g = grid2d(-1.0, 1.0, 41);
  const std::array<double, 2> center{0.0, 0.0};
  const double rp = 0.3, sp = 0.7;

  GridFunction aff = GridFunction::sample_scalar(g, [](std::span<const double> x) {
    return 0.8 * x[0] - 1.1 * x[1] + 0.25;
  });
  GridFunction ta = smooth_annulus(aff, center, rp, sp);
  for (int idx = 0; idx < g.node_count(); ++idx) {
    CHECK(ta.at(idx) == doctest::Approx(aff.at(idx)).epsilon(1e-3));
    CHECK(std::abs(ta.at(idx) - aff.at(idx)) < 1e-12 * (1.0 + std::abs(aff.at(idx))));
  }

  Rng rng(19);
  GridFunction u = GridFunction::sample_scalar(g, [&](std::span<const double>) { return rng.normal(); });
  GridFunction tu = smooth_annulus(u, center, rp, sp);
  std::array<double, 2> x{};
  for (int idx = 0; idx < g.node_count(); ++idx) {
    g.node_point(idx, x);
    const double d = std::sqrt(x[0] * x[0] + x[1] * x[1]);
    if (d <= rp || d >= sp) {
      CHECK(tu.at(idx) == u.at(idx));  // identity outside the open annulus, exactly
    }
  }

  // jump inside the annulus: |DTu| controlled by |Du| as a finite ratio
  GridFunction jump = GridFunction::sample_scalar(g, [](std::span<const double> x2) {
    return x2[0] >= 0.0 ? 1.0 : 0.0;
  });
  GridFunction tj = smooth_annulus(jump, center, rp, sp);
  auto l1_grad = [](const GridFunction& f) {
    GridFunction df = discrete_gradient(f);
    double acc = 0.0;
    for (int i = 0; i < df.grid.node_count(); ++i) {
      acc += std::hypot(df.at(i, 0), df.at(i, 1)) * f.grid.cell_volume();
    }
    return acc;
  };
  const double ratio = l1_grad(tj) / l1_grad(jump);
  CHECK(std::isfinite(ratio));
  CHECK(ratio > 0.0);
  MESSAGE("smoothing L1-gradient ratio (recorded, not asserted): ", ratio);

  CHECK_THROWS_AS(smooth_annulus(u, center, 0.5, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(smooth_annulus(u, center, 0.7, 0.3), std::invalid_argument);
}

TEST_CASE("cancellation identity on the staggered symmetric lattice") {
  const int N = 64;
  const double s = 1.0;
  auto pts = staggered_symmetric_points(s, N);
  REQUIRE(pts.size() == 2 * static_cast<std::size_t>(N));
  CHECK(pts[N] == doctest::Approx(0.5 * s / N));
  CHECK(pts[N - 1] == doctest::Approx(-0.5 * s / N));

  Rng rng(23);
  // random smooth coefficients under an even window vanishing near +-s
  auto window = [&](double t) {
    const double w = std::max(0.0, 1.0 - std::pow(std::abs(t) / (0.6 * s), 8.0));
    return w;
  };
  auto make_field = [&](bool odd, std::uint64_t seed) {
    Rng r(seed);
    std::array<double, 6> coef{};
    for (auto& c : coef) c = r.normal();
    std::vector<double> f(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double t = pts[i];
      double v = 0.0;
      for (int k = 0; k < 6; ++k) {
        v += coef[k] * (odd ? std::sin((k + 1) * 3.0 * t) : std::cos((k + 1) * 3.0 * t));
      }
      f[i] = v * window(t);
    }
    return f;
  };

  for (int trial = 0; trial < 50; ++trial) {
    const bool odd = trial % 2 == 0;
    auto sig = make_field(odd, 100 + trial);
    auto tau = make_field(odd, 200 + trial);
    const int hsteps = 1 + trial % (N / 2);
    const double res = cancellation_check(sig, tau, 1, s, hsteps, odd ? Parity::Odd : Parity::Even);
    double scale = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i) scale += std::abs(sig[i] * tau[i]) * (s / N);
    CHECK(res <= 1e-12 * std::max(scale, 1.0));
  }

  // deliberate parity violation: sigma even, tau odd, generically nonzero
  auto sig_even = make_field(false, 7);
  auto tau_odd = make_field(true, 8);
  const double res = cancellation_check(sig_even, tau_odd, 1, s, 6, Parity::Even);
  CHECK(res > 1e-8);

  CHECK_THROWS_AS(cancellation_check(sig_even, tau_odd, 1, s, 0, Parity::Even),
                  std::invalid_argument);
  CHECK_THROWS_AS(cancellation_check(sig_even, tau_odd, 1, s, 3, Parity::Zero),
                  std::invalid_argument);
}

TEST_CASE("field CSV serialization is lexicographic with a fixed header") {
  const GridSpec g = grid2d(0.0, 1.0, 3);
  GridFunction u = GridFunction::sample_scalar(g, [](std::span<const double> x) { return x[0] + 10.0 * x[1]; });
  const std::string csv = field_to_csv(u);
  CHECK(csv.rfind("x,y,component_index,value\n", 0) == 0);
  // first data row is the lexicographically smallest node (0,0)
  CHECK(csv.find("\n0,0,0,0\n") != std::string::npos);
}
