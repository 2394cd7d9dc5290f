#include "vreg/integrand.hpp"

#include <algorithm>
#include <cmath>

namespace vreg {

void GrowthParams::validate() const {
  if (!(p > 1.0) || !(q >= p)) throw std::invalid_argument("GrowthParams: need 1 < p <= q");
  if (!(alpha > 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("GrowthParams: alpha in (0,1]");
  if (!(mu >= 0.0)) throw std::invalid_argument("GrowthParams: mu >= 0");
  if (!(nu > 0.0) || !(Lambda >= nu)) throw std::invalid_argument("GrowthParams: 0 < nu <= Lambda");
  if (n < 1 || n > 2) throw std::invalid_argument("GrowthParams: n must be 1 or 2");
  if (m < 1) throw std::invalid_argument("GrowthParams: m >= 1");
}

double Coefficient::operator()(std::span<const double> x) const {
  auto centered = [&](int axis) {
    const double c = axis < static_cast<int>(center.size()) ? center[axis] : 0.0;
    return x[axis] - c;
  };
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Const:
      return a0;
    case Kind::Power: {
      double r2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r2 += centered(static_cast<int>(i)) * centered(static_cast<int>(i));
      return a0 * std::pow(r2, 0.5 * gamma);
    }
    case Kind::Step:
      return centered(0) >= 0.0 ? a0 : 0.0;
    case Kind::Checkerboard: {
      // a0 * max(0, (x1-c1)(x2-c2))^{gamma/2}: vanishes on two opposite
      // quadrants, gamma-Hölder across the axes.
      const double s = x.size() >= 2 ? centered(0) * centered(1) : centered(0);
      return s > 0.0 ? a0 * std::pow(s, 0.5 * gamma) : 0.0;
    }
    case Kind::Custom:
      return fn(x);
  }
  return 0.0;
}

void v_transform(double p, double mu, std::span<const double> z, std::span<double> out) {
  if (!(p >= 1.0) || !(mu >= 0.0)) throw std::invalid_argument("v_transform: need p >= 1, mu >= 0");
  require_finite(z, "v_transform");
  double z2 = 0.0;
  for (double v : z) z2 += v * v;
  if (z2 == 0.0 && mu == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double f = std::pow(mu * mu + z2, 0.25 * (p - 2.0));
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = f * z[i];
}

double v_norm_sq(double p, double mu, std::span<const double> z) {
  double z2 = 0.0;
  for (double v : z) z2 += v * v;
  if (z2 == 0.0) return 0.0;
  return std::pow(mu * mu + z2, 0.5 * (p - 2.0)) * z2;
}

namespace {

// e_{p,mu}(z) = (mu^2+|z|^2)^{p/2} - mu^p, with gradient p (mu^2+|z|^2)^{(p-2)/2} z.
double e_energy(double p, double mu, double z2) {
  return std::pow(mu * mu + z2, 0.5 * p) - std::pow(mu, p);
}

double e_energy_dfactor(double p, double mu, double z2) {
  if (z2 == 0.0 && mu == 0.0) return 0.0;  // p > 1: gradient vanishes at the origin
  return p * std::pow(mu * mu + z2, 0.5 * (p - 2.0));
}

double norm_sq(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return s;
}

}  // namespace

IntegrandSpec IntegrandSpec::p_energy(GrowthParams params, double scale) {
  params.validate();
  IntegrandSpec s;
  s.kind_ = Kind::PEnergy;
  s.params_ = params;
  s.scale_ = scale;
  return s;
}

IntegrandSpec IntegrandSpec::double_phase(GrowthParams params, Coefficient a) {
  params.validate();
  IntegrandSpec s;
  s.kind_ = Kind::DoublePhase;
  s.params_ = params;
  s.coeff_ = std::move(a);
  return s;
}

IntegrandSpec IntegrandSpec::radial_modulated(GrowthParams params, Coefficient a, double scale) {
  params.validate();
  IntegrandSpec s;
  s.kind_ = Kind::RadialModulated;
  s.params_ = params;
  s.coeff_ = std::move(a);
  s.scale_ = scale;
  return s;
}

IntegrandSpec IntegrandSpec::user_defined(GrowthParams params, EvalFn eval, GradFn grad) {
  params.validate();
  IntegrandSpec s;
  s.kind_ = Kind::UserDefined;
  s.params_ = params;
  s.custom_eval_ = std::move(eval);
  s.custom_grad_ = std::move(grad);
  return s;
}

IntegrandSpec IntegrandSpec::shifted(std::span<const double> z0) const {
  require_finite(z0, "shifted");
  if (z0.size() != static_cast<std::size_t>(params_.m * params_.n)) {
    throw std::invalid_argument("shifted: z0 must be an m x n matrix");
  }
  IntegrandSpec s;
  s.kind_ = Kind::Shifted;
  s.params_ = params_;
  s.base_ = std::make_shared<IntegrandSpec>(*this);
  s.shift_.assign(z0.begin(), z0.end());
  return s;
}

IntegrandSpec IntegrandSpec::regularized(double epsilon) const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("regularized: epsilon > 0 required");
  IntegrandSpec s;
  s.kind_ = Kind::Regularized;
  s.params_ = params_;
  s.base_ = std::make_shared<IntegrandSpec>(*this);
  s.epsilon_ = epsilon;
  return s;
}

IntegrandSpec IntegrandSpec::with_mu(double mu) const {
  IntegrandSpec s(*this);
  s.params_.mu = mu;
  if (base_) s.base_ = std::make_shared<IntegrandSpec>(base_->with_mu(mu));
  return s;
}

std::string IntegrandSpec::kind_name() const {
  switch (kind_) {
    case Kind::PEnergy: return "p-energy";
    case Kind::DoublePhase: return "double-phase";
    case Kind::RadialModulated: return "radial-modulated";
    case Kind::Shifted: return "shifted";
    case Kind::Regularized: return "regularized";
    case Kind::UserDefined: return "user-defined";
  }
  return "?";
}

double IntegrandSpec::eval(std::span<const double> x, std::span<const double> z) const {
  require_finite(x, "eval");
  require_finite(z, "eval");
  return eval_impl(x, z);
}

void IntegrandSpec::grad_z(std::span<const double> x, std::span<const double> z,
                           std::span<double> out) const {
  require_finite(x, "grad_z");
  require_finite(z, "grad_z");
  grad_impl(x, z, out);
}

double IntegrandSpec::eval_impl(std::span<const double> x, std::span<const double> z) const {
  const GrowthParams& g = params_;
  switch (kind_) {
    case Kind::PEnergy:
      return scale_ * e_energy(g.p, g.mu, norm_sq(z));
    case Kind::DoublePhase: {
      const double z2 = norm_sq(z);
      return e_energy(g.p, g.mu, z2) + (*coeff_)(x)*e_energy(g.q, g.mu, z2);
    }
    case Kind::RadialModulated:
      return scale_ * (1.0 + (*coeff_)(x)) * e_energy(g.p, g.mu, norm_sq(z));
    case Kind::Shifted: {
      std::vector<double> zs(z.size()), gr(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) zs[i] = z[i] + shift_[i];
      base_->grad_impl(x, shift_, gr);
      double dot = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) dot += gr[i] * z[i];
      return base_->eval_impl(x, zs) - base_->eval_impl(x, shift_) - dot;
    }
    case Kind::Regularized:
      return base_->eval_impl(x, z) + epsilon_ * std::pow(norm_sq(z), 0.5 * g.q);
    case Kind::UserDefined:
      return custom_eval_(x, z);
  }
  return 0.0;
}

void IntegrandSpec::grad_impl(std::span<const double> x, std::span<const double> z,
                              std::span<double> out) const {
  const GrowthParams& g = params_;
  switch (kind_) {
    case Kind::PEnergy: {
      const double f = scale_ * e_energy_dfactor(g.p, g.mu, norm_sq(z));
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = f * z[i];
      return;
    }
    case Kind::DoublePhase: {
      const double z2 = norm_sq(z);
      const double f = e_energy_dfactor(g.p, g.mu, z2) + (*coeff_)(x)*e_energy_dfactor(g.q, g.mu, z2);
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = f * z[i];
      return;
    }
    case Kind::RadialModulated: {
      const double f = scale_ * (1.0 + (*coeff_)(x)) * e_energy_dfactor(g.p, g.mu, norm_sq(z));
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = f * z[i];
      return;
    }
    case Kind::Shifted: {
      std::vector<double> zs(z.size()), g0(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) zs[i] = z[i] + shift_[i];
      base_->grad_impl(x, zs, out);
      base_->grad_impl(x, shift_, g0);
      for (std::size_t i = 0; i < z.size(); ++i) out[i] -= g0[i];
      return;
    }
    case Kind::Regularized: {
      base_->grad_impl(x, z, out);
      const double z2 = norm_sq(z);
      if (z2 > 0.0) {
        const double f = epsilon_ * g.q * std::pow(z2, 0.5 * (g.q - 2.0));
        for (std::size_t i = 0; i < z.size(); ++i) out[i] += f * z[i];
      }
      return;
    }
    case Kind::UserDefined:
      custom_grad_(x, z, out);
      return;
  }
}

const HypothesisCheck* GrowthReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

GrowthReport verify_growth(const IntegrandSpec& spec, int sample_count, std::uint64_t seed,
                           double box_lo, double box_hi) {
  const GrowthParams& g = spec.params();
  const int zdim = g.m * g.n;
  GrowthReport rep;
  if (g.mu == 0.0) rep.warnings.push_back("mu = 0: evaluation permitted but the solver requires mu > 0");

  Rng rng(seed);
  std::vector<double> x(g.n), y(g.n), z(zdim), w(zdim), gr(zdim), gr2(zdim), mid(zdim);

  auto sample_x = [&](std::span<double> out) {
    for (auto& v : out) v = rng.uniform(box_lo, box_hi);
  };
  auto sample_z = [&](std::span<double> out) {
    rng.unit_vector(out);
    const double r = rng.log_uniform(1e-3, 1e3);
    for (auto& v : out) v *= r;
  };

  double h1 = std::numeric_limits<double>::infinity();
  double h2 = 0.0, h3 = 0.0, h4 = 0.0;
  double lower = std::numeric_limits<double>::infinity();
  double fenchel = std::numeric_limits<double>::infinity();
  double convexity_violation = 0.0;
  bool finite_ok = true;
  std::string finite_note;

  for (int s = 0; s < sample_count; ++s) {
    sample_x(x);
    sample_z(z);
    sample_z(w);
    const double z2 = norm_sq(z);
    const double w2 = norm_sq(w);

    double Fz, Fw;
    try {
      Fz = spec.eval(x, z);
      Fw = spec.eval(x, w);
      spec.grad_z(x, w, gr);
    } catch (const std::exception& e) {
      finite_ok = false;
      finite_note = e.what();
      continue;
    }
    if (!std::isfinite(Fz) || !std::isfinite(Fw)) {
      finite_ok = false;
      finite_note = "non-finite energy sample";
      continue;
    }

    // (H2)
    h2 = std::max(h2, std::abs(Fz) / std::pow(1.0 + z2, 0.5 * g.q));

    // (H1) quantitative ellipticity quotient
    double dzw2 = 0.0, dot = 0.0;
    for (int i = 0; i < zdim; ++i) {
      const double d = z[i] - w[i];
      dzw2 += d * d;
      dot += gr[i] * d;
    }
    if (dzw2 > 1e-12 * (z2 + w2)) {
      const double quotient = (Fz - Fw - dot) / dzw2;
      const double weight = std::pow(g.mu * g.mu + z2 + w2, 0.5 * (g.p - 2.0));
      h1 = std::min(h1, quotient / weight);
    }

    // (H3), (H4): pairs at dyadic separations catch discontinuous coefficients.
    sample_x(y);
    if (s % 2 == 0) {
      const int j = s % 20;
      const double d = std::ldexp(box_hi - box_lo, -j);
      for (int i = 0; i < g.n; ++i) y[i] = std::clamp(x[i] + (rng.uniform01() < 0.5 ? -d : d), box_lo, box_hi);
    }
    double dxy = 0.0;
    for (int i = 0; i < g.n; ++i) dxy += (x[i] - y[i]) * (x[i] - y[i]);
    dxy = std::sqrt(dxy);
    if (dxy > 0.0) {
      double Fyz;
      try {
        Fyz = spec.eval(y, z);
        spec.grad_z(y, z, gr2);
        spec.grad_z(x, z, gr);
      } catch (const std::exception& e) {
        finite_ok = false;
        finite_note = e.what();
        continue;
      }
      h3 = std::max(h3, std::abs(Fz - Fyz) / (std::pow(dxy, g.alpha) * std::pow(1.0 + z2, 0.5 * g.q)));
      double dg = 0.0;
      for (int i = 0; i < zdim; ++i) dg += (gr[i] - gr2[i]) * (gr[i] - gr2[i]);
      h4 = std::max(h4, std::sqrt(dg) / (std::pow(dxy, g.alpha) * std::pow(1.0 + z2, 0.5 * (g.q - 1.0))));
    }

    // lower growth bound F >= c |z|^p - 1
    lower = std::min(lower, (Fz + 1.0) / std::pow(z2, 0.5 * g.p));

    // Fenchel coercivity: dF.z >= c (|z|^p + |dF|^{q'} - 1)
    spec.grad_z(x, z, gr);
    double gz = 0.0, gnorm2 = 0.0;
    for (int i = 0; i < zdim; ++i) {
      gz += gr[i] * z[i];
      gnorm2 += gr[i] * gr[i];
    }
    const double denom = std::pow(z2, 0.5 * g.p) + std::pow(gnorm2, 0.5 * g.q_conj()) - 1.0;
    if (denom > 1e-6) fenchel = std::min(fenchel, gz / denom);

    // segment convexity
    for (int i = 0; i < zdim; ++i) mid[i] = 0.5 * (z[i] + w[i]);
    const double Fm = spec.eval(x, mid);
    const double slack = 1e-9 * (1.0 + std::abs(Fz) + std::abs(Fw));
    convexity_violation = std::max(convexity_violation, Fm - 0.5 * (Fz + Fw) - slack);
  }

  const double slack = 1.05;
  rep.checks.push_back({"H1", h1, g.nu, h1 >= g.nu / slack,
                        "min sampled ellipticity quotient / (mu^2+|z|^2+|w|^2)^{(p-2)/2}"});
  rep.checks.push_back({"H2", h2, g.Lambda, h2 <= g.Lambda * slack,
                        "max sampled |F| / (1+|z|^2)^{q/2}"});
  rep.checks.push_back({"H3", h3, g.Lambda, h3 <= g.Lambda * slack,
                        "max sampled |F(x,z)-F(y,z)| / (|x-y|^alpha (1+|z|^2)^{q/2})"});
  rep.checks.push_back({"H4", h4, g.Lambda, h4 <= g.Lambda * slack,
                        "max sampled |dF(x,z)-dF(y,z)| / (|x-y|^alpha (1+|z|^2)^{(q-1)/2})"});
  rep.checks.push_back({"lower", lower, 0.0, lower > 0.0, "min sampled (F+1)/|z|^p"});
  rep.checks.push_back({"fenchel", fenchel, 0.0, std::isfinite(fenchel) && fenchel > 0.0,
                        "min sampled dF.z / (|z|^p + |dF|^{q'} - 1)"});
  rep.checks.push_back({"convexity", convexity_violation, 0.0, convexity_violation <= 0.0,
                        "max sampled midpoint-convexity violation"});
  if (!finite_ok) {
    rep.checks.push_back({"finite", 0.0, 0.0, false, "sampling produced non-finite values: " + finite_note});
  }
  for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
  return rep;
}

}  // namespace vreg
