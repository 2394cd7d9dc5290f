#include "vreg/exponents.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace vreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void Scenario::validate() const {
  if (!(p > 1.0) || !(q >= p)) throw std::invalid_argument("Scenario: need 1 < p <= q");
  if (!(alpha > 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("Scenario: alpha in (0,1]");
  if (n < 1) throw std::invalid_argument("Scenario: n >= 1");
  if (std::isfinite(beta) && !(beta >= alpha && beta <= 2.0)) {
    throw std::invalid_argument("Scenario: beta must lie in [alpha, 2]");
  }
}

QRange q_range(const Scenario& sc) {
  sc.validate();
  QRange r;
  const double n = sc.n;
  r.bounds["basic"] = (n + sc.alpha) * sc.p / n;
  r.bounds["apriori"] = (n > sc.alpha) ? n * sc.p / (n - sc.alpha) : kInf;
  r.bounds["autonomous"] = (n > 1) ? std::max(n * sc.p / (n - 1.0), sc.p + 1.0) : sc.p + 1.0;
  r.bounds["partial_regularity"] = (n > 1) ? std::min(n * sc.p / (n - 1.0), sc.p + 1.0) : sc.p + 1.0;
  for (const auto& [k, v] : r.bounds) r.satisfied[k] = sc.q < v;
  return r;
}

double singular_dim_bound(const Scenario& sc) {
  sc.validate();
  const double pc = sc.p_conj();
  double bound;
  if (sc.strong_data()) {
    bound = sc.n - std::min(2.0 * sc.alpha, pc * sc.beta);
  } else {
    bound = sc.n - sc.alpha * std::min(2.0, pc);
  }
  return std::max(0.0, bound);
}

BoundaryCondition boundary_regularity_condition(const Scenario& sc) {
  sc.validate();
  BoundaryCondition out;
  const double pc = sc.p_conj();
  if (sc.autonomous) {
    out.holds = 1.0 > std::max(0.5, 1.0 / pc);
    out.theorem = "regular-boundary-points (autonomous: alpha effectively 1)";
    out.inequality = "1 > max(1/2, 1/p') = " + num(std::max(0.5, 1.0 / pc));
    return out;
  }
  if (sc.bc == Bc::Neumann && !sc.homogeneous_boundary) {
    const double b = std::isfinite(sc.g_regularity) ? std::min(sc.g_regularity, sc.beta) : sc.beta;
    out.applicable = std::isfinite(b);
    out.holds = out.applicable && sc.alpha > 0.5 && b > std::max(0.5, 1.0 / pc);
    out.theorem = "nonhomogeneous-neumann";
    out.inequality = "alpha > 1/2 and beta = " + num(b) + " > max(1/2, 1/p') = " +
                     num(std::max(0.5, 1.0 / pc));
    return out;
  }
  if (sc.strong_data()) {
    out.holds = sc.alpha > 0.5 && sc.beta > 1.0 / pc;
    out.theorem = "regular-boundary-points (strong data)";
    out.inequality = "alpha = " + num(sc.alpha) + " > 1/2 and beta = " + num(sc.beta) +
                     " > 1/p' = " + num(1.0 / pc);
    return out;
  }
  out.holds = sc.alpha > std::max(0.5, 1.0 / pc);
  out.theorem = "regular-boundary-points";
  out.inequality = "alpha = " + num(sc.alpha) + " > max(1/2, 1/p') = " + num(std::max(0.5, 1.0 / pc));
  return out;
}

namespace {

// Case threshold: below it tau_{2,0} > 2 and the two-step regime is needed.
// sigma_loss is the epsilon -> 0 limit of delta + n(1/tau_2 - 1/2).
struct BranchForms {
  bool subquad;  // p < 2 or the strong-data Step-5 estimate
  double threshold(const Scenario& sc) const {
    if (sc.q == sc.p) return 0.0;
    return subquad ? sc.n * (sc.q - sc.p) / (2.0 * sc.q - sc.p)
                   : sc.n * (sc.q - sc.p) / (2.0 * (sc.q - 1.0));
  }
  double sigma_loss(const Scenario& sc, double delta) const {
    return subquad ? (2.0 * sc.q / sc.p) * delta + sc.n * (sc.p - sc.q) / sc.p
                   : sc.q * delta + sc.n * (sc.p - sc.q) / 2.0;
  }
  double tau20(const Scenario& sc, double delta) const {
    const double tau1 = (sc.n > 2.0 * delta) ? 2.0 * sc.n / (sc.n - 2.0 * delta) : kInf;
    const double inv = subquad ? 1.0 - (2.0 * sc.q / sc.p - 1.0) / tau1
                               : sc.p / 2.0 - (sc.q - 1.0) / tau1;
    return inv > 0.0 ? 1.0 / inv : kInf;
  }
};

double next_delta(const Scenario& sc, double delta, double sigma) {
  if (sc.strong_data()) {
    return std::min({1.0, sc.beta / 2.0 + delta / sc.p, sc.alpha / 2.0 + sigma / 2.0});
  }
  return sc.alpha / 2.0 + std::min(delta, sigma) / std::max(2.0, sc.p);
}

}  // namespace

double kappa_infinity(const Scenario& sc) {
  const double n = sc.n, p = sc.p, q = sc.q, a = sc.alpha;
  if (p >= 2.0) {
    const double pc = sc.p_conj();
    const double denom = n * p - n * q + a * pc * q;
    if (denom <= 0.0) return kInf;  // interpolation exponent does not exist
    return a * pc * q / (p * denom);
  }
  const double denom = p / q - (n - 2.0 * a) / n;
  if (denom <= 0.0) return kInf;
  return 0.5 + (q - p) / (2.0 * q) / denom;
}

IterationTrace iterate_deltas(const Scenario& sc, int k_max) {
  sc.validate();
  IterationTrace tr;
  tr.epsilon_slack = 0.0;

  const double apriori = (sc.n > sc.alpha) ? sc.n * sc.p / (sc.n - sc.alpha) : kInf;
  if (!(sc.q < apriori)) {
    tr.applicable = false;
    tr.reason = "q >= np/(n-alpha): the iteration does not close (kappa_infinity >= 1)";
    tr.kappa_infinity = kappa_infinity(sc);
    return tr;
  }

  BranchForms forms{sc.p < 2.0 || sc.strong_data()};
  const bool neumann_cap = sc.bc == Bc::Neumann && !sc.homogeneous_boundary && sc.radial;

  double delta = sc.alpha / 2.0;
  tr.deltas.push_back(delta);
  for (int k = 0; k < k_max; ++k) {
    IterStep step;
    step.delta = delta;
    step.xi = (k == 0) ? kInf : ((sc.n > 2.0 * tr.deltas[k - 1]) ? sc.n / (sc.n - 2.0 * tr.deltas[k - 1]) : kInf);
    if (k >= 1) {
      const double inv_xi = std::isinf(step.xi) ? 0.0 : 1.0 / step.xi;
      if (sc.p >= 2.0) {
        const double denom = sc.p / sc.q - inv_xi;
        step.theta = denom > 0.0 ? (sc.q - sc.p) / (sc.q * (sc.q - 1.0)) / denom
                                 : std::numeric_limits<double>::quiet_NaN();
        step.kappa = 1.0 / sc.p + (sc.q - 1.0) / sc.p * step.theta;
      } else {
        const double denom = sc.p / sc.q - inv_xi;
        step.theta = denom > 0.0
                         ? sc.p * (sc.q - sc.p) / (sc.q * (2.0 * sc.q - sc.p)) / denom
                         : std::numeric_limits<double>::quiet_NaN();
        step.kappa = 0.5 + (2.0 * sc.q - sc.p) / (2.0 * sc.p) * step.theta;
      }
    }

    const double threshold = forms.threshold(sc);
    const double target = next_delta(sc, delta, delta);  // case-b value of delta_{k+1}
    if (delta >= threshold) {
      step.branch = 'b';
      step.sigma = delta;
      step.tau2 = 2.0;
      step.tau1 = (sc.n > 2.0 * delta) ? 2.0 * sc.n / (sc.n - 2.0 * delta) : kInf;
    } else {
      step.branch = 'a';
      step.tau1 = (sc.n > 2.0 * delta) ? 2.0 * sc.n / (sc.n - 2.0 * delta) : kInf;
      step.tau2 = forms.tau20(sc, delta);
      step.sigma = forms.sigma_loss(sc, delta);
      // two-step inner recursion: climbs geometrically to the threshold or
      // to the case-b target, whichever comes first
      double dj = delta;
      for (int j = 0; j < 500; ++j) {
        if (dj >= threshold || dj >= target) break;
        dj = next_delta(sc, dj, forms.sigma_loss(sc, dj));
        step.inner_deltas.push_back(dj);
        ++step.inner_steps;
      }
    }

    const double next = target;
    tr.steps.push_back(std::move(step));
    tr.deltas.push_back(next);
    const bool fixed_point = std::abs(next - delta) < 1e-15;
    delta = next;
    // even extension preserves regularity only below 1/2: once an iterate
    // reaches it, the step just taken is the last (delta_0 > 1/2 flag)
    if (neumann_cap && delta >= 0.5) {
      tr.neumann_capped = delta > 0.5;
      break;
    }
    if (fixed_point) break;
  }
  tr.limit = delta;
  tr.kappa_infinity = kappa_infinity(sc);
  return tr;
}

ExponentReport predicted_delta(const Scenario& sc) {
  sc.validate();
  ExponentReport rep;
  const QRange qr = q_range(sc);
  rep.q_upper_bounds = qr.bounds;
  const double pc = sc.p_conj();

  if (sc.strong_data()) {
    rep.delta_predicted = std::min(pc * sc.beta / 2.0, sc.alpha);
  } else {
    rep.delta_predicted = (sc.alpha / 2.0) * std::min(2.0, pc);
  }
  if (sc.bc == Bc::Neumann && !sc.homogeneous_boundary && sc.radial &&
      rep.delta_predicted > 0.5) {
    rep.delta_neumann_cap = true;
    rep.notes.push_back(
        "inhomogeneous Neumann: delta capped at min(predicted, delta_0) with delta_0 > 1/2 "
        "unquantified");
  }

  rep.singular_dim_bound = singular_dim_bound(sc);
  double raw = sc.strong_data() ? sc.n - std::min(2.0 * sc.alpha, pc * sc.beta)
                                : sc.n - sc.alpha * std::min(2.0, pc);
  rep.dim_bound_clamped = raw < 0.0;
  if (rep.dim_bound_clamped) rep.notes.push_back("dimension bound clamped at 0");
  rep.boundary_regular = boundary_regularity_condition(sc);

  const bool below_basic = qr.satisfied.at("basic");
  const bool below_apriori = qr.satisfied.at("apriori");
  if (below_basic || (sc.apriori_w1q && below_apriori)) {
    rep.applicable.push_back("interior-improved");
    if (below_basic) rep.applicable.push_back("basic-neumann");
    if (sc.radial && sc.homogeneous_boundary) rep.applicable.push_back("global-radial");
    if (sc.radial && sc.bc == Bc::Neumann) rep.applicable.push_back("radial-neumann");
  }
  if (sc.autonomous && sc.p >= 2.0 && qr.satisfied.at("autonomous")) {
    rep.applicable.push_back("autonomous-improved");
  }
  if (qr.satisfied.at("partial_regularity")) rep.applicable.push_back("eps-regularity");
  if (rep.applicable.empty()) rep.notes.push_back("q outside every admissible range: applicable = none");
  if (sc.q == qr.bounds.at("basic")) {
    rep.notes.push_back("q equals (n+alpha)p/n: W^{1,q} regularity open, calculator inapplicable");
  }
  return rep;
}

EmbeddingResult embedding_check(double s, double p, double s1, double p1, double q_fine,
                                double q1_fine, int n) {
  EmbeddingResult r;
  if (!(p >= 1.0 && p1 >= p) || !(s1 > 0.0 && s1 < s && s < 2.0) || !(q_fine >= 1.0 && q1_fine >= 1.0)) {
    r.applicable = false;
    return r;
  }
  const double lhs = s - static_cast<double>(n) / p;
  const double rhs = s1 - static_cast<double>(n) / p1;
  r.holds = (q_fine > q1_fine) ? (lhs > rhs) : (lhs >= rhs);
  return r;
}

}  // namespace vreg
