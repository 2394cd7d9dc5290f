#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vreg/util.hpp"

namespace vreg {

/// Structural constants of a (p,q)-growth integrand. `nu` and `Lambda` are the
/// declared ellipticity/growth constants checked by verify_growth; `mu` is the
/// V-function shift parameter.
struct GrowthParams {
  double p = 2.0;
  double q = 2.0;
  double alpha = 1.0;
  double mu = 0.0;
  double nu = 0.25;
  double Lambda = 4.0;
  int n = 1;  // spatial dimension (1 or 2)
  int m = 1;  // target dimension

  void validate() const;
  double p_conj() const { return p / (p - 1.0); }
  double q_conj() const { return q / (q - 1.0); }
};

/// Spatial coefficient a(x) with a declared Hölder exponent.
struct Coefficient {
  enum class Kind { Zero, Const, Power, Step, Checkerboard, Custom };
  Kind kind = Kind::Zero;
  double a0 = 1.0;
  double gamma = 1.0;                  // Hölder/power exponent of the profile
  std::vector<double> center;          // reference point for Power/Checkerboard
  std::function<double(std::span<const double>)> fn;  // Custom only
  double declared_holder = 1.0;

  double operator()(std::span<const double> x) const;
};

/// V_{p,mu}(z) = (mu^2+|z|^2)^{(p-2)/4} z, written into out (same length as z).
void v_transform(double p, double mu, std::span<const double> z, std::span<double> out);

/// |V_{p,mu}(z)|^2 = (mu^2+|z|^2)^{(p-2)/2} |z|^2; equals |z|^p when mu = 0.
double v_norm_sq(double p, double mu, std::span<const double> z);

/// A (p,q)-growth integrand F(x,z) on R^n x R^{m x n}. Immutable after
/// construction; builtin kinds are normalized so F(x,0) = 0.
class IntegrandSpec {
 public:
  enum class Kind { PEnergy, DoublePhase, RadialModulated, Shifted, Regularized, UserDefined };

  using EvalFn = std::function<double(std::span<const double>, std::span<const double>)>;
  using GradFn =
      std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>;

  static IntegrandSpec p_energy(GrowthParams params, double scale = 1.0);
  static IntegrandSpec double_phase(GrowthParams params, Coefficient a);
  static IntegrandSpec radial_modulated(GrowthParams params, Coefficient a, double scale = 1.0);
  static IntegrandSpec user_defined(GrowthParams params, EvalFn eval, GradFn grad);

  /// F_{z0}(x,z) = F(x,z+z0) - F(x,z0) - dF(x,z0) . z
  IntegrandSpec shifted(std::span<const double> z0) const;
  /// F_eps(x,z) = F(x,z) + eps |z|^q; requires eps > 0.
  IntegrandSpec regularized(double epsilon) const;
  /// Same integrand with the V-shift parameter replaced (solver mu floor).
  IntegrandSpec with_mu(double mu) const;

  double eval(std::span<const double> x, std::span<const double> z) const;
  void grad_z(std::span<const double> x, std::span<const double> z, std::span<double> out) const;

  const GrowthParams& params() const { return params_; }
  Kind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  double scale() const { return scale_; }
  const std::optional<Coefficient>& coefficient() const { return coeff_; }
  std::string kind_name() const;

 private:
  Kind kind_ = Kind::PEnergy;
  GrowthParams params_;
  std::optional<Coefficient> coeff_;
  std::shared_ptr<const IntegrandSpec> base_;  // Shifted / Regularized wrappers
  std::vector<double> shift_;
  double epsilon_ = 0.0;
  double scale_ = 1.0;
  EvalFn custom_eval_;
  GradFn custom_grad_;

  double eval_impl(std::span<const double> x, std::span<const double> z) const;
  void grad_impl(std::span<const double> x, std::span<const double> z, std::span<double> out) const;
};

/// One hypothesis line of a sampled verification report.
struct HypothesisCheck {
  std::string name;          // "H1", "H2", "H3", "H4", "lower", "fenchel", "convexity"
  double measured = 0.0;     // worst sampled constant
  double declared = 0.0;     // declared bound it is tested against (0 = record only)
  bool pass = true;
  std::string note;
};

struct GrowthReport {
  std::vector<HypothesisCheck> checks;
  std::vector<std::string> warnings;
  bool all_pass = true;
  const HypothesisCheck* find(const std::string& name) const;
};

/// Samples hypotheses (H1)-(H4), the p-growth lower bound and the Fenchel
/// coercivity bound over |z| log-uniform in [1e-3, 1e3] and x uniform in
/// box [box_lo, box_hi]^n. Slack factor 1.05 on declared constants.
GrowthReport verify_growth(const IntegrandSpec& spec, int sample_count, std::uint64_t seed,
                           double box_lo = 0.0, double box_hi = 1.0);

}  // namespace vreg
