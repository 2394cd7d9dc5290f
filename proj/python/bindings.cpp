#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vreg/besov.hpp"
#include "vreg/experiment.hpp"
#include "vreg/exponents.hpp"
#include "vreg/regularity.hpp"

namespace py = pybind11;
using namespace vreg;

namespace {

Scenario make_scenario(int n, double p, double q, double alpha, py::object beta, int fine_index,
                       const std::string& bc, bool radial, bool autonomous,
                       bool homogeneous_boundary) {
  Scenario sc;
  sc.n = n;
  sc.p = p;
  sc.q = q;
  sc.alpha = alpha;
  if (!beta.is_none()) {
    sc.beta = beta.cast<double>();
    sc.fine_index = fine_index;
  }
  sc.bc = bc == "neumann" ? Bc::Neumann : (bc == "mixed" ? Bc::Mixed : Bc::Dirichlet);
  sc.radial = radial;
  sc.autonomous = autonomous;
  sc.homogeneous_boundary = homogeneous_boundary;
  return sc;
}

py::dict report_dict(const ExponentReport& rep) {
  py::dict d;
  d["delta_predicted"] = rep.delta_predicted;
  d["delta_neumann_cap"] = rep.delta_neumann_cap;
  d["q_upper_bounds"] = rep.q_upper_bounds;
  d["singular_dim_bound"] = rep.singular_dim_bound;
  d["boundary_regular"] = rep.boundary_regular.holds;
  d["applicable"] = rep.applicable;
  d["notes"] = rep.notes;
  return d;
}

py::dict trace_dict(const IterationTrace& tr) {
  py::dict d;
  d["applicable"] = tr.applicable;
  d["reason"] = tr.reason;
  d["deltas"] = tr.deltas;
  d["kappa_infinity"] = tr.kappa_infinity;
  d["limit"] = tr.limit;
  d["neumann_capped"] = tr.neumann_capped;
  py::list branches;
  for (const auto& s : tr.steps) branches.append(std::string(1, s.branch));
  d["branches"] = branches;
  return d;
}

py::dict solve_dict(const SolveReport& rep) {
  py::dict d;
  d["final_energy"] = rep.final_energy;
  d["el_residual"] = rep.el_residual;
  d["converged"] = rep.converged;
  d["relaxed_estimate"] = rep.relaxed_estimate;
  d["richardson_estimate"] = rep.richardson_estimate;
  d["stress_qprime_norm"] = rep.stress_qprime_norm;
  d["qterm_slope"] = rep.qterm_slope;
  d["lavrentiev_flag"] = rep.lavrentiev_flag;
  py::list trace;
  for (const auto& s : rep.epsilon_trace) {
    py::dict e;
    e["epsilon"] = s.epsilon;
    e["energy"] = s.energy;
    e["qterm"] = s.qterm;
    e["iterations"] = s.iterations;
    e["converged"] = s.converged;
    trace.append(e);
  }
  d["epsilon_trace"] = trace;
  d["notes"] = rep.notes;
  return d;
}

py::dict estimate_dict(const BesovEstimate& est) {
  py::dict d;
  d["slope"] = est.slope;
  d["r_squared"] = est.r_squared;
  d["saturated"] = est.saturated;
  d["order"] = est.order;
  py::list table;
  for (const auto& s : est.seminorm_at) {
    table.append(py::make_tuple(s.direction[0], s.direction[1], s.h, s.seminorm));
  }
  d["seminorm_at"] = table;
  d["warnings"] = est.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "numerical laboratory for convex variational problems with (p,q)-growth";

  m.def(
      "predicted_delta",
      [](int n, double p, double q, double alpha, py::object beta, int fine_index,
         const std::string& bc, bool radial, bool autonomous, bool homogeneous_boundary) {
        return report_dict(predicted_delta(make_scenario(n, p, q, alpha, beta, fine_index, bc,
                                                         radial, autonomous, homogeneous_boundary)));
      },
      py::arg("n"), py::arg("p"), py::arg("q"), py::arg("alpha"), py::arg("beta") = py::none(),
      py::arg("fine_index") = 1, py::arg("bc") = "dirichlet", py::arg("radial") = false,
      py::arg("autonomous") = false, py::arg("homogeneous_boundary") = true,
      "Closed-form regularity exponent predictions for one scenario.");

  m.def(
      "iterate_deltas",
      [](int n, double p, double q, double alpha, int k_max, py::object beta, int fine_index,
         const std::string& bc, bool radial, bool autonomous, bool homogeneous_boundary) {
        return trace_dict(iterate_deltas(make_scenario(n, p, q, alpha, beta, fine_index, bc, radial,
                                                       autonomous, homogeneous_boundary),
                                         k_max));
      },
      py::arg("n"), py::arg("p"), py::arg("q"), py::arg("alpha"), py::arg("k_max") = 80,
      py::arg("beta") = py::none(), py::arg("fine_index") = 1, py::arg("bc") = "dirichlet",
      py::arg("radial") = false, py::arg("autonomous") = false,
      py::arg("homogeneous_boundary") = true,
      "Exponent-iteration trace (delta_k, branches, kappa_infinity, limit).");

  m.def(
      "q_range",
      [](int n, double p, double q, double alpha) {
        Scenario sc;
        sc.n = n;
        sc.p = p;
        sc.q = q;
        sc.alpha = alpha;
        const QRange r = q_range(sc);
        py::dict d;
        d["bounds"] = r.bounds;
        d["satisfied"] = r.satisfied;
        return d;
      },
      py::arg("n"), py::arg("p"), py::arg("q"), py::arg("alpha"),
      "Named admissible q-range bounds.");

  m.def(
      "v_transform",
      [](double p, double mu, std::vector<double> z) {
        std::vector<double> out(z.size());
        v_transform(p, mu, z, out);
        return out;
      },
      py::arg("p"), py::arg("mu"), py::arg("z"), "V_{p,mu}(z) componentwise.");

  m.def("v_norm_sq",
        [](double p, double mu, std::vector<double> z) { return v_norm_sq(p, mu, z); });

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir) {
        RunResult res = run_experiment(ExperimentConfig::parse_text(config_text), out_dir);
        py::dict d;
        d["exit_code"] = res.exit_code;
        d["artifacts"] = res.artifacts;
        d["message"] = res.message;
        d["table"] = res.table;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"),
      "Run one experiment from the flat key=value config grammar.");

  m.def("presets", [] {
    py::dict d;
    for (const auto& [name, text] : builtin_presets()) d[py::str(name)] = text;
    return d;
  });

  m.def(
      "solve_preset",
      [](const std::string& name) {
        ExperimentConfig cfg = ExperimentConfig::parse_text(builtin_presets().at(name));
        ProblemSpec prob = problem_from_config(cfg);
        auto [u, rep] = relax_continuation(prob, solver_from_config(cfg));
        py::dict d = solve_dict(rep);
        d["values"] = u.values;
        d["grid_res"] = std::vector<int>{u.grid.res[0], u.grid.res[1]};
        d["grid_lo"] = std::vector<double>{u.grid.lo[0], u.grid.lo[1]};
        d["grid_hi"] = std::vector<double>{u.grid.hi[0], u.grid.hi[1]};
        return d;
      },
      py::arg("name"), "Solve one builtin preset; returns the report and the field values.");

  m.def(
      "decay_fit_1d",
      [](std::vector<double> values, double lo, double hi, int order, double p_norm) {
        GridSpec g;
        g.dim = 1;
        g.lo = {lo, 0.0};
        g.hi = {hi, 1.0};
        g.res = {static_cast<int>(values.size()), 1};
        GridFunction f(g, 1);
        f.values = std::move(values);
        return estimate_dict(decay_fit(f, make_probe(g, order, p_norm, 0.5)));
      },
      py::arg("values"), py::arg("lo"), py::arg("hi"), py::arg("order") = 1,
      py::arg("p_norm") = 2.0,
      "Log-log difference-quotient decay fit of a 1D sampled field.");

  m.def(
      "verify_growth_p_energy",
      [](double p, double q, double mu, double nu, double Lambda, int samples, std::uint64_t seed) {
        GrowthParams gp;
        gp.p = p;
        gp.q = q;
        gp.mu = mu;
        gp.nu = nu;
        gp.Lambda = Lambda;
        gp.n = 1;
        GrowthReport rep = verify_growth(IntegrandSpec::p_energy(gp), samples, seed);
        py::dict d;
        d["all_pass"] = rep.all_pass;
        py::list checks;
        for (const auto& c : rep.checks) {
          py::dict e;
          e["name"] = c.name;
          e["measured"] = c.measured;
          e["declared"] = c.declared;
          e["pass"] = c.pass;
          checks.append(e);
        }
        d["checks"] = checks;
        d["warnings"] = rep.warnings;
        return d;
      },
      py::arg("p"), py::arg("q"), py::arg("mu") = 0.5, py::arg("nu") = 0.25,
      py::arg("Lambda") = 4.0, py::arg("samples") = 400, py::arg("seed") = 0,
      "Sampled (H1)-(H4) verification of the builtin p-energy.");
}
