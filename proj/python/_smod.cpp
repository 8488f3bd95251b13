#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "smod/algorithms.hpp"
#include "smod/bench.hpp"
#include "smod/stability.hpp"
#include "smod/stationarity.hpp"

namespace py = pybind11;
using namespace smod;

namespace {

GenSpec gen_spec(Index n, Index d, double kappa, double p_fail, double noise_std,
                 std::uint64_t seed) {
  GenSpec spec;
  spec.n = n;
  spec.d = d;
  spec.kappa = kappa;
  spec.p_fail = p_fail;
  spec.noise_std = noise_std;
  spec.seed = seed;
  return spec;
}

ProblemInstance from_arrays(const std::string& kind_name, const RowMatrix& u, const Vector& b,
                            std::optional<RowMatrix> v, std::optional<Vector> truth) {
  const ProblemKind kind = problem_kind_from_string(kind_name);
  if (u.rows() != b.size()) throw std::invalid_argument("u and b disagree on the sample count");
  if (kind == ProblemKind::BlindDeconvolution && !v) {
    throw std::invalid_argument("blind deconvolution needs v");
  }
  std::vector<Sample> samples(static_cast<std::size_t>(b.size()));
  for (Index i = 0; i < b.size(); ++i) {
    auto& s = samples[static_cast<std::size_t>(i)];
    s.u = u.row(i).transpose();
    if (v) {
      if (v->rows() != b.size()) throw std::invalid_argument("v and b disagree on the sample count");
      s.v = v->row(i).transpose();
    }
    s.b = b(i);
  }
  return make_instance(kind, samples, std::move(truth));
}

Schedule make_schedule(const std::string& name, double alpha0, double rho, double gamma0,
                       double d_tilde, std::optional<double> eta) {
  if (name == "experiment") return ExperimentStep{alpha0};
  if (name == "smod_theory") return SmodTheory{rho, alpha0};
  if (name == "semod_theory") return SemodTheory{rho, gamma0};
  if (name == "semod_mb_theory") return SemodMBTheory{rho, gamma0};
  if (name == "nesterov") return NesterovTheory{d_tilde, eta};
  throw std::invalid_argument("unknown schedule '" + name + "'");
}

py::dict run_record(const RunRecord& rec) {
  std::vector<int> k;
  std::vector<double> objective, dist, gamma, moreau_x, moreau_z;
  for (const auto& row : rec.rows) {
    k.push_back(row.k);
    objective.push_back(row.objective);
    dist.push_back(row.dist_to_truth);
    gamma.push_back(row.gamma);
    moreau_x.push_back(row.moreau_x);
    moreau_z.push_back(row.moreau_z);
  }
  py::dict out;
  out["k"] = k;
  out["objective"] = objective;
  out["dist_to_truth"] = dist;
  out["gamma_k"] = gamma;
  out["moreau_x"] = moreau_x;
  out["moreau_z"] = moreau_z;
  out["stop_iter"] = rec.stop_iter;
  out["hit_cap"] = rec.hit_cap;
  out["diverged"] = rec.diverged;
  out["prox_failures"] = rec.prox_failures;
  out["gamma"] = rec.gamma;
  out["rho"] = rec.rho;
  out["preconditions_met"] = rec.preconditions_met;
  out["final_objective"] = rec.final_objective;
  out["x_final"] = rec.x_final;
  return out;
}

}  // namespace

PYBIND11_MODULE(_smod, mod) {
  mod.doc() = "Stochastic model-based minimization: models, prox solvers and outer loops.";

  py::class_<ProblemInstance>(mod, "ProblemInstance")
      .def_property_readonly("kind", [](const ProblemInstance& p) { return to_string(p.kind); })
      .def_property_readonly("u", [](const ProblemInstance& p) { return p.u; })
      .def_property_readonly("v", [](const ProblemInstance& p) { return p.v; })
      .def_property_readonly("b", [](const ProblemInstance& p) { return p.b; })
      .def_property_readonly("truth", [](const ProblemInstance& p) { return p.truth; })
      .def_property("f_hat", [](const ProblemInstance& p) { return p.f_hat; },
                    [](ProblemInstance& p, std::optional<double> value) { p.f_hat = value; })
      .def_property_readonly("n", &ProblemInstance::n)
      .def_property_readonly("dim", &ProblemInstance::dim)
      .def("__repr__", [](const ProblemInstance& p) {
        return "<ProblemInstance " + to_string(p.kind) + " n=" + std::to_string(p.n()) +
               " dim=" + std::to_string(p.dim()) + ">";
      });

  mod.def(
      "phase_retrieval",
      [](Index n, Index d, double kappa, double p_fail, double noise_std, std::uint64_t seed) {
        return gen_synthetic_phase_retrieval(gen_spec(n, d, kappa, p_fail, noise_std, seed));
      },
      py::arg("n") = 300, py::arg("d") = 100, py::arg("kappa") = 10.0, py::arg("p_fail") = 0.2,
      py::arg("noise_std") = 5.0, py::arg("seed") = 0);
  mod.def(
      "blind_deconvolution",
      [](Index n, Index d, double kappa, double p_fail, double noise_std, std::uint64_t seed) {
        return gen_synthetic_blind_deconv(gen_spec(n, d, kappa, p_fail, noise_std, seed));
      },
      py::arg("n") = 300, py::arg("d") = 100, py::arg("kappa") = 10.0, py::arg("p_fail") = 0.2,
      py::arg("noise_std") = 5.0, py::arg("seed") = 0);
  mod.def(
      "absolute_linear",
      [](Index n, Index d, double kappa, double p_fail, double noise_std, std::uint64_t seed) {
        return gen_absolute_linear(gen_spec(n, d, kappa, p_fail, noise_std, seed));
      },
      py::arg("n") = 300, py::arg("d") = 100, py::arg("kappa") = 10.0, py::arg("p_fail") = 0.2,
      py::arg("noise_std") = 5.0, py::arg("seed") = 0);
  mod.def("make_instance", &from_arrays, py::arg("kind"), py::arg("u"), py::arg("b"),
          py::arg("v") = std::nullopt, py::arg("truth") = std::nullopt);
  mod.def("load_instance", &load_instance, py::arg("path"));
  mod.def("save_instance", &save_instance, py::arg("path"), py::arg("instance"));

  mod.def("loss", &loss_eval, py::arg("instance"), py::arg("x"));
  mod.def("sample_subgradient", &sample_subgradient, py::arg("instance"), py::arg("i"),
          py::arg("x"));
  mod.def("max_curvature", py::overload_cast<const ProblemInstance&>(&max_curvature),
          py::arg("instance"));
  mod.def(
      "model_value",
      [](const std::string& kind, const ProblemInstance& inst, Index i, const Vector& z,
         const Vector& x) { return model_value(model_kind_from_string(kind), inst, i, z, x); },
      py::arg("kind"), py::arg("instance"), py::arg("i"), py::arg("z"), py::arg("x"));

  mod.def(
      "prox_step",
      [](const ProblemInstance& inst, const std::string& kind, const IndexList& batch,
         const Vector& z, const Vector& y, double gamma, double tol) {
        ProxRequest req;
        req.kind = model_kind_from_string(kind);
        req.instance = &inst;
        req.batch = batch;
        req.z = z;
        req.y = y;
        req.gamma = gamma;
        req.tol = tol;
        const ProxResult res = prox_step(req);
        py::dict out;
        out["x_plus"] = res.x_plus;
        out["objective"] = res.objective;
        out["status"] = to_string(res.status);
        out["converged"] = res.converged;
        out["inner_iters"] = res.inner_iters;
        return out;
      },
      py::arg("instance"), py::arg("kind"), py::arg("batch"), py::arg("z"), py::arg("y"),
      py::arg("gamma"), py::arg("tol") = 1e-10);

  mod.def(
      "run",
      [](const ProblemInstance& inst, const std::string& algorithm, const std::string& kind, int K,
         int m, double beta, const std::string& schedule, double alpha0, double rho, double gamma0,
         double d_tilde, std::optional<double> eta, std::uint64_t seed,
         std::optional<Vector> x0, std::optional<double> threshold, int record_every,
         double stationarity_rho) {
        SolverConfig c;
        c.algorithm = algorithm_from_string(algorithm);
        c.kind = model_kind_from_string(kind);
        c.K = K;
        c.m = m;
        c.beta = beta;
        c.schedule = make_schedule(schedule, alpha0, rho, gamma0, d_tilde, eta);
        c.seed = seed;
        c.x0 = std::move(x0);
        if (threshold) c.stopping = ObjectiveThreshold{*threshold, 0.0};
        c.record_every = record_every;
        c.stationarity_rho = stationarity_rho;
        RunRecord rec;
        {
          py::gil_scoped_release release;
          rec = run(inst, c);
        }
        return run_record(rec);
      },
      py::arg("instance"), py::arg("algorithm") = "smod_mb", py::arg("kind") = "spl",
      py::arg("K") = 100, py::arg("m") = 1, py::arg("beta") = 0.0,
      py::arg("schedule") = "experiment", py::arg("alpha0") = 1.0, py::arg("rho") = 0.0,
      py::arg("gamma0") = 1.0, py::arg("d_tilde") = 1.0, py::arg("eta") = std::nullopt,
      py::arg("seed") = 0, py::arg("x0") = std::nullopt, py::arg("threshold") = std::nullopt,
      py::arg("record_every") = 1, py::arg("stationarity_rho") = 0.0);

  mod.def(
      "moreau_prox",
      [](const ProblemInstance& inst, const Vector& x, double rho, double tol) {
        const MoreauProx prox = moreau_prox(ObjectiveOracle::of(inst), x, rho, tol);
        py::dict out;
        out["x_hat"] = prox.x_hat;
        out["converged"] = prox.converged;
        out["certificate"] = prox.certificate;
        out["iterations"] = prox.iterations;
        return out;
      },
      py::arg("instance"), py::arg("x"), py::arg("rho"), py::arg("tol") = 1e-8);
  mod.def(
      "moreau_grad_norm",
      [](const ProblemInstance& inst, const Vector& x, double rho, double tol) {
        return moreau_grad_norm(ObjectiveOracle::of(inst), x, rho, tol);
      },
      py::arg("instance"), py::arg("x"), py::arg("rho"), py::arg("tol") = 1e-8);
  mod.def(
      "weak_convexity", [](const ProblemInstance& inst) { return ObjectiveOracle::of(inst).weak_convexity; },
      py::arg("instance"));

  mod.def(
      "stability",
      [](const ProblemInstance& inst, const std::string& kind, const Vector& z, const Vector& y,
         double gamma, int m, int trials, std::uint64_t seed) {
        const auto rows = stability_trials(inst, model_kind_from_string(kind), z, y, gamma, m,
                                           trials, seed);
        std::vector<double> distance, bound;
        for (const auto& t : rows) {
          distance.push_back(t.distance);
          bound.push_back(t.bound);
        }
        const StabilityReport report = summarize(rows);
        py::dict out;
        out["distance"] = distance;
        out["bound"] = bound;
        out["violations"] = report.violations;
        out["invalid"] = report.invalid;
        out["max_ratio"] = report.max_ratio;
        out["mean_ratio"] = report.mean_ratio;
        return out;
      },
      py::arg("instance"), py::arg("kind"), py::arg("z"), py::arg("y"), py::arg("gamma"),
      py::arg("m"), py::arg("trials") = 100, py::arg("seed") = 0);
  mod.def(
      "expectation_gap",
      [](const ProblemInstance& inst, const std::string& kind, const Vector& z, double gamma,
         int m, int trials, std::uint64_t seed) {
        const GapEstimate gap =
            expectation_gap_estimate(inst, model_kind_from_string(kind), z, gamma, m, trials, seed);
        py::dict out;
        out["estimate"] = gap.estimate;
        out["half_width"] = gap.half_width;
        out["bound"] = gap.bound;
        return out;
      },
      py::arg("instance"), py::arg("kind"), py::arg("z"), py::arg("gamma"), py::arg("m"),
      py::arg("trials") = 1000, py::arg("seed") = 0);

  mod.def("log_grid", &log_grid, py::arg("lo"), py::arg("hi"), py::arg("count"));
}
