#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "smod/prox.hpp"
#include "smod/rng.hpp"

namespace smod {

enum class Algorithm { SmodMB, Semod, SemodMB, Nesterov };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

// --- Stepsize schedules --------------------------------------------------------

struct Stepsize {
  double gamma = 0.0;
  bool preconditions_met = true;
};

// gamma = max{rho + tau, lambda + sqrt(K) / (alpha0 sqrt(m))}; needs rho > lambda + tau.
Stepsize stepsize_theory_smod(int K, int m, double rho, double tau, double lambda, double alpha0);

// gamma = gamma0 sqrt(K) / theta + lambda + rho beta^2 / theta^3 with theta = 1 - beta;
// needs rho >= 2 (tau + lambda).
Stepsize stepsize_theory_semod(int K, double beta, double lambda, double rho, double gamma0,
                               double tau = 0.0);

// zeta = 2 theta (rho + lambda beta + tau) + tau + 2 rho beta^2 / theta,
// gamma = gamma0 sqrt(K/m) + zeta / theta^2 + lambda; needs rho > 3 (tau + lambda).
double semod_mb_zeta(double beta, double lambda, double tau, double rho);
Stepsize stepsize_theory_semod_mb(int K, int m, double beta, double lambda, double tau,
                                  double rho, double gamma0);

// Recommended gamma0 = sqrt(rho / (delta theta)) L for a user-supplied
// estimate delta of f_{1/rho}(x^1) - min f.
double semod_optimal_gamma0(double rho, double delta, double beta, double lipschitz);

// gamma = sqrt(K/m) / alpha0.
double stepsize_experiment(double alpha0, int K, int m);

struct NesterovParams {
  double theta = 1.0;     // 2 / (k + 2)
  double gamma_k = 0.0;   // gamma / (k + 1)
  double Gamma = 1.0;     // Gamma_k = Gamma_{k-1} / (1 - theta_k), Gamma_0 = 1
};

// gamma = 2 tau + eta with eta = 2 L (K + 2)^{3/2} / (sqrt(3 m) D~), unless overridden.
double nesterov_base_gamma(int m, int K, double tau, double lipschitz, double d_tilde,
                           std::optional<double> eta_override = std::nullopt);

// Walks the Gamma recursion forward one k at a time.
class NesterovSequence {
 public:
  explicit NesterovSequence(double base_gamma) : base_gamma_(base_gamma) {}
  NesterovParams current() const { return params_; }
  int k() const { return k_; }
  NesterovParams advance();

 private:
  double base_gamma_;
  int k_ = 0;
  NesterovParams params_{1.0, base_gamma_, 1.0};
};

NesterovParams nesterov_schedule(int k, int m, int K, double tau, double lipschitz,
                                 double d_tilde, std::optional<double> eta_override = std::nullopt);

// rho <= 0 selects 1.5 times the smallest rho each convergence guarantee admits:
// lambda + tau (SMOD), 2 (tau + lambda) (SEMOD), 3 (tau + lambda) (minibatch SEMOD).
double default_rho(Algorithm algorithm, double lambda, double tau);

// --- Configuration -------------------------------------------------------------

struct SmodTheory {
  double rho = 0.0;
  double alpha0 = 1.0;
};
struct SemodTheory {
  double rho = 0.0;
  double gamma0 = 1.0;
};
struct SemodMBTheory {
  double rho = 0.0;
  double gamma0 = 1.0;
};
struct ExperimentStep {
  double alpha0 = 1.0;
};
struct NesterovTheory {
  double d_tilde = 1.0;
  std::optional<double> eta;
};
using Schedule = std::variant<SmodTheory, SemodTheory, SemodMBTheory, ExperimentStep, NesterovTheory>;

struct Horizon {};
// Stop once f(x^k) <= max(factor * f_hat, floor).
struct ObjectiveThreshold {
  double factor = 1.5;
  double floor = 0.0;
};
using Stopping = std::variant<Horizon, ObjectiveThreshold>;

struct SolverConfig {
  Algorithm algorithm = Algorithm::SmodMB;
  ModelKind kind = ModelKind::ProxLinear;
  int K = 100;
  int m = 1;
  double beta = 0.0;
  Schedule schedule = ExperimentStep{};
  std::uint64_t seed = 0;
  Stopping stopping = Horizon{};
  int record_every = 1;
  std::optional<Vector> x0;     // default: N(0, I) from the seed's init stream
  std::vector<int> checkpoints;  // iterates x^k kept for these k
  bool keep_iterates = false;    // keep x^k and z^k at every recorded row
  double stationarity_rho = 0.0; // > 0: evaluate |grad f_{1/rho}| at recorded rows
  double prox_tol = 1e-10;
  int max_inner = 10000;

  void validate() const;
};

// --- Run records ----------------------------------------------------------------

struct TraceRow {
  int k = 0;                  // iterate index; the initial point is k = 1 (k = 0 for Nesterov)
  double objective = 0.0;
  double dist_to_truth = 0.0; // NaN without truth
  double gamma = 0.0;         // prox weight of the step taken from x^k (NaN on the last row)
  std::uint64_t batch_digest = 0;
  double lipschitz = 0.0;     // model Lipschitz constant of B_k at the model center
  double moreau_x = 0.0;      // NaN unless stationarity_rho > 0
  double moreau_z = 0.0;
};

struct RunRecord {
  std::vector<TraceRow> rows;
  int stop_iter = 0;     // iterations performed when the stopping rule fired, else K + 1
  bool hit_cap = false;
  bool diverged = false;
  bool prox_failures = false;
  bool lipschitz_growth_flag = false;  // L grew more than 10x from its initial value
  double gamma = 0.0;                  // constant prox weight (base gamma for Nesterov)
  double rho = 0.0;
  bool preconditions_met = true;
  double final_objective = 0.0;
  int k_star = 0;                      // uniform draw from {1..K}
  double wall_time = 0.0;
  Vector x_final;
  std::vector<std::pair<int, Vector>> iterates;      // x^k
  std::vector<std::pair<int, Vector>> extrapolated;  // z^k (or the Nesterov prox sequence)
};

// Samples m indices i.i.d. uniformly with replacement from a seeded stream.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, Index n);
  void draw(int m, IndexList& out);

 private:
  Rng rng_;
  std::uniform_int_distribution<Index> pick_;
};

std::uint64_t batch_digest(std::span<const Index> batch);

// Constant prox weight implied by the schedule (Nesterov: base gamma).
Stepsize resolve_gamma(const ProblemInstance& instance, const SolverConfig& config,
                       const Vector& x0, double* rho_out = nullptr);

Vector initial_point(const ProblemInstance& instance, const SolverConfig& config);

RunRecord run_smod_minibatch(const ProblemInstance& instance, const SolverConfig& config);
RunRecord run_semod(const ProblemInstance& instance, const SolverConfig& config);
RunRecord run_asmod_nesterov(const ProblemInstance& instance, const SolverConfig& config);
RunRecord run(const ProblemInstance& instance, const SolverConfig& config);

}  // namespace smod
