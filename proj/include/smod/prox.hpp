#pragma once

#include <string>
#include <vector>

#include "smod/models.hpp"
#include "smod/problems.hpp"

namespace smod {

enum class ProxStatus { ClosedForm, QP, InnerLoop, NonconvexEnumerated };

std::string to_string(ProxStatus status);

// Composite term added to the Linear model. Only the zero regularizer ships;
// the enum is the extension point for a proximable penalty.
enum class Regularizer { None };

// argmin_x { (1/m) sum_{i in batch} f_z(x, xi_i) + gamma/2 |x - y|^2 }
struct ProxRequest {
  ModelKind kind = ModelKind::ProxLinear;
  const ProblemInstance* instance = nullptr;
  IndexList batch;
  Vector z;  // model center
  Vector y;  // proximal center
  double gamma = 1.0;
  double tol = 1e-10;
  int max_inner = 10000;
  Regularizer regularizer = Regularizer::None;
};

struct ProxResult {
  Vector x_plus;
  double objective = 0.0;
  int inner_iters = 0;
  std::vector<double> gap_trace;
  ProxStatus status = ProxStatus::ClosedForm;
  bool converged = true;
  double final_gap = 0.0;
};

// Subproblem objective value at x.
double prox_objective(const ProxRequest& request, const Vector& x);

// Weak-convexity modulus of the batch model (0 for Linear and ProxLinear).
double prox_model_lambda(const ProxRequest& request);

// --- Closed forms -----------------------------------------------------------

// x+ = y - (1/(m gamma)) sum_i v_i(z)
ProxResult prox_sgd(const ProxRequest& request);

// Single-sample prox-linear step: y + Proj_[-1,1](-delta/|zeta|^2) zeta with
// zeta = g/gamma and delta = (c + g^T(y - z))/gamma.
ProxResult prox_spl_seq(const ProxRequest& request);

// Single-sample proximal point for phase retrieval by candidate enumeration.
ProxResult prox_spp_seq_phase(const ProxRequest& request);

// Single-sample blind deconvolution for all three model kinds.
ProxResult prox_seq_blind_deconv(const ProxRequest& request);

// --- Iterative solvers --------------------------------------------------------

// min_x (1/m) sum_i |r_i + g_i^T (x - center)| + weight/2 |x - center|^2,
// solved through its box-constrained dual
//   max_{mu in [-1/m, 1/m]^m} r^T mu - |G^T mu|^2 / (2 weight)
// by cyclic exact coordinate ascent, with x = center - G^T mu / weight.
struct AbsLinearProblem {
  RowMatrix grads;  // m x dim, rows g_i
  Vector offsets;   // r_i
  Vector center;
  double weight = 1.0;
};

struct AbsLinearSolution {
  Vector x;
  Vector multipliers;
  double primal = 0.0;
  double dual = 0.0;
  int sweeps = 0;
  bool converged = false;
};

AbsLinearSolution solve_abs_linear(const AbsLinearProblem& problem, double tol, int max_sweeps);

// Minibatch prox-linear step through the dual QP; duality-gap stopping.
ProxResult prox_spl_batch(const ProxRequest& request);

// Deterministic prox-linear loop on the proximal-point subproblem
//   z^{t+1} = argmin_w { (1/m) sum |c_i(z^t) + g_i(z^t)^T (w - z^t)|
//                        + gamma/2 |w - y|^2 + eta/2 |w - z^t|^2 }
// Options expose the extra damping eta (default: the model gap tau) and the
// starting point (default: y).
struct InnerLoopOptions {
  double eta = -1.0;  // < 0 means eta = tau
  const Vector* start = nullptr;
  bool keep_iterates = false;
  // > 0: also stop once the certified distance of the latest iterate to the
  // fixed point, sqrt(alpha) / (1 - sqrt(alpha)) times the last move, is below it.
  double distance_tol = -1.0;
};

struct InnerLoopResult {
  ProxResult prox;
  std::vector<Vector> iterates;  // z^0, z^1, ... when keep_iterates
  Vector multipliers;            // dual of the final linearized step
  Vector last_center;            // z^t of the final linearization
  double eta = 0.0;
  double tau = 0.0;
  double lambda = 0.0;
  double contraction = 0.0;      // (eta + tau) / (gamma + eta - lambda)
};

InnerLoopResult prox_linear_inner_loop(const ProblemInstance& instance,
                                       std::span<const Index> batch, const Vector& y,
                                       double gamma, double tol, int max_iters,
                                       const InnerLoopOptions& options = {});

ProxResult prox_spp_batch(const ProxRequest& request);

// Routes by (model kind, problem kind, batch size).
ProxResult prox_step(const ProxRequest& request);

}  // namespace smod
