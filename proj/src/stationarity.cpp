#include "smod/stationarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "smod/models.hpp"
#include "smod/prox.hpp"

namespace smod {

ObjectiveOracle ObjectiveOracle::of(const ProblemInstance& instance) {
  ObjectiveOracle out;
  out.instance = &instance;
  for (Index i = 0; i < instance.n(); ++i) {
    out.weak_convexity = std::max(out.weak_convexity, sample_weak_convexity(instance, i));
  }
  return out;
}

// The inner prox-linear loop only contracts when its prox weight exceeds
// tau + lambda. For smaller rho an outer proximal-point loop adds sigma/2
// |y - w^t|^2, which keeps every inner solve in the contracting regime and
// converges linearly with ratio sigma / (sigma + rho - mu).
MoreauProx moreau_prox(const ObjectiveOracle& oracle, const Vector& x, double rho, double tol,
                       int max_iters) {
  if (oracle.instance == nullptr) throw std::invalid_argument("moreau_prox: missing instance");
  const ProblemInstance& inst = *oracle.instance;
  if (x.size() != inst.dim()) throw std::invalid_argument("moreau_prox: dimension mismatch");
  if (!(rho > oracle.weak_convexity)) {
    throw std::invalid_argument("moreau_prox: rho must exceed the weak-convexity modulus");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("moreau_prox: tol must be > 0");

  IndexList all(static_cast<std::size_t>(inst.n()));
  for (Index i = 0; i < inst.n(); ++i) all[static_cast<std::size_t>(i)] = i;

  const double mu = oracle.weak_convexity;
  const double tau = max_curvature(inst);
  const double lambda = mu;
  const double sigma = rho > tau + lambda ? 0.0 : 2.0 * (tau + lambda) - rho;
  const double weight = rho + sigma;
  const double ratio = sigma / (sigma + rho - mu);
  const double target = sigma == 0.0 ? tol : tol * (1.0 - ratio);

  MoreauProx out;
  Vector w = x;
  InnerLoopResult inner;
  for (int t = 1; t <= max_iters; ++t) {
    const Vector center = (rho * x + sigma * w) / weight;
    InnerLoopOptions opts;
    opts.start = &w;
    opts.distance_tol = 0.1 * target;
    inner = prox_linear_inner_loop(inst, all, center, weight, 0.0, max_iters, opts);
    const double move = (inner.prox.x_plus - w).norm();
    w = inner.prox.x_plus;
    out.iterations = t;
    if (sigma == 0.0 || ratio * move <= target) {
      out.converged = inner.prox.converged;
      break;
    }
  }

  // Multipliers of the final linearized step, with gradients re-evaluated at w.
  Vector sub = rho * (w - x);
  Vector g(inst.dim());
  for (Index i = 0; i < inst.n(); ++i) {
    residual_and_gradient(inst, i, w, g);
    sub += inner.multipliers(i) * g;
  }
  out.certificate = sub.norm();
  out.x_hat = std::move(w);
  return out;
}

double moreau_grad_norm(const ObjectiveOracle& oracle, const Vector& x, double rho, double tol,
                        int max_iters) {
  return rho * (x - moreau_prox(oracle, x, rho, tol, max_iters).x_hat).norm();
}

}  // namespace smod
