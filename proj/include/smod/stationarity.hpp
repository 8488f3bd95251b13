#pragma once

#include "smod/problems.hpp"

namespace smod {

// The full empirical objective f(x) = (1/n) sum_i |c_i(x)| together with its
// weak-convexity modulus.
struct ObjectiveOracle {
  const ProblemInstance* instance = nullptr;
  double weak_convexity = 0.0;

  static ObjectiveOracle of(const ProblemInstance& instance);
  Index dim() const { return instance->dim(); }
  double value(const Vector& x) const { return loss_eval(*instance, x); }
};

struct MoreauProx {
  Vector x_hat;
  int iterations = 0;
  bool converged = false;
  // Norm of the approximate subgradient of f + rho/2 |. - x| at x_hat built
  // from the final step's multipliers.
  double certificate = 0.0;
};

// prox_{f/rho}(x) = argmin_y f(y) + rho/2 |y - x|^2 by the deterministic
// prox-linear loop over all n samples. Requires rho > weak_convexity.
MoreauProx moreau_prox(const ObjectiveOracle& oracle, const Vector& x, double rho,
                       double tol = 1e-8, int max_iters = 10000);

// |grad f_{1/rho}(x)| = rho |x - prox_{f/rho}(x)|.
double moreau_grad_norm(const ObjectiveOracle& oracle, const Vector& x, double rho,
                        double tol = 1e-8, int max_iters = 10000);

}  // namespace smod
