#pragma once

#include <optional>
#include <span>
#include <string>

#include "smod/problems.hpp"

namespace smod {

// Linear:     f(z) + <f'(z), x - z>          (stochastic subgradient)
// ProxLinear: |c(z) + <grad c(z), x - z>|    (stochastic prox-linear)
// Full:       f(x)                           (stochastic proximal point)
enum class ModelKind { Linear, ProxLinear, Full };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConstants {
  double lambda = 0.0;  // weak convexity of x -> f_z(x, xi)
  double tau = 0.0;     // quadratic gap |f_z(x) - f(x)| <= tau/2 |x - z|^2
  std::optional<double> lipschitz_hint;
};

// Curvature scale of sample i: 2|a_i|^2 (phase retrieval), |u_i||v_i| (blind
// deconvolution), 0 (absolute linear). Bounds the Hessian of c(., xi_i).
double sample_curvature(const ProblemInstance& instance, Index i);
double max_curvature(const ProblemInstance& instance);
double max_curvature(const ProblemInstance& instance, std::span<const Index> batch);

// Weak-convexity modulus of the loss itself. A phase-retrieval sample with
// b_i <= 0 is convex (its residual never changes sign), so it contributes 0.
double sample_weak_convexity(const ProblemInstance& instance, Index i);

double model_value(ModelKind kind, const ProblemInstance& instance, Index i, const Vector& z,
                   const Vector& x);
double batch_model_value(ModelKind kind, const ProblemInstance& instance,
                         std::span<const Index> batch, const Vector& z, const Vector& x);

ModelConstants model_constants(ModelKind kind, const ProblemInstance& instance);

// Lipschitz constant of x -> f_z(x, B). Linear and ProxLinear models are
// globally Lipschitz; for Full it is certified on the ball of `radius` about z.
double model_lipschitz(ModelKind kind, const ProblemInstance& instance,
                       std::span<const Index> batch, const Vector& z, double radius = 1.0);

// Same, but for the Full kind certified only on the segment [p, q].
double model_lipschitz_on_segment(ModelKind kind, const ProblemInstance& instance,
                                  std::span<const Index> batch, const Vector& z, const Vector& p,
                                  const Vector& q);

}  // namespace smod
