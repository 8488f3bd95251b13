#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "smod/prox.hpp"

namespace smod {

// One replace-one experiment on the proximal map
//   y_hat(B) = argmin_x f_z(x, B) + gamma/2 |x - y|^2.
// The bound 2L/(m (gamma - lambda)) uses L certified a posteriori on the
// realized batch (and, for the Full kind, on the segment [y_hat, y_hat_i]).
struct StabilityTrial {
  ModelKind kind = ModelKind::ProxLinear;
  double gamma = 0.0;
  double lambda = 0.0;
  int m = 1;
  Vector z;
  Vector y;
  IndexList batch;
  int replaced = 0;          // position in the batch, 0-based
  Index replacement = 0;     // sample index of xi'_i
  Vector y_hat;
  Vector y_hat_i;
  double distance = 0.0;
  double lipschitz = 0.0;
  double bound = 0.0;
  bool valid = true;         // both prox solves converged
};

StabilityTrial stability_trial(const ProblemInstance& instance, ModelKind kind, const Vector& z,
                               const Vector& y, double gamma, int m, std::uint64_t seed,
                               bool identical_replacement = false, double prox_tol = 1e-10);

// Trial t uses seed derive_seed(seed, Trial, t).
std::vector<StabilityTrial> stability_trials(const ProblemInstance& instance, ModelKind kind,
                                             const Vector& z, const Vector& y, double gamma,
                                             int m, int count, std::uint64_t seed,
                                             bool identical_replacement = false,
                                             double prox_tol = 1e-10);

// Monte-Carlo estimate of E_B[f_z(x_B, B) - (1/n) sum_j f_z(x_B, xi_j)] with
// x_B the prox point at y = z, and the bound 2 L^2 / (m (gamma - lambda)).
struct GapEstimate {
  double estimate = 0.0;
  double half_width = 0.0;  // 95% normal interval
  double bound = 0.0;
  double lipschitz = 0.0;
  double lambda = 0.0;
  int trials = 0;
};

GapEstimate expectation_gap_estimate(const ProblemInstance& instance, ModelKind kind,
                                     const Vector& z, double gamma, int m, int trials,
                                     std::uint64_t seed, double prox_tol = 1e-10);

struct StabilityReport {
  int trials = 0;
  int invalid = 0;
  double max_ratio = 0.0;   // distance / bound over valid trials
  double mean_ratio = 0.0;
  int violations = 0;       // distance > bound + tol
  std::optional<GapEstimate> gap;
};

StabilityReport summarize(const std::vector<StabilityTrial>& trials, double tol = 1e-8,
                          std::optional<GapEstimate> gap = std::nullopt);

}  // namespace smod
