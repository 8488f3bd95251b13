#include "smod/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "smod/rng.hpp"

namespace smod {

namespace {

ProxRequest request_for(const ProblemInstance& instance, ModelKind kind, const IndexList& batch,
                        const Vector& z, const Vector& y, double gamma, double tol) {
  ProxRequest req;
  req.kind = kind;
  req.instance = &instance;
  req.batch = batch;
  req.z = z;
  req.y = y;
  req.gamma = gamma;
  req.tol = tol;
  return req;
}

double checked_lambda(const ProblemInstance& instance, ModelKind kind, double gamma) {
  const double lambda = model_constants(kind, instance).lambda;
  if (!(gamma > lambda)) throw std::invalid_argument("stability: gamma must exceed lambda");
  return lambda;
}

}  // namespace

StabilityTrial stability_trial(const ProblemInstance& instance, ModelKind kind, const Vector& z,
                               const Vector& y, double gamma, int m, std::uint64_t seed,
                               bool identical_replacement, double prox_tol) {
  if (m < 1) throw std::invalid_argument("stability_trial: m must be >= 1");
  StabilityTrial t;
  t.kind = kind;
  t.gamma = gamma;
  t.lambda = checked_lambda(instance, kind, gamma);
  t.m = m;
  t.z = z;
  t.y = y;

  Rng rng = make_rng(seed, Stream::Trial);
  std::uniform_int_distribution<Index> pick(0, instance.n() - 1);
  t.batch.resize(static_cast<std::size_t>(m));
  for (auto& i : t.batch) i = pick(rng);
  t.replaced = std::uniform_int_distribution<int>(0, m - 1)(rng);
  Rng repl = make_rng(seed, Stream::Replacement);
  t.replacement = identical_replacement ? t.batch[static_cast<std::size_t>(t.replaced)] : pick(repl);

  IndexList swapped = t.batch;
  swapped[static_cast<std::size_t>(t.replaced)] = t.replacement;
  const ProxResult a = prox_step(request_for(instance, kind, t.batch, z, y, gamma, prox_tol));
  const ProxResult b = prox_step(request_for(instance, kind, swapped, z, y, gamma, prox_tol));
  t.valid = a.converged && b.converged;
  t.y_hat = a.x_plus;
  t.y_hat_i = b.x_plus;
  t.distance = (t.y_hat - t.y_hat_i).norm();

  IndexList united = t.batch;
  united.push_back(t.replacement);
  t.lipschitz = model_lipschitz_on_segment(kind, instance, united, z, t.y_hat, t.y_hat_i);
  t.bound = 2.0 * t.lipschitz / (m * (gamma - t.lambda));
  return t;
}

std::vector<StabilityTrial> stability_trials(const ProblemInstance& instance, ModelKind kind,
                                             const Vector& z, const Vector& y, double gamma,
                                             int m, int count, std::uint64_t seed,
                                             bool identical_replacement, double prox_tol) {
  std::vector<StabilityTrial> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int t = 0; t < count; ++t) {
    out.push_back(stability_trial(instance, kind, z, y, gamma, m,
                                  derive_seed(seed, Stream::Trial, static_cast<std::uint64_t>(t)),
                                  identical_replacement, prox_tol));
  }
  return out;
}

GapEstimate expectation_gap_estimate(const ProblemInstance& instance, ModelKind kind,
                                     const Vector& z, double gamma, int m, int trials,
                                     std::uint64_t seed, double prox_tol) {
  if (trials < 2) throw std::invalid_argument("expectation_gap_estimate: need >= 2 trials");
  if (m < 1) throw std::invalid_argument("expectation_gap_estimate: m must be >= 1");
  GapEstimate out;
  out.trials = trials;
  out.lambda = checked_lambda(instance, kind, gamma);

  IndexList all(static_cast<std::size_t>(instance.n()));
  for (Index i = 0; i < instance.n(); ++i) all[static_cast<std::size_t>(i)] = i;

  Rng rng = make_rng(seed, Stream::Batch);
  std::uniform_int_distribution<Index> pick(0, instance.n() - 1);
  IndexList batch(static_cast<std::size_t>(m));
  double sum = 0.0, sum_sq = 0.0, radius = 0.0;
  for (int t = 0; t < trials; ++t) {
    for (auto& i : batch) i = pick(rng);
    const ProxResult res = prox_step(request_for(instance, kind, batch, z, z, gamma, prox_tol));
    const double gap = batch_model_value(kind, instance, batch, z, res.x_plus) -
                       batch_model_value(kind, instance, all, z, res.x_plus);
    sum += gap;
    sum_sq += gap * gap;
    radius = std::max(radius, (res.x_plus - z).norm());
  }
  out.estimate = sum / trials;
  const double var = std::max(0.0, (sum_sq - trials * out.estimate * out.estimate) / (trials - 1));
  out.half_width = 1.96 * std::sqrt(var / trials);
  out.lipschitz = model_lipschitz(kind, instance, all, z, radius);
  out.bound = 2.0 * out.lipschitz * out.lipschitz / (m * (gamma - out.lambda));
  return out;
}

StabilityReport summarize(const std::vector<StabilityTrial>& trials, double tol,
                          std::optional<GapEstimate> gap) {
  StabilityReport r;
  r.trials = static_cast<int>(trials.size());
  r.gap = gap;
  double ratio_sum = 0.0;
  int valid = 0;
  for (const auto& t : trials) {
    if (!t.valid) {
      ++r.invalid;
      continue;
    }
    ++valid;
    double ratio = 0.0;
    if (t.bound > 0.0) {
      ratio = t.distance / t.bound;
    } else if (t.distance > 0.0) {
      ratio = std::numeric_limits<double>::infinity();
    }
    r.max_ratio = std::max(r.max_ratio, ratio);
    ratio_sum += ratio;
    if (t.distance > t.bound + tol) ++r.violations;
  }
  r.mean_ratio = valid > 0 ? ratio_sum / valid : 0.0;
  return r;
}

}  // namespace smod
