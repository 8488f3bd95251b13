#include "smod/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace smod {

std::string to_string(ProxStatus status) {
  switch (status) {
    case ProxStatus::ClosedForm:
      return "closed_form";
    case ProxStatus::QP:
      return "qp";
    case ProxStatus::InnerLoop:
      return "inner_loop";
    case ProxStatus::NonconvexEnumerated:
      return "nonconvex_enumerated";
  }
  return "unknown";
}

namespace {

void validate(const ProxRequest& request) {
  if (request.instance == nullptr) throw std::invalid_argument("prox: missing instance");
  if (request.batch.empty()) throw std::invalid_argument("prox: empty batch");
  if (!(request.gamma > 0.0)) throw std::invalid_argument("prox: gamma must be positive");
  const ProblemInstance& inst = *request.instance;
  if (request.z.size() != inst.dim() || request.y.size() != inst.dim()) {
    throw std::invalid_argument("prox: dimension mismatch");
  }
  for (Index i : request.batch) {
    if (i < 0 || i >= inst.n()) throw std::out_of_range("prox: batch index out of range");
  }
}

double sign_of(double v) { return (v > 0.0) - (v < 0.0); }

ProxResult finish(const ProxRequest& request, Vector x, ProxStatus status) {
  ProxResult out;
  out.objective = prox_objective(request, x);
  out.x_plus = std::move(x);
  out.status = status;
  return out;
}

}  // namespace

double prox_objective(const ProxRequest& request, const Vector& x) {
  return batch_model_value(request.kind, *request.instance, request.batch, request.z, x) +
         0.5 * request.gamma * (x - request.y).squaredNorm();
}

double prox_model_lambda(const ProxRequest& request) {
  if (request.kind != ModelKind::Full) return 0.0;
  double lambda = 0.0;
  for (Index i : request.batch) {
    lambda = std::max(lambda, sample_weak_convexity(*request.instance, i));
  }
  return lambda;
}

ProxResult prox_sgd(const ProxRequest& request) {
  validate(request);
  const ProblemInstance& inst = *request.instance;
  Vector sum = Vector::Zero(inst.dim());
  Vector g(inst.dim());
  for (Index i : request.batch) {
    const double c = residual_and_gradient(inst, i, request.z, g);
    sum += sign_of(c) * g;
  }
  const double m = static_cast<double>(request.batch.size());
  Vector x = request.y - sum / (m * request.gamma);
  return finish(request, std::move(x), ProxStatus::ClosedForm);
}

ProxResult prox_spl_seq(const ProxRequest& request) {
  validate(request);
  if (request.batch.size() != 1) throw std::invalid_argument("prox_spl_seq: needs one sample");
  const ProblemInstance& inst = *request.instance;
  Vector g(inst.dim());
  const double c = residual_and_gradient(inst, request.batch.front(), request.z, g);
  const Vector zeta = g / request.gamma;
  const double zeta_sq = zeta.squaredNorm();
  if (zeta_sq == 0.0) return finish(request, request.y, ProxStatus::ClosedForm);
  const double delta = (c + g.dot(request.y - request.z)) / request.gamma;
  const double t = std::clamp(-delta / zeta_sq, -1.0, 1.0);
  return finish(request, request.y + t * zeta, ProxStatus::ClosedForm);
}

ProxResult prox_spp_seq_phase(const ProxRequest& request) {
  validate(request);
  const ProblemInstance& inst = *request.instance;
  if (request.batch.size() != 1 || inst.kind != ProblemKind::PhaseRetrieval) {
    throw std::invalid_argument("prox_spp_seq_phase: needs one phase-retrieval sample");
  }
  const Index i = request.batch.front();
  const Vector a = inst.u.row(i).transpose();
  const double b = inst.b(i);
  const double aa = a.squaredNorm();
  const double ay = a.dot(request.y);
  const double gamma = request.gamma;
  const Vector& y = request.y;

  // Stationary points of the two smooth branches, then the two kink points
  // <a, x> = +-sqrt(b); every minimizer lies on the line y + t a.
  std::vector<Vector> candidates;
  for (double s : {1.0, -1.0}) {
    const double denom = 2.0 * aa + s * gamma;
    if (denom != 0.0) candidates.push_back(y - (2.0 * ay / denom) * a);
  }
  if (b >= 0.0 && aa > 0.0) {
    const double root = std::sqrt(b);
    for (double s : {1.0, -1.0}) candidates.push_back(y - ((ay + s * root) / aa) * a);
  }
  candidates.push_back(y);

  ProxRequest full = request;
  full.kind = ModelKind::Full;
  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double value = prox_objective(full, candidates[k]);
    if (value < best_value) {
      best_value = value;
      best = k;
    }
  }
  const bool convex = gamma > sample_weak_convexity(inst, i);
  ProxResult out;
  out.x_plus = candidates[best];
  out.objective = best_value;
  out.status = convex ? ProxStatus::ClosedForm : ProxStatus::NonconvexEnumerated;
  return out;
}

namespace {

// Real roots of c0 t^4 + c1 t^3 + c2 t^2 + c3 t + c4 via the companion matrix,
// each polished by a few Newton steps.
std::vector<double> quartic_real_roots(double c0, double c1, double c2, double c3, double c4) {
  std::vector<double> roots;
  if (c0 == 0.0) return roots;
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(0, 0) = -c1 / c0;
  companion(0, 1) = -c2 / c0;
  companion(0, 2) = -c3 / c0;
  companion(0, 3) = -c4 / c0;
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(3, 2) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);
  const auto eig = solver.eigenvalues();
  for (Index k = 0; k < eig.size(); ++k) {
    if (std::abs(eig(k).imag()) > 1e-8 * std::max(1.0, std::abs(eig(k)))) continue;
    double t = eig(k).real();
    for (int it = 0; it < 4; ++it) {
      const double p = (((c0 * t + c1) * t + c2) * t + c3) * t + c4;
      const double dp = ((4.0 * c0 * t + 3.0 * c1) * t + 2.0 * c2) * t + c3;
      if (dp == 0.0) break;
      const double next = t - p / dp;
      if (!std::isfinite(next)) break;
      t = next;
    }
    roots.push_back(t);
  }
  return roots;
}

}  // namespace

ProxResult prox_seq_blind_deconv(const ProxRequest& request) {
  validate(request);
  const ProblemInstance& inst = *request.instance;
  if (request.batch.size() != 1 || inst.kind != ProblemKind::BlindDeconvolution) {
    throw std::invalid_argument("prox_seq_blind_deconv: needs one blind-deconvolution sample");
  }
  if (request.kind == ModelKind::Linear) return prox_sgd(request);
  if (request.kind == ModelKind::ProxLinear) return prox_spl_seq(request);

  const Index i = request.batch.front();
  const Index d = inst.signal_dim();
  const Vector u = inst.u.row(i).transpose();
  const Vector v = inst.v.row(i).transpose();
  const double b = inst.b(i);
  const double gamma = request.gamma;
  const Vector wx = request.y.head(d);
  const Vector wy = request.y.tail(d);
  const double uu = u.squaredNorm();
  const double vv = v.squaredNorm();
  const double p0 = u.dot(wx);
  const double q0 = v.dot(wy);

  auto join = [d](const Vector& x, const Vector& y) {
    Vector w(2 * d);
    w << x, y;
    return w;
  };

  std::vector<Vector> candidates;
  // Smooth branches: sign s of the residual at the solution.
  const double denom = gamma * gamma - uu * vv;
  const bool smooth_branches = denom != 0.0;
  if (smooth_branches) {
    for (double s : {1.0, -1.0}) {
      candidates.push_back(join(wx - ((s * gamma * q0 - vv * p0) / denom) * u,
                                wy - ((s * gamma * p0 - uu * q0) / denom) * v));
    }
  }
  // Kink manifold <u, x><v, y> = b. With eta = <u, x+>, Lagrange stationarity
  // reduces to eta^4 |v|^2 - eta^3 |v|^2 p0 + b eta |u|^2 q0 - b^2 |u|^2 = 0.
  if (b != 0.0 && uu > 0.0 && vv > 0.0) {
    for (double eta : quartic_real_roots(vv, -vv * p0, 0.0, b * uu * q0, -b * b * uu)) {
      if (eta == 0.0) continue;
      const double zeta = (eta * p0 - eta * eta) / (b * uu);
      candidates.push_back(join(wx - (zeta * b / eta) * u, wy - (zeta * eta) * v));
    }
  } else if (b == 0.0) {
    if (uu > 0.0) candidates.push_back(join(wx - (p0 / uu) * u, wy));
    if (vv > 0.0) candidates.push_back(join(wx, wy - (q0 / vv) * v));
  }
  candidates.push_back(request.y);

  ProxResult out;
  if (!smooth_branches) {
    const InnerLoopResult loop =
        prox_linear_inner_loop(inst, request.batch, request.y, gamma, request.tol,
                               request.max_inner);
    candidates.push_back(loop.prox.x_plus);
    out.inner_iters = loop.prox.inner_iters;
  }

  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double value = prox_objective(request, candidates[k]);
    if (value < best_value) {
      best_value = value;
      best = k;
    }
  }
  out.x_plus = candidates[best];
  out.objective = best_value;
  out.status = gamma > sample_curvature(inst, i) ? ProxStatus::ClosedForm
                                                 : ProxStatus::NonconvexEnumerated;
  return out;
}

AbsLinearSolution solve_abs_linear(const AbsLinearProblem& problem, double tol, int max_sweeps) {
  const Index m = problem.grads.rows();
  const Index dim = problem.grads.cols();
  if (m < 1 || problem.offsets.size() != m || problem.center.size() != dim) {
    throw std::invalid_argument("solve_abs_linear: inconsistent problem dimensions");
  }
  if (!(problem.weight > 0.0)) throw std::invalid_argument("solve_abs_linear: weight must be > 0");
  const double box = 1.0 / static_cast<double>(m);
  const double w = problem.weight;
  const Vector sq = problem.grads.rowwise().squaredNorm();

  AbsLinearSolution out;
  out.multipliers = Vector::Zero(m);
  Vector s = Vector::Zero(dim);  // G^T mu
  Vector& mu = out.multipliers;

  auto evaluate = [&]() {
    const Vector step = -s / w;
    out.primal = box * (problem.offsets + problem.grads * step).cwiseAbs().sum() +
                 0.5 * w * step.squaredNorm();
    out.dual = problem.offsets.dot(mu) - 0.5 * s.squaredNorm() / w;
  };

  for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
    for (Index j = 0; j < m; ++j) {
      double target;
      if (sq(j) > 0.0) {
        const double rest = problem.grads.row(j).dot(s) - mu(j) * sq(j);
        target = std::clamp((w * problem.offsets(j) - rest) / sq(j), -box, box);
      } else {
        target = box * sign_of(problem.offsets(j));
      }
      const double delta = target - mu(j);
      if (delta != 0.0) {
        mu(j) = target;
        s.noalias() += delta * problem.grads.row(j).transpose();
      }
    }
    evaluate();
    if (out.primal - out.dual <= tol * (1.0 + std::abs(out.primal))) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, max_sweeps);
  out.x = problem.center - s / w;
  return out;
}

namespace {

// Linearizes the batch at `at` and re-centers the linear pieces on `center`.
AbsLinearProblem linearize(const ProblemInstance& inst, std::span<const Index> batch,
                           const Vector& at, const Vector& center, double weight) {
  AbsLinearProblem qp;
  const Index m = static_cast<Index>(batch.size());
  qp.grads.resize(m, inst.dim());
  qp.offsets.resize(m);
  Vector g(inst.dim());
  const Vector shift = center - at;
  for (Index k = 0; k < m; ++k) {
    const double c = residual_and_gradient(inst, batch[static_cast<std::size_t>(k)], at, g);
    qp.grads.row(k) = g.transpose();
    qp.offsets(k) = c + g.dot(shift);
  }
  qp.center = center;
  qp.weight = weight;
  return qp;
}

}  // namespace

ProxResult prox_spl_batch(const ProxRequest& request) {
  validate(request);
  if (request.kind != ModelKind::ProxLinear && request.instance->kind != ProblemKind::AbsoluteLinear) {
    throw std::invalid_argument("prox_spl_batch: needs the ProxLinear model");
  }
  const AbsLinearProblem qp =
      linearize(*request.instance, request.batch, request.z, request.y, request.gamma);
  const AbsLinearSolution sol = solve_abs_linear(qp, request.tol, request.max_inner);
  ProxResult out;
  out.x_plus = sol.x;
  out.objective = prox_objective(request, sol.x);
  out.inner_iters = sol.sweeps;
  out.status = ProxStatus::QP;
  out.converged = sol.converged;
  out.final_gap = sol.primal - sol.dual;
  return out;
}

InnerLoopResult prox_linear_inner_loop(const ProblemInstance& instance,
                                       std::span<const Index> batch, const Vector& y,
                                       double gamma, double tol, int max_iters,
                                       const InnerLoopOptions& options) {
  if (batch.empty()) throw std::invalid_argument("prox_linear_inner_loop: empty batch");
  InnerLoopResult out;
  out.tau = max_curvature(instance, batch);
  for (Index i : batch) out.lambda = std::max(out.lambda, sample_weak_convexity(instance, i));
  out.eta = options.eta >= 0.0 ? options.eta : out.tau;
  const double eta = out.eta;
  const double alpha_den = gamma + eta - out.lambda;
  out.contraction = alpha_den > 0.0 ? (eta + out.tau) / alpha_den
                                    : std::numeric_limits<double>::infinity();
  // |z^t - z*| <= |z^{t+1} - z^t| / (1 - sqrt(alpha)) once distances contract.
  const double certify =
      out.contraction < 1.0 ? 0.5 * (eta + out.tau) / std::pow(1.0 - std::sqrt(out.contraction), 2)
                            : std::numeric_limits<double>::infinity();
  const double root = std::sqrt(out.contraction);
  const double distance_factor =
      out.contraction < 1.0 ? root / (1.0 - root) : std::numeric_limits<double>::infinity();
  // relative duality gaps below 1e-15 are rounding noise
  const double qp_tol = std::clamp(tol, 1e-15, 1e-12);

  Vector zt = options.start ? *options.start : y;
  if (options.keep_iterates) out.iterates.push_back(zt);
  double bound = std::numeric_limits<double>::infinity();
  ProxResult& prox = out.prox;
  prox.status = ProxStatus::InnerLoop;
  prox.converged = false;
  for (int t = 1; t <= max_iters; ++t) {
    const Vector center = (gamma * y + eta * zt) / (gamma + eta);
    const AbsLinearProblem qp = linearize(instance, batch, zt, center, gamma + eta);
    const AbsLinearSolution sol = solve_abs_linear(qp, qp_tol, 100000);
    const double move = (sol.x - zt).norm();
    out.multipliers = sol.multipliers;
    out.last_center = zt;
    zt = sol.x;
    if (options.keep_iterates) out.iterates.push_back(zt);
    prox.inner_iters = t;
    const double step_bound = move == 0.0 ? 0.0 : certify * move * move;
    bound = std::min(bound, step_bound);
    prox.gap_trace.push_back(bound);
    if (move <= tol || bound <= tol || distance_factor * move <= options.distance_tol) {
      prox.converged = true;
      break;
    }
  }
  prox.final_gap = bound;
  prox.x_plus = zt;
  prox.objective = batch_loss(instance, batch, zt) + 0.5 * gamma * (zt - y).squaredNorm();
  return out;
}

ProxResult prox_spp_batch(const ProxRequest& request) {
  validate(request);
  if (request.kind != ModelKind::Full) throw std::invalid_argument("prox_spp_batch: needs Full");
  return prox_linear_inner_loop(*request.instance, request.batch, request.y, request.gamma,
                                request.tol, request.max_inner)
      .prox;
}

ProxResult prox_step(const ProxRequest& request) {
  validate(request);
  const ProblemInstance& inst = *request.instance;
  const bool single = request.batch.size() == 1;
  switch (request.kind) {
    case ModelKind::Linear:
      return prox_sgd(request);
    case ModelKind::ProxLinear:
      return single ? prox_spl_seq(request) : prox_spl_batch(request);
    case ModelKind::Full:
      if (inst.kind == ProblemKind::AbsoluteLinear) {
        // The prox-linear model of an affine residual is exact.
        return single ? prox_spl_seq(request) : prox_spl_batch(request);
      }
      if (single && inst.kind == ProblemKind::PhaseRetrieval) return prox_spp_seq_phase(request);
      if (single && inst.kind == ProblemKind::BlindDeconvolution) {
        return prox_seq_blind_deconv(request);
      }
      return prox_spp_batch(request);
  }
  throw std::logic_error("prox_step: unreachable");
}

}  // namespace smod
