#include "smod/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smod {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear:
      return "sgd";
    case ModelKind::ProxLinear:
      return "spl";
    case ModelKind::Full:
      return "spp";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "sgd" || name == "linear") return ModelKind::Linear;
  if (name == "spl" || name == "prox_linear") return ModelKind::ProxLinear;
  if (name == "spp" || name == "full") return ModelKind::Full;
  throw std::invalid_argument("unknown model kind: " + name);
}

double sample_curvature(const ProblemInstance& instance, Index i) {
  switch (instance.kind) {
    case ProblemKind::PhaseRetrieval:
      return 2.0 * instance.u.row(i).squaredNorm();
    case ProblemKind::BlindDeconvolution:
      return instance.u.row(i).norm() * instance.v.row(i).norm();
    case ProblemKind::AbsoluteLinear:
      return 0.0;
  }
  return 0.0;
}

double max_curvature(const ProblemInstance& instance) {
  double worst = 0.0;
  for (Index i = 0; i < instance.n(); ++i) worst = std::max(worst, sample_curvature(instance, i));
  return worst;
}

double max_curvature(const ProblemInstance& instance, std::span<const Index> batch) {
  double worst = 0.0;
  for (Index i : batch) worst = std::max(worst, sample_curvature(instance, i));
  return worst;
}

double sample_weak_convexity(const ProblemInstance& instance, Index i) {
  if (instance.kind == ProblemKind::PhaseRetrieval && instance.b(i) <= 0.0) return 0.0;
  return sample_curvature(instance, i);
}

namespace {

void check(const ProblemInstance& instance, Index i, const Vector& z, const Vector& x) {
  if (i < 0 || i >= instance.n()) throw std::out_of_range("model_value: sample index out of range");
  if (z.size() != instance.dim() || x.size() != instance.dim()) {
    throw std::invalid_argument("model_value: dimension mismatch");
  }
}

}  // namespace

double model_value(ModelKind kind, const ProblemInstance& instance, Index i, const Vector& z,
                   const Vector& x) {
  check(instance, i, z, x);
  if (kind == ModelKind::Full) return std::abs(residual(instance, i, x));
  Vector g(instance.dim());
  const double c = residual_and_gradient(instance, i, z, g);
  const double step = g.dot(x - z);
  if (kind == ModelKind::ProxLinear) return std::abs(c + step);
  const double sign = (c > 0.0) - (c < 0.0);
  return std::abs(c) + sign * step;
}

double batch_model_value(ModelKind kind, const ProblemInstance& instance,
                         std::span<const Index> batch, const Vector& z, const Vector& x) {
  if (batch.empty()) throw std::invalid_argument("batch_model_value: empty batch");
  double sum = 0.0;
  for (Index i : batch) sum += model_value(kind, instance, i, z, x);
  return sum / static_cast<double>(batch.size());
}

ModelConstants model_constants(ModelKind kind, const ProblemInstance& instance) {
  const double curvature = max_curvature(instance);
  ModelConstants out;
  switch (kind) {
    case ModelKind::Linear:
    case ModelKind::ProxLinear:
      out.lambda = 0.0;
      out.tau = curvature;
      break;
    case ModelKind::Full:
      out.lambda = curvature;
      out.tau = 0.0;
      break;
  }
  return out;
}

namespace {

// Largest |grad c_i| over the convex hull of points whose inner products with
// a_i (or u_i, v_i) lie within the given magnitude bounds.
double gradient_bound(const ProblemInstance& instance, Index i, double au_abs, double v_abs) {
  switch (instance.kind) {
    case ProblemKind::PhaseRetrieval:
      return 2.0 * au_abs * instance.u.row(i).norm();
    case ProblemKind::BlindDeconvolution: {
      const double un = instance.u.row(i).norm();
      const double vn = instance.v.row(i).norm();
      return std::hypot(v_abs * un, au_abs * vn);
    }
    case ProblemKind::AbsoluteLinear:
      return instance.u.row(i).norm();
  }
  return 0.0;
}

void inner_products(const ProblemInstance& instance, Index i, const Vector& x, double& ux,
                    double& vy) {
  const Index d = instance.signal_dim();
  if (instance.kind == ProblemKind::BlindDeconvolution) {
    ux = instance.u.row(i).dot(x.head(d));
    vy = instance.v.row(i).dot(x.tail(d));
  } else {
    ux = instance.u.row(i).dot(x);
    vy = 0.0;
  }
}

}  // namespace

double model_lipschitz(ModelKind kind, const ProblemInstance& instance,
                       std::span<const Index> batch, const Vector& z, double radius) {
  if (batch.empty()) throw std::invalid_argument("model_lipschitz: empty batch");
  if (z.size() != instance.dim()) throw std::invalid_argument("model_lipschitz: dimension mismatch");
  double lip = 0.0;
  Vector g(instance.dim());
  for (Index i : batch) {
    if (kind == ModelKind::Full) {
      double ux, vy;
      inner_products(instance, i, z, ux, vy);
      const double un = instance.u.row(i).norm();
      const double vn = instance.kind == ProblemKind::BlindDeconvolution ? instance.v.row(i).norm()
                                                                          : 0.0;
      lip = std::max(lip, gradient_bound(instance, i, std::abs(ux) + radius * un,
                                         std::abs(vy) + radius * vn));
    } else {
      residual_and_gradient(instance, i, z, g);
      // The Linear model at a kink uses the zero subgradient, but any element
      // of [-1, 1] * grad c is admissible, so the bound uses |grad c|.
      lip = std::max(lip, g.norm());
    }
  }
  return lip;
}

double model_lipschitz_on_segment(ModelKind kind, const ProblemInstance& instance,
                                  std::span<const Index> batch, const Vector& z, const Vector& p,
                                  const Vector& q) {
  if (kind != ModelKind::Full) return model_lipschitz(kind, instance, batch, z);
  if (batch.empty()) throw std::invalid_argument("model_lipschitz_on_segment: empty batch");
  double lip = 0.0;
  for (Index i : batch) {
    // Inner products are affine along the segment, so their magnitude peaks at an endpoint.
    double up, vp, uq, vq;
    inner_products(instance, i, p, up, vp);
    inner_products(instance, i, q, uq, vq);
    lip = std::max(lip, gradient_bound(instance, i, std::max(std::abs(up), std::abs(uq)),
                                       std::max(std::abs(vp), std::abs(vq))));
  }
  return lip;
}

}  // namespace smod
