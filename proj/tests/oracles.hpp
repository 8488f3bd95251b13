#pragma once

// Independent brute-force references used by the tests. Nothing here calls
// into the prox module.

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <utility>
#include <vector>

#include "smod/problems.hpp"

namespace oracle {

using smod::Index;
using smod::Vector;

// Enumerates a points^dim grid on the box center +- radius.
inline void for_each_grid_point(const Vector& center, double radius, int points,
                                const std::function<void(const Vector&)>& visit) {
  const Index dim = center.size();
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  Vector x(dim);
  const double step = 2.0 * radius / (points - 1);
  for (;;) {
    for (Index j = 0; j < dim; ++j) x(j) = center(j) - radius + step * idx[static_cast<std::size_t>(j)];
    visit(x);
    Index j = 0;
    while (j < dim && ++idx[static_cast<std::size_t>(j)] == points) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == dim) break;
  }
}

// Multi-start grid zoom: a coarse scan keeps the best `starts` points, each is
// refined by halving a grid box around the incumbent until the box is tiny.
inline std::pair<Vector, double> grid_minimize(const std::function<double(const Vector&)>& f,
                                               const Vector& center, double radius,
                                               int points = 0, int starts = 4) {
  const Index dim = center.size();
  if (points == 0) points = dim <= 1 ? 401 : dim == 2 ? 61 : 17;
  std::vector<std::pair<double, Vector>> best;
  for_each_grid_point(center, radius, points, [&](const Vector& x) {
    best.emplace_back(f(x), x);
    if (best.size() > static_cast<std::size_t>(4 * starts)) {
      std::nth_element(best.begin(), best.begin() + starts, best.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      best.resize(static_cast<std::size_t>(starts));
    }
  });
  std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (best.size() > static_cast<std::size_t>(starts)) best.resize(static_cast<std::size_t>(starts));

  const int zoom_points = dim <= 2 ? 21 : 11;
  std::pair<Vector, double> overall{center, f(center)};
  for (auto& [value, start] : best) {
    Vector x = start;
    double fx = value;
    double r = 2.0 * radius / (points - 1);
    // Recentre while a grid point improves; shrink only when none does, so
    // the search can follow curved kink valleys.
    for (int it = 0; it < 5000 && r > 1e-13 * (1.0 + x.norm()); ++it) {
      Vector cand = x;
      double fc = fx;
      for_each_grid_point(x, r, zoom_points, [&](const Vector& p) {
        const double v = f(p);
        if (v < fc) {
          fc = v;
          cand = p;
        }
      });
      if (fc < fx) {
        x = cand;
        fx = fc;
      } else {
        r *= 0.5;
      }
    }
    if (fx < overall.second) overall = {x, fx};
  }
  return overall;
}

// Scalar residual of one sample written out from scratch.
inline double residual(const smod::ProblemInstance& inst, Index i, const Vector& x) {
  const Index d = inst.signal_dim();
  switch (inst.kind) {
    case smod::ProblemKind::PhaseRetrieval: {
      double s = 0.0;
      for (Index j = 0; j < d; ++j) s += inst.u(i, j) * x(j);
      return s * s - inst.b(i);
    }
    case smod::ProblemKind::BlindDeconvolution: {
      double s = 0.0, t = 0.0;
      for (Index j = 0; j < d; ++j) {
        s += inst.u(i, j) * x(j);
        t += inst.v(i, j) * x(d + j);
      }
      return s * t - inst.b(i);
    }
    case smod::ProblemKind::AbsoluteLinear: {
      double s = 0.0;
      for (Index j = 0; j < d; ++j) s += inst.u(i, j) * x(j);
      return s - inst.b(i);
    }
  }
  return 0.0;
}

inline Vector gradient(const smod::ProblemInstance& inst, Index i, const Vector& x) {
  const Index d = inst.signal_dim();
  Vector g = Vector::Zero(inst.dim());
  double s = 0.0, t = 0.0;
  for (Index j = 0; j < d; ++j) s += inst.u(i, j) * x(j);
  if (inst.kind == smod::ProblemKind::BlindDeconvolution) {
    for (Index j = 0; j < d; ++j) t += inst.v(i, j) * x(d + j);
    for (Index j = 0; j < d; ++j) {
      g(j) = t * inst.u(i, j);
      g(d + j) = s * inst.v(i, j);
    }
  } else if (inst.kind == smod::ProblemKind::PhaseRetrieval) {
    for (Index j = 0; j < d; ++j) g(j) = 2.0 * s * inst.u(i, j);
  } else {
    for (Index j = 0; j < d; ++j) g(j) = inst.u(i, j);
  }
  return g;
}

enum class Model { Linear, ProxLinear, Full };

inline double model(Model kind, const smod::ProblemInstance& inst, Index i, const Vector& z,
                    const Vector& x) {
  if (kind == Model::Full) return std::abs(oracle::residual(inst, i, x));
  const double c = oracle::residual(inst, i, z);
  const double lin = oracle::gradient(inst, i, z).dot(x - z);
  if (kind == Model::ProxLinear) return std::abs(c + lin);
  const double sign = (c > 0.0) - (c < 0.0);
  return std::abs(c) + sign * lin;
}

// Subproblem objective (1/m) sum model + gamma/2 |x - y|^2.
inline double subproblem(Model kind, const smod::ProblemInstance& inst,
                         const std::vector<Index>& batch, const Vector& z, const Vector& y,
                         double gamma, const Vector& x) {
  double s = 0.0;
  for (Index i : batch) s += model(kind, inst, i, z, x);
  return s / static_cast<double>(batch.size()) + 0.5 * gamma * (x - y).squaredNorm();
}

// One batch term written as r(x) = x'Qx/2 + g'x + c, taken in absolute value
// unless `absolute` is false. `zeros` lists hyperplanes w'x = e whose union
// is the zero set of r, when that set is affine.
struct QuadraticTerm {
  Eigen::MatrixXd Q;
  Vector g;
  double c = 0.0;
  bool absolute = true;
  std::vector<std::pair<Vector, double>> zeros;
};

inline QuadraticTerm quadratic_term(Model kind, const smod::ProblemInstance& inst, Index i,
                                    const Vector& z) {
  const Index dim = inst.dim();
  const Index d = inst.signal_dim();
  QuadraticTerm term;
  term.Q = Eigen::MatrixXd::Zero(dim, dim);
  if (kind != Model::Full) {
    const double c = oracle::residual(inst, i, z);
    const Vector grad = oracle::gradient(inst, i, z);
    if (kind == Model::Linear) {
      const double sign = (c > 0.0) - (c < 0.0);
      term.g = sign * grad;
      term.c = std::abs(c) - sign * grad.dot(z);
      term.absolute = false;
    } else {
      term.g = grad;
      term.c = c - grad.dot(z);
      term.zeros.emplace_back(grad, -term.c);
    }
    return term;
  }
  const Vector a = inst.u.row(i).transpose();
  const double b = inst.b(i);
  term.g = Vector::Zero(dim);
  term.c = -b;
  switch (inst.kind) {
    case smod::ProblemKind::PhaseRetrieval:
      term.Q.topLeftCorner(d, d) = 2.0 * a * a.transpose();
      if (b > 0.0) {
        term.zeros.emplace_back(a, std::sqrt(b));
        term.zeros.emplace_back(a, -std::sqrt(b));
      } else if (b == 0.0) {
        term.zeros.emplace_back(a, 0.0);
      }
      break;
    case smod::ProblemKind::BlindDeconvolution: {
      const Vector w = inst.v.row(i).transpose();
      term.Q.topRightCorner(d, d) = a * w.transpose();
      term.Q.bottomLeftCorner(d, d) = w * a.transpose();
      break;
    }
    case smod::ProblemKind::AbsoluteLinear:
      term.g.head(d) = a;
      term.zeros.emplace_back(term.g, b);
      break;
  }
  return term;
}

// Enumerates every sign pattern and choice of active hyperplanes; each piece
// is an equality-constrained quadratic solved through its KKT system. The
// global minimizer is a stationary point of the piece it lies on, so the best
// candidate value is exact whenever the kinks are affine.
inline std::pair<Vector, double> piecewise_reference(Model kind, const smod::ProblemInstance& inst,
                                                     const std::vector<Index>& batch,
                                                     const Vector& z, const Vector& y,
                                                     double gamma) {
  const Index dim = inst.dim();
  const double m = static_cast<double>(batch.size());
  std::vector<QuadraticTerm> terms;
  for (Index i : batch) terms.push_back(quadratic_term(kind, inst, i, z));
  auto f = [&](const Vector& x) { return subproblem(kind, inst, batch, z, y, gamma, x); };
  std::pair<Vector, double> best{y, f(y)};
  std::vector<int> state(terms.size(), 0);
  std::function<void(std::size_t)> visit = [&](std::size_t slot) {
    if (slot == terms.size()) {
      Eigen::MatrixXd H = gamma * Eigen::MatrixXd::Identity(dim, dim);
      Vector q = -gamma * y;
      std::vector<std::pair<Vector, double>> active;
      for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& term = terms[j];
        if (state[j] >= 2) {
          active.push_back(term.zeros[static_cast<std::size_t>(state[j] - 2)]);
          continue;
        }
        const double sign = state[j] == 0 ? 1.0 : -1.0;
        H += sign / m * term.Q;
        q += sign / m * term.g;
      }
      const Index rows = static_cast<Index>(active.size());
      if (rows > dim) return;
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim + rows, dim + rows);
      Vector rhs(dim + rows);
      kkt.topLeftCorner(dim, dim) = H;
      rhs.head(dim) = -q;
      for (Index r = 0; r < rows; ++r) {
        kkt.block(dim + r, 0, 1, dim) = active[static_cast<std::size_t>(r)].first.transpose();
        kkt.block(0, dim + r, dim, 1) = active[static_cast<std::size_t>(r)].first;
        rhs(dim + r) = active[static_cast<std::size_t>(r)].second;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) return;
      const Vector x = lu.solve(rhs).head(dim);
      const double fx = f(x);
      if (std::isfinite(fx) && fx < best.second) best = {x, fx};
      return;
    }
    const auto& term = terms[slot];
    const int states = term.absolute ? 2 + static_cast<int>(term.zeros.size()) : 1;
    for (int s = 0; s < states; ++s) {
      state[slot] = s;
      visit(slot + 1);
    }
  };
  visit(0);
  return best;
}

// Minimizes the subproblem on the box that must contain the minimizer:
// gamma/2 |x - y|^2 <= F(y). Piecewise enumeration is folded in as well.
inline std::pair<Vector, double> prox_reference(Model kind, const smod::ProblemInstance& inst,
                                                const std::vector<Index>& batch, const Vector& z,
                                                const Vector& y, double gamma) {
  auto f = [&](const Vector& x) { return subproblem(kind, inst, batch, z, y, gamma, x); };
  double radius = std::sqrt(2.0 * f(y) / gamma) + 1e-9;
  if (kind == Model::Linear) {
    // The linear model can be negative; it is |g|-Lipschitz, so the
    // minimizer lies within 2 max|g| / gamma of y.
    double lip = 0.0;
    for (Index i : batch) lip = std::max(lip, gradient(inst, i, z).norm());
    radius = 2.0 * lip / gamma + 1e-9;
  }
  auto best = grid_minimize(f, y, radius);
  auto exact = piecewise_reference(kind, inst, batch, z, y, gamma);
  return exact.second < best.second ? exact : best;
}

// Single-sample blind deconvolution with the Full model, reduced to the two
// inner products s = <u, x>, t = <v, y>: for fixed (s, t) the cheapest x, y
// are projections of the centers, costing (s - p0)^2/|u|^2 and (t - q0)^2/|v|^2.
inline double blind_deconv_full_reference(const Vector& u, const Vector& v, double b,
                                          const Vector& wx, const Vector& wy, double gamma) {
  const double uu = u.squaredNorm(), vv = v.squaredNorm();
  const double p0 = u.dot(wx), q0 = v.dot(wy);
  auto f = [&](const Vector& st) {
    return std::abs(st(0) * st(1) - b) +
           0.5 * gamma * ((st(0) - p0) * (st(0) - p0) / uu + (st(1) - q0) * (st(1) - q0) / vv);
  };
  Vector c(2);
  c << p0, q0;
  const double f0 = std::abs(p0 * q0 - b);
  const double radius = std::sqrt(2.0 * f0 * std::max(uu, vv) / gamma) + 1e-9;
  double best = grid_minimize(f, c, radius, 81, 6).second;
  // The kink st = b is a curved valley; scan it directly in both parameterizations.
  auto scan = [&](double lo, double hi, auto&& point) {
    const int points = 20001;
    double best_arg = lo, best_val = std::numeric_limits<double>::infinity();
    for (int j = 0; j < points; ++j) {
      const double a = lo + (hi - lo) * j / (points - 1);
      const Vector st = point(a);
      if (!st.allFinite()) continue;
      const double val = f(st);
      if (val < best_val) best_val = val, best_arg = a;
    }
    double h = (hi - lo) / (points - 1);
    for (int it = 0; it < 200 && h > 1e-15; ++it) {
      bool moved = false;
      for (double a : {best_arg - h, best_arg + h}) {
        const Vector st = point(a);
        if (!st.allFinite()) continue;
        const double val = f(st);
        if (val < best_val) best_val = val, best_arg = a, moved = true;
      }
      if (!moved) h *= 0.5;
    }
    return best_val;
  };
  auto on_curve_s = [&](double s) {
    Vector st(2);
    st << s, b / s;
    return st;
  };
  auto on_curve_t = [&](double t) {
    Vector st(2);
    st << b / t, t;
    return st;
  };
  best = std::min(best, scan(p0 - radius, p0 + radius, on_curve_s));
  best = std::min(best, scan(q0 - radius, q0 + radius, on_curve_t));
  return best;
}

// Least-absolute-deviation minimum by vertex enumeration: some minimizer of
// (1/n) sum |<a_i, x> - b_i| interpolates dim of the samples exactly.
inline std::pair<Vector, double> lad_minimum(const smod::ProblemInstance& inst) {
  const Index d = inst.dim();
  const Index n = inst.n();
  auto value = [&](const Vector& x) {
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) sum += std::abs(inst.u.row(i).dot(x) - inst.b(i));
    return sum / static_cast<double>(n);
  };
  std::pair<Vector, double> best{Vector::Zero(d), value(Vector::Zero(d))};
  std::vector<Index> pick(static_cast<std::size_t>(d));
  std::function<void(Index, Index)> choose = [&](Index slot, Index from) {
    if (slot == d) {
      Eigen::MatrixXd system(d, d);
      Vector rhs(d);
      for (Index j = 0; j < d; ++j) {
        system.row(j) = inst.u.row(pick[static_cast<std::size_t>(j)]);
        rhs(j) = inst.b(pick[static_cast<std::size_t>(j)]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
      if (!lu.isInvertible()) return;
      const Vector x = lu.solve(rhs);
      const double fx = value(x);
      if (fx < best.second) best = {x, fx};
      return;
    }
    for (Index i = from; i < n; ++i) {
      pick[static_cast<std::size_t>(slot)] = i;
      choose(slot + 1, i + 1);
    }
  };
  choose(0, 0);
  return best;
}

}  // namespace oracle
