#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "smod/prox.hpp"
#include "smod/rng.hpp"

using namespace smod;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

ProblemInstance phase(std::vector<std::pair<Vector, double>> samples) {
  std::vector<Sample> s;
  for (const auto& [a, b] : samples) s.push_back({a, Vector(), b});
  return make_instance(ProblemKind::PhaseRetrieval, s);
}

ProxRequest request(ModelKind kind, const ProblemInstance& inst, IndexList batch, Vector z,
                    Vector y, double gamma) {
  ProxRequest r;
  r.kind = kind;
  r.instance = &inst;
  r.batch = std::move(batch);
  r.z = std::move(z);
  r.y = std::move(y);
  r.gamma = gamma;
  return r;
}

oracle::Model as_oracle(ModelKind k) {
  switch (k) {
    case ModelKind::Linear:
      return oracle::Model::Linear;
    case ModelKind::ProxLinear:
      return oracle::Model::ProxLinear;
    case ModelKind::Full:
      return oracle::Model::Full;
  }
  return oracle::Model::Full;
}

Vector gaussian(Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("subgradient step examples") {
  const auto inst = phase({{vec({1, 0}), 1.0}});
  auto res = prox_sgd(request(ModelKind::Linear, inst, {0}, vec({2, 0}), vec({2, 0}), 2.0));
  CHECK(res.x_plus == vec({0, 0}));
  CHECK(res.status == ProxStatus::ClosedForm);
  // residual exactly zero: the zero subgradient leaves y unchanged
  res = prox_sgd(request(ModelKind::Linear, inst, {0}, vec({1, 0}), vec({3, 4}), 2.0));
  CHECK(res.x_plus == vec({3, 4}));
  const auto two = phase({{vec({1, 0}), 0.0}, {vec({0, 1}), 0.0}});
  res = prox_sgd(request(ModelKind::Linear, two, {0, 1}, vec({1, 1}), vec({0, 0}), 1.0));
  CHECK(res.x_plus == vec({-1, -1}));
}

TEST_CASE("single-sample prox-linear examples") {
  const auto inst = phase({{vec({1, 0}), 0.0}});
  auto res = prox_spl_seq(request(ModelKind::ProxLinear, inst, {0}, vec({1, 0}), vec({1, 0}), 2.0));
  CHECK(res.x_plus.isApprox(vec({0.5, 0})));
  // 1D oracle on |2x - 1| + (x - 1)^2
  const auto ref = oracle::grid_minimize(
      [](const Vector& x) { return std::abs(2 * x(0) - 1) + (x(0) - 1) * (x(0) - 1); }, vec({1}), 2.0);
  CHECK(ref.first(0) == doctest::Approx(0.5).epsilon(1e-9));

  const auto far = phase({{vec({1, 0}), 100.0}});
  res = prox_spl_seq(request(ModelKind::ProxLinear, far, {0}, vec({1, 0}), vec({1, 0}), 2.0));
  CHECK(res.x_plus.isApprox(vec({2, 0})));

  const auto kink = phase({{vec({1, 0}), 1.0}});
  res = prox_spl_seq(request(ModelKind::ProxLinear, kink, {0}, vec({1, 3}), vec({1, 3}), 5.0));
  CHECK(res.x_plus == vec({1, 3}));

  // g = 0 at the origin
  res = prox_spl_seq(request(ModelKind::ProxLinear, kink, {0}, vec({0, 0}), vec({2, 1}), 5.0));
  CHECK(res.x_plus == vec({2, 1}));
}

TEST_CASE("minibatch prox-linear via the dual box QP") {
  Rng rng = make_rng(5, Stream::Data);
  GenSpec spec;
  spec.n = 10;
  spec.d = 3;
  spec.p_fail = 0.3;
  spec.seed = 4;
  const auto inst = gen_synthetic_phase_retrieval(spec);
  for (int t = 0; t < 20; ++t) {
    const Vector z = gaussian(3, rng), y = gaussian(3, rng);
    const Index i = t % 10;
    const auto seq = prox_spl_seq(request(ModelKind::ProxLinear, inst, {i}, z, y, 3.0));
    const auto one = prox_spl_batch(request(ModelKind::ProxLinear, inst, {i}, z, y, 3.0));
    const auto dup = prox_spl_batch(request(ModelKind::ProxLinear, inst, {i, i}, z, y, 3.0));
    CHECK((seq.x_plus - one.x_plus).norm() <= 1e-10);
    CHECK((seq.x_plus - dup.x_plus).norm() <= 1e-10);
    CHECK(one.status == ProxStatus::QP);
    CHECK(one.converged);
    CHECK(one.final_gap <= 1e-10 * (1.0 + std::abs(one.objective)));
  }
  const auto two = phase({{vec({1, 0}), 0.0}, {vec({0, 1}), 0.0}});
  const auto res = prox_spl_batch(request(ModelKind::ProxLinear, two, {0, 1}, vec({1, 1}), vec({1, 1}), 2.0));
  const auto ref = oracle::prox_reference(oracle::Model::ProxLinear, two, {0, 1}, vec({1, 1}),
                                          vec({1, 1}), 2.0);
  CHECK(std::abs(res.objective - ref.second) <= 1e-6);
}

TEST_CASE("dual solver respects its box and certifies the gap") {
  Rng rng = make_rng(6, Stream::Data);
  AbsLinearProblem qp;
  qp.grads = RowMatrix::Zero(6, 4);
  for (Index i = 0; i < 6; ++i) qp.grads.row(i) = gaussian(4, rng).transpose();
  qp.grads.row(5).setZero();
  qp.offsets = gaussian(6, rng);
  qp.center = gaussian(4, rng);
  qp.weight = 0.7;
  const auto sol = solve_abs_linear(qp, 1e-12, 10000);
  CHECK(sol.converged);
  CHECK(sol.multipliers.cwiseAbs().maxCoeff() <= 1.0 / 6.0 + 1e-15);
  CHECK(sol.primal - sol.dual <= 1e-12 * (1.0 + std::abs(sol.primal)));
  CHECK(sol.primal >= sol.dual - 1e-12);
  CHECK((sol.x - (qp.center - qp.grads.transpose() * sol.multipliers / qp.weight)).norm() <= 1e-12);
}

TEST_CASE("single-sample proximal point for phase retrieval") {
  const auto inst = phase({{vec({1, 0}), 1.0}});
  auto res = prox_spp_seq_phase(request(ModelKind::Full, inst, {0}, vec({2, 0}), vec({2, 0}), 4.0));
  CHECK(res.x_plus.isApprox(vec({4.0 / 3.0, 0})));
  CHECK(res.objective == doctest::Approx(5.0 / 3.0));
  CHECK(res.status == ProxStatus::ClosedForm);
  const auto ref = oracle::grid_minimize(
      [](const Vector& t) { return std::abs(t(0) * t(0) - 1) + 2 * (t(0) - 2) * (t(0) - 2); }, vec({2}),
      3.0);
  CHECK(ref.first(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-8));

  // <a, y> = 0 with b > 0
  const auto orth = phase({{vec({1, 1}), 2.0}});
  res = prox_spp_seq_phase(request(ModelKind::Full, orth, {0}, vec({1, -1}), vec({1, -1}), 1.0));
  auto ref2 = oracle::prox_reference(oracle::Model::Full, orth, {0}, vec({1, -1}), vec({1, -1}), 1.0);
  CHECK(res.objective == doctest::Approx(ref2.second).epsilon(1e-7));

  // <a, y>^2 = b and a large weight: the kink itself is optimal
  const auto on_kink = phase({{vec({1, 0}), 4.0}});
  res = prox_spp_seq_phase(request(ModelKind::Full, on_kink, {0}, vec({2, 0}), vec({2, 0.5}), 50.0));
  CHECK(res.x_plus == vec({2, 0.5}));

  // small weight: nonconvex subproblem, still the enumerated global minimum
  res = prox_spp_seq_phase(request(ModelKind::Full, inst, {0}, vec({0.2, 0}), vec({0.2, 0}), 0.5));
  CHECK(res.status == ProxStatus::NonconvexEnumerated);
  ref2 = oracle::prox_reference(oracle::Model::Full, inst, {0}, vec({0.2, 0}), vec({0.2, 0}), 0.5);
  CHECK(res.objective <= ref2.second + 1e-9);
}

TEST_CASE("inner prox-linear loop") {
  const auto inst = phase({{vec({1, 0}), 1.0}});
  auto res = prox_spp_batch(request(ModelKind::Full, inst, {0}, vec({2, 0}), vec({2, 0}), 4.0));
  CHECK((res.x_plus - vec({4.0 / 3.0, 0})).norm() <= 1e-6);
  CHECK(res.status == ProxStatus::InnerLoop);

  // zero residual at the center: one outer step
  res = prox_spp_batch(request(ModelKind::Full, inst, {0}, vec({1, 0}), vec({1, 0}), 10.0));
  CHECK(res.x_plus == vec({1, 0}));
  CHECK(res.inner_iters == 1);

  GenSpec spec;
  spec.n = 8;
  spec.d = 3;
  spec.p_fail = 0.25;
  spec.seed = 12;
  const auto pr = gen_synthetic_phase_retrieval(spec);
  Rng rng = make_rng(7, Stream::Data);
  for (int t = 0; t < 10; ++t) {
    const IndexList batch{0, 1, 2, 3};
    const double gamma = 3.0 * max_curvature(pr, batch);
    const Vector y = gaussian(3, rng);
    res = prox_spp_batch(request(ModelKind::Full, pr, batch, y, y, gamma));
    CHECK(res.converged);
    for (std::size_t j = 1; j < res.gap_trace.size(); ++j) {
      CHECK(res.gap_trace[j] <= res.gap_trace[j - 1]);
    }
    const auto ref = oracle::prox_reference(oracle::Model::Full, pr, batch, y, y, gamma);
    // the grid oracle can stall on a kink, so it only bounds from above
    CHECK(res.objective <= ref.second + 1e-9 * (1.0 + std::abs(ref.second)));
    CHECK(res.objective >= ref.second - 1e-5 * (1.0 + std::abs(ref.second)));
  }
}

TEST_CASE("blind deconvolution single-sample solvers") {
  const auto bd = make_instance(ProblemKind::BlindDeconvolution, {{vec({1, 0}), vec({1, 0}), 1.0}});
  const Vector w = vec({1, 0, 1, 0});
  // residual zero at w, the zero subgradient step stays
  auto res = prox_seq_blind_deconv(request(ModelKind::Linear, bd, {0}, w, w, 2.0));
  CHECK(res.x_plus == w);
  res = prox_seq_blind_deconv(request(ModelKind::ProxLinear, bd, {0}, w, w, 2.0));
  CHECK(res.x_plus == w);

  Rng rng = make_rng(8, Stream::Data);
  GenSpec spec;
  spec.n = 5;
  spec.d = 2;
  spec.p_fail = 0.4;
  spec.seed = 3;
  const auto inst = gen_synthetic_blind_deconv(spec);
  for (int t = 0; t < 20; ++t) {
    const Index i = t % 5;
    const Vector y = gaussian(4, rng);
    const double curv = sample_curvature(inst, i);
    const double gamma = curv * (1.1 + 2.0 * (t % 3));
    res = prox_seq_blind_deconv(request(ModelKind::Full, inst, {i}, y, y, gamma));
    const double ref = oracle::blind_deconv_full_reference(
        inst.u.row(i).transpose(), inst.v.row(i).transpose(), inst.b(i), y.head(2), y.tail(2), gamma);
    CHECK(res.objective <= ref + 1e-5 * (1.0 + std::abs(ref)));
    CHECK(res.objective >= ref - 1e-5 * (1.0 + std::abs(ref)));
  }
}

TEST_CASE("dispatch by model, problem and batch size") {
  GenSpec spec;
  spec.n = 10;
  spec.d = 3;
  spec.seed = 2;
  const auto pr = gen_synthetic_phase_retrieval(spec);
  const Vector x = Vector::Ones(3);
  CHECK(prox_step(request(ModelKind::Linear, pr, {0, 1}, x, x, 5.0)).status == ProxStatus::ClosedForm);
  const auto qp = prox_step(request(ModelKind::ProxLinear, pr, {0, 1, 2, 3, 4, 5, 6, 7}, x, x, 5.0));
  CHECK(qp.status == ProxStatus::QP);
  const double g = 3.0 * max_curvature(pr);
  CHECK(prox_step(request(ModelKind::Full, pr, {0, 1, 2, 3}, x, x, g)).status == ProxStatus::InnerLoop);
  CHECK(prox_step(request(ModelKind::Full, pr, {0}, x, x, g)).status == ProxStatus::ClosedForm);
  CHECK_THROWS_AS(prox_step(request(ModelKind::Full, pr, {}, x, x, g)), std::invalid_argument);
  CHECK_THROWS_AS(prox_step(request(ModelKind::Full, pr, {0}, x, x, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(prox_step(request(ModelKind::Full, pr, {10}, x, x, 1.0)), std::out_of_range);
}

TEST_CASE("identical requests give identical results") {
  GenSpec spec;
  spec.n = 10;
  spec.d = 3;
  spec.seed = 2;
  const auto pr = gen_synthetic_phase_retrieval(spec);
  const Vector x = Vector::LinSpaced(3, -1, 1);
  for (ModelKind k : {ModelKind::Linear, ModelKind::ProxLinear, ModelKind::Full}) {
    const auto req = request(k, pr, {0, 3, 3, 7}, x, x, 3.0 * max_curvature(pr));
    const auto a = prox_step(req);
    const auto b = prox_step(req);
    CHECK(a.x_plus == b.x_plus);
    CHECK(a.objective == b.objective);
  }
}

TEST_CASE("three-point inequality on convex subproblems") {
  Rng rng = make_rng(9, Stream::Data);
  GenSpec spec;
  spec.n = 12;
  spec.d = 3;
  spec.p_fail = 0.3;
  spec.seed = 17;
  const auto pr = gen_synthetic_phase_retrieval(spec);
  const auto bd = gen_synthetic_blind_deconv(spec);
  std::uniform_int_distribution<Index> pick(0, 11);
  for (const auto* inst : {&pr, &bd}) {
    for (ModelKind k : {ModelKind::Linear, ModelKind::ProxLinear, ModelKind::Full}) {
      for (int m : {1, 4}) {
        IndexList batch;
        for (int j = 0; j < m; ++j) batch.push_back(pick(rng));
        const Vector z = gaussian(inst->dim(), rng);
        const Vector y = z + gaussian(inst->dim(), rng, 0.3);
        const double gamma = 3.0 * max_curvature(*inst, batch) + 0.5;
        const auto req = request(k, *inst, batch, z, y, gamma);
        const auto res = prox_step(req);
        const double lambda = k == ModelKind::Full ? max_curvature(*inst, batch) : 0.0;
        const double scale = 1e-6 * (1.0 + std::abs(res.objective));
        for (int c = 0; c < 100; ++c) {
          const Vector w = res.x_plus + gaussian(inst->dim(), rng);
          const double rhs = prox_objective(req, w) - 0.5 * (gamma - lambda) * (w - res.x_plus).squaredNorm();
          CHECK(prox_objective(req, res.x_plus) <= rhs + scale);
        }
      }
    }
  }
}

TEST_CASE("closed forms agree with the grid oracle on small random instances") {
  Rng rng = make_rng(10, Stream::Data);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    GenSpec spec;
    spec.n = 6;
    spec.d = 1 + t % 3;
    spec.p_fail = 0.3;
    spec.seed = 100 + static_cast<std::uint64_t>(t);
    const auto pr = gen_synthetic_phase_retrieval(spec);
    const Index i = t % 6;
    const Vector z = gaussian(pr.dim(), rng);
    const Vector y = z + gaussian(pr.dim(), rng, 0.5);
    const double gamma = sample_curvature(pr, i) * (0.5 + 3.0 * unit(rng)) + 0.1;
    for (ModelKind k : {ModelKind::Linear, ModelKind::ProxLinear, ModelKind::Full}) {
      const Vector center = k == ModelKind::Full ? y : z;
      const auto res = prox_step(request(k, pr, {i}, center, y, gamma));
      const auto ref = oracle::prox_reference(as_oracle(k), pr, {i}, center, y, gamma);
      CHECK(std::abs(res.objective - ref.second) <= 1e-5 * (1.0 + std::abs(ref.second)));
    }
  }
}
