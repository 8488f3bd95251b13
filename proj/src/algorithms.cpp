#include "smod/algorithms.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "smod/stationarity.hpp"

namespace smod {

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::SmodMB:
      return "smod_mb";
    case Algorithm::Semod:
      return "semod";
    case Algorithm::SemodMB:
      return "semod_mb";
    case Algorithm::Nesterov:
      return "nesterov";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "smod_mb" || name == "smod") return Algorithm::SmodMB;
  if (name == "semod") return Algorithm::Semod;
  if (name == "semod_mb") return Algorithm::SemodMB;
  if (name == "nesterov" || name == "asmod") return Algorithm::Nesterov;
  throw std::invalid_argument("unknown algorithm: " + name);
}

Stepsize stepsize_theory_smod(int K, int m, double rho, double tau, double lambda, double alpha0) {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("stepsize_theory_smod: alpha0 must be > 0");
  const double eta = std::sqrt(static_cast<double>(K)) / (alpha0 * std::sqrt(static_cast<double>(m)));
  return {std::max(rho + tau, lambda + eta), rho > lambda + tau};
}

Stepsize stepsize_theory_semod(int K, double beta, double lambda, double rho, double gamma0,
                               double tau) {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("stepsize_theory_semod: beta in [0,1)");
  const double theta = 1.0 - beta;
  const double gamma = gamma0 * std::sqrt(static_cast<double>(K)) / theta + lambda +
                       rho * beta * beta / (theta * theta * theta);
  return {gamma, rho >= 2.0 * (tau + lambda)};
}

double semod_mb_zeta(double beta, double lambda, double tau, double rho) {
  const double theta = 1.0 - beta;
  return 2.0 * theta * (rho + lambda * beta + tau) + tau + 2.0 * rho * beta * beta / theta;
}

Stepsize stepsize_theory_semod_mb(int K, int m, double beta, double lambda, double tau,
                                  double rho, double gamma0) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument("stepsize_theory_semod_mb: beta in [0,1)");
  }
  const double theta = 1.0 - beta;
  const double zeta = semod_mb_zeta(beta, lambda, tau, rho);
  const double gamma = gamma0 * std::sqrt(static_cast<double>(K) / m) + zeta / (theta * theta) + lambda;
  return {gamma, rho > 3.0 * (tau + lambda)};
}

double semod_optimal_gamma0(double rho, double delta, double beta, double lipschitz) {
  if (!(delta > 0.0)) throw std::invalid_argument("semod_optimal_gamma0: delta must be > 0");
  return std::sqrt(rho / (delta * (1.0 - beta))) * lipschitz;
}

double stepsize_experiment(double alpha0, int K, int m) {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("stepsize_experiment: alpha0 must be > 0");
  return std::sqrt(static_cast<double>(K) / m) / alpha0;
}

double nesterov_base_gamma(int m, int K, double tau, double lipschitz, double d_tilde,
                           std::optional<double> eta_override) {
  double eta;
  if (eta_override) {
    eta = *eta_override;
  } else {
    if (!(d_tilde > 0.0)) throw std::invalid_argument("nesterov: D~ must be > 0");
    eta = 2.0 * lipschitz * std::pow(K + 2.0, 1.5) / (std::sqrt(3.0 * m) * d_tilde);
  }
  return 2.0 * tau + eta;
}

NesterovParams NesterovSequence::advance() {
  ++k_;
  const double theta = 2.0 / (k_ + 2.0);
  params_.Gamma = params_.Gamma / (1.0 - theta);
  params_.theta = theta;
  params_.gamma_k = base_gamma_ / (k_ + 1.0);
  return params_;
}

NesterovParams nesterov_schedule(int k, int m, int K, double tau, double lipschitz,
                                 double d_tilde, std::optional<double> eta_override) {
  if (k < 0) throw std::invalid_argument("nesterov_schedule: k must be >= 0");
  NesterovSequence seq(nesterov_base_gamma(m, K, tau, lipschitz, d_tilde, eta_override));
  while (seq.k() < k) seq.advance();
  return seq.current();
}

double default_rho(Algorithm algorithm, double lambda, double tau) {
  double floor = lambda + tau;
  if (algorithm == Algorithm::Semod) floor = 2.0 * (tau + lambda);
  if (algorithm == Algorithm::SemodMB) floor = 3.0 * (tau + lambda);
  return floor > 0.0 ? 1.5 * floor : 1.0;
}

void SolverConfig::validate() const {
  if (K < 1) throw std::invalid_argument("config: K must be >= 1");
  if (m < 1) throw std::invalid_argument("config: m must be >= 1");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("config: beta must lie in [0,1)");
  if (algorithm == Algorithm::SmodMB && beta != 0.0) {
    throw std::invalid_argument("config: smod_mb takes no momentum");
  }
  if (algorithm == Algorithm::Semod && m != 1) {
    throw std::invalid_argument("config: semod is single-sample; use semod_mb for m > 1");
  }
  if (record_every < 1) throw std::invalid_argument("config: record_every must be >= 1");
  if (!(prox_tol > 0.0)) throw std::invalid_argument("config: prox_tol must be > 0");
  if (max_inner < 1) throw std::invalid_argument("config: max_inner must be >= 1");
  if (const auto* t = std::get_if<ObjectiveThreshold>(&stopping); t && !(t->factor > 1.0)) {
    throw std::invalid_argument("config: threshold factor must be > 1");
  }
}

BatchSampler::BatchSampler(std::uint64_t seed, Index n)
    : rng_(make_rng(seed, Stream::Batch)), pick_(0, n - 1) {
  if (n < 1) throw std::invalid_argument("BatchSampler: empty dataset");
}

void BatchSampler::draw(int m, IndexList& out) {
  out.resize(static_cast<std::size_t>(m));
  for (auto& i : out) i = pick_(rng_);
}

std::uint64_t batch_digest(std::span<const Index> batch) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Index i : batch) {
    auto v = static_cast<std::uint64_t>(i);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

IndexList all_indices(Index n) {
  IndexList out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

}  // namespace

Stepsize resolve_gamma(const ProblemInstance& instance, const SolverConfig& config,
                       const Vector& x0, double* rho_out) {
  const ModelConstants mc = model_constants(config.kind, instance);
  double rho = default_rho(config.algorithm, mc.lambda, mc.tau);
  Stepsize out;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SmodTheory>) {
          if (s.rho > 0.0) rho = s.rho;
          out = stepsize_theory_smod(config.K, config.m, rho, mc.tau, mc.lambda, s.alpha0);
        } else if constexpr (std::is_same_v<S, SemodTheory>) {
          if (s.rho > 0.0) rho = s.rho;
          out = stepsize_theory_semod(config.K, config.beta, mc.lambda, rho, s.gamma0, mc.tau);
        } else if constexpr (std::is_same_v<S, SemodMBTheory>) {
          if (s.rho > 0.0) rho = s.rho;
          out = stepsize_theory_semod_mb(config.K, config.m, config.beta, mc.lambda, mc.tau, rho,
                                         s.gamma0);
        } else if constexpr (std::is_same_v<S, ExperimentStep>) {
          out = {stepsize_experiment(s.alpha0, config.K, config.m), true};
        } else {
          const IndexList all = all_indices(instance.n());
          const double lip = model_lipschitz(config.kind, instance, all, x0);
          out = {nesterov_base_gamma(config.m, config.K, mc.tau, lip, s.d_tilde, s.eta), true};
        }
      },
      config.schedule);
  if (rho_out) *rho_out = rho;
  return out;
}

Vector initial_point(const ProblemInstance& instance, const SolverConfig& config) {
  if (config.x0) {
    if (config.x0->size() != instance.dim()) throw std::invalid_argument("x0: dimension mismatch");
    return *config.x0;
  }
  Rng rng = make_rng(config.seed, Stream::Init);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(instance.dim());
  for (Index j = 0; j < x.size(); ++j) x(j) = normal(rng);
  return x;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Shared bookkeeping of the outer loops: objective evaluation, the stopping
// rule, trace rows and stored iterates.
class Tracker {
 public:
  Tracker(const ProblemInstance& instance, const SolverConfig& config, RunRecord& record)
      : inst_(instance), cfg_(config), rec_(record) {
    if (const auto* t = std::get_if<ObjectiveThreshold>(&config.stopping)) {
      if (!instance.f_hat && !(t->floor > 0.0)) {
        throw std::invalid_argument("threshold stopping needs f_hat or a positive floor");
      }
      threshold_ = std::max(t->factor * instance.f_hat.value_or(0.0), t->floor);
      eval_every_ = instance.n() <= 1000
                        ? 1
                        : static_cast<int>((instance.n() + config.m - 1) / config.m);
    }
    if (config.stationarity_rho > 0.0) oracle_ = ObjectiveOracle::of(instance);
    for (int c : config.checkpoints) checkpoints_.push_back(c);
  }

  // True when the threshold rule fires at iterate index k.
  bool stop_here(int k, int step, const Vector& x) {
    if (!threshold_ || step % eval_every_ != 0) return false;
    cached_k_ = k;
    cached_f_ = loss_eval(inst_, x);
    return cached_f_ <= *threshold_;
  }

  bool should_record(int step) const { return step % cfg_.record_every == 0; }

  void record(int k, const Vector& x, const Vector& z, double gamma, std::span<const Index> batch,
              std::optional<double> lipschitz) {
    TraceRow row;
    row.k = k;
    row.objective = cached_k_ == k ? cached_f_ : loss_eval(inst_, x);
    row.dist_to_truth = inst_.truth ? distance_to_truth(inst_, x) : kNaN;
    row.gamma = gamma;
    row.batch_digest = batch.empty() ? 0 : batch_digest(batch);
    row.lipschitz = lipschitz.value_or(kNaN);
    if (lipschitz) {
      if (!first_lip_) first_lip_ = *lipschitz;
      if (*first_lip_ > 0.0 && *lipschitz > 10.0 * *first_lip_) rec_.lipschitz_growth_flag = true;
    }
    row.moreau_x = kNaN;
    row.moreau_z = kNaN;
    if (oracle_ && x.allFinite()) {
      row.moreau_x = moreau_grad_norm(*oracle_, x, cfg_.stationarity_rho);
      row.moreau_z = (z - x).norm() == 0.0 ? row.moreau_x
                                           : moreau_grad_norm(*oracle_, z, cfg_.stationarity_rho);
    }
    rec_.rows.push_back(row);
    if (cfg_.keep_iterates) {
      rec_.iterates.emplace_back(k, x);
      rec_.extrapolated.emplace_back(k, z);
    }
  }

  void checkpoint(int k, const Vector& x) {
    if (cfg_.keep_iterates) return;
    for (int c : checkpoints_) {
      if (c == k) {
        rec_.iterates.emplace_back(k, x);
        break;
      }
    }
  }

  double final_objective(int k, const Vector& x) const {
    return cached_k_ == k ? cached_f_ : loss_eval(inst_, x);
  }

 private:
  const ProblemInstance& inst_;
  const SolverConfig& cfg_;
  RunRecord& rec_;
  std::optional<double> threshold_;
  int eval_every_ = 1;
  std::optional<ObjectiveOracle> oracle_;
  std::vector<int> checkpoints_;
  std::optional<double> first_lip_;
  int cached_k_ = std::numeric_limits<int>::min();
  double cached_f_ = 0.0;
};

void draw_k_star(RunRecord& record, const SolverConfig& config) {
  Rng rng = make_rng(config.seed, Stream::Trial);
  std::uniform_int_distribution<int> pick(1, config.K);
  record.k_star = pick(rng);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Algorithms 1-3: x^{k+1} = prox(z = x^k, y = x^k + beta (x^k - x^{k-1})).
RunRecord run_momentum(const ProblemInstance& instance, const SolverConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  Vector x = initial_point(instance, config);
  const Stepsize step = resolve_gamma(instance, config, x, &rec.rho);
  rec.gamma = step.gamma;
  rec.preconditions_met = step.preconditions_met;
  draw_k_star(rec, config);

  Tracker tracker(instance, config, rec);
  BatchSampler sampler(config.seed, instance.n());
  const double beta = config.beta;
  const double z_weight = beta / (1.0 - beta);
  Vector x_prev = x;
  IndexList batch;
  ProxRequest req;
  req.kind = config.kind;
  req.instance = &instance;
  req.gamma = step.gamma;
  req.tol = config.prox_tol;
  req.max_inner = config.max_inner;

  rec.stop_iter = config.K + 1;
  rec.hit_cap = true;
  int k = 1;
  for (;; ++k) {
    const int steps = k - 1;
    if (tracker.stop_here(k, steps, x)) {
      rec.stop_iter = steps;
      rec.hit_cap = false;
      tracker.record(k, x, x + z_weight * (x - x_prev), kNaN, {}, std::nullopt);
      tracker.checkpoint(k, x);
      break;
    }
    const Vector z_aux = x + z_weight * (x - x_prev);
    if (k == config.K + 1) {
      tracker.record(k, x, z_aux, kNaN, {}, std::nullopt);
      tracker.checkpoint(k, x);
      break;
    }
    req.y = x + beta * (x - x_prev);
    sampler.draw(config.m, batch);
    if (tracker.should_record(steps)) {
      tracker.record(k, x, z_aux, step.gamma, batch,
                     model_lipschitz(config.kind, instance, batch, x));
    }
    tracker.checkpoint(k, x);
    req.batch = batch;
    req.z = x;
    ProxResult res = prox_step(req);
    if (!res.converged) rec.prox_failures = true;
    if (!res.x_plus.allFinite()) {
      rec.diverged = true;
      break;
    }
    x_prev = std::move(x);
    x = std::move(res.x_plus);
  }
  rec.final_objective = rec.diverged ? std::numeric_limits<double>::infinity()
                                     : tracker.final_objective(k, x);
  rec.x_final = std::move(x);
  rec.wall_time = seconds_since(start);
  return rec;
}

}  // namespace

RunRecord run_smod_minibatch(const ProblemInstance& instance, const SolverConfig& config) {
  if (config.algorithm != Algorithm::SmodMB) {
    throw std::invalid_argument("run_smod_minibatch: algorithm must be smod_mb");
  }
  return run_momentum(instance, config);
}

RunRecord run_semod(const ProblemInstance& instance, const SolverConfig& config) {
  if (config.algorithm != Algorithm::Semod && config.algorithm != Algorithm::SemodMB) {
    throw std::invalid_argument("run_semod: algorithm must be semod or semod_mb");
  }
  return run_momentum(instance, config);
}

// Accelerated loop. Rows are indexed by the iterate x^k starting at k = 0; the
// stored "extrapolated" sequence is the prox sequence z^k.
RunRecord run_asmod_nesterov(const ProblemInstance& instance, const SolverConfig& config) {
  if (config.algorithm != Algorithm::Nesterov) {
    throw std::invalid_argument("run_asmod_nesterov: algorithm must be nesterov");
  }
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  Vector x = initial_point(instance, config);
  Vector z = x;
  const Stepsize step = resolve_gamma(instance, config, x, &rec.rho);
  rec.gamma = step.gamma;
  rec.preconditions_met = step.preconditions_met;
  draw_k_star(rec, config);

  Tracker tracker(instance, config, rec);
  BatchSampler sampler(config.seed, instance.n());
  NesterovSequence seq(step.gamma);
  IndexList batch;
  ProxRequest req;
  req.kind = config.kind;
  req.instance = &instance;
  req.tol = config.prox_tol;
  req.max_inner = config.max_inner;

  rec.stop_iter = config.K + 1;
  rec.hit_cap = true;
  int k = 0;
  for (;; ++k) {
    if (tracker.stop_here(k, k, x)) {
      rec.stop_iter = k;
      rec.hit_cap = false;
      tracker.record(k, x, z, kNaN, {}, std::nullopt);
      tracker.checkpoint(k, x);
      break;
    }
    if (k == config.K + 1) {
      tracker.record(k, x, z, kNaN, {}, std::nullopt);
      tracker.checkpoint(k, x);
      break;
    }
    const NesterovParams p = seq.current();
    const Vector y = (1.0 - p.theta) * x + p.theta * z;
    sampler.draw(config.m, batch);
    if (tracker.should_record(k)) {
      tracker.record(k, x, z, p.gamma_k, batch, model_lipschitz(config.kind, instance, batch, y));
    }
    tracker.checkpoint(k, x);
    req.batch = batch;
    req.z = y;
    req.y = z;
    req.gamma = p.gamma_k;
    ProxResult res = prox_step(req);
    if (!res.converged) rec.prox_failures = true;
    if (!res.x_plus.allFinite()) {
      rec.diverged = true;
      break;
    }
    z = std::move(res.x_plus);
    x = (1.0 - p.theta) * x + p.theta * z;
    seq.advance();
  }
  rec.final_objective = rec.diverged ? std::numeric_limits<double>::infinity()
                                     : tracker.final_objective(k, x);
  rec.x_final = std::move(x);
  rec.wall_time = seconds_since(start);
  return rec;
}

RunRecord run(const ProblemInstance& instance, const SolverConfig& config) {
  switch (config.algorithm) {
    case Algorithm::SmodMB:
      return run_smod_minibatch(instance, config);
    case Algorithm::Semod:
    case Algorithm::SemodMB:
      return run_semod(instance, config);
    case Algorithm::Nesterov:
      return run_asmod_nesterov(instance, config);
  }
  throw std::logic_error("run: unreachable");
}

}  // namespace smod
