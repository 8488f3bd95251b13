#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smod/types.hpp"

namespace smod {

// Every loss handled here is f(x, xi) = |c(x, xi)| for a scalar residual map c:
//   PhaseRetrieval      c(x)    = <a, x>^2 - b
//   BlindDeconvolution  c(x; y) = <u, x><v, y> - b    (decision variable (x; y))
//   AbsoluteLinear      c(x)    = <a, x> - b          (convex least absolute deviation)
enum class ProblemKind { PhaseRetrieval, BlindDeconvolution, AbsoluteLinear };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& name);

// One measurement. For phase retrieval and absolute-linear instances only `u`
// (the measurement vector a) is used.
struct Sample {
  Vector u;
  Vector v;
  double b = 0.0;
};

struct ProblemInstance {
  ProblemKind kind = ProblemKind::PhaseRetrieval;
  RowMatrix u;  // rows a_i (or u_i)
  RowMatrix v;  // rows v_i, blind deconvolution only
  Vector b;
  std::optional<Vector> truth;  // in decision space: (x*; x*) for blind deconvolution
  std::optional<double> f_hat;
  std::uint64_t seed = 0;

  Index n() const { return b.size(); }
  Index signal_dim() const { return u.cols(); }
  Index dim() const {
    return kind == ProblemKind::BlindDeconvolution ? 2 * u.cols() : u.cols();
  }
};

struct GenSpec {
  Index n = 300;
  Index d = 100;
  double kappa = 10.0;
  double p_fail = 0.2;
  double noise_std = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Builds an instance from explicit samples; throws on inconsistent dimensions.
ProblemInstance make_instance(ProblemKind kind, const std::vector<Sample>& samples,
                              std::optional<Vector> truth = std::nullopt);

// Stores truth and f_hat = loss_eval(truth).
void attach_truth(ProblemInstance& instance, const Vector& truth);

ProblemInstance gen_synthetic_phase_retrieval(const GenSpec& spec);
ProblemInstance gen_synthetic_blind_deconv(const GenSpec& spec);
ProblemInstance gen_absolute_linear(const GenSpec& spec);

// Diagonal of D: arithmetic progression from 1/kappa up to 1.
Vector condition_diagonal(Index d, double kappa);

// Sylvester construction, normalized so H = H^T = H^{-1}; dim must be a power of two.
RowMatrix hadamard(Index dim);

// A = [H S_1; ...; H S_k] with S_j diagonal random signs.
RowMatrix gen_hadamard_measurements(int blocks, std::uint64_t seed, Index block_dim = 256);

// Phase retrieval from a square image whose pixel count is a power of two
// (16 x 16 for zipcode digits). Pixels are vectorized column-major and used
// unscaled; b = (Ax*)^2 with an independent Bernoulli(p_fail) zeroing per entry.
ProblemInstance gen_zipcode_instance(const Eigen::MatrixXd& image, double p_fail,
                                     std::uint64_t seed, int blocks = 3);

// c(x, xi_i).
double residual(const ProblemInstance& instance, Index i, const Vector& x);
// c(x, xi_i) and its gradient, written into `grad` (resized as needed).
double residual_and_gradient(const ProblemInstance& instance, Index i, const Vector& x,
                             Eigen::Ref<Vector> grad);

double sample_loss(const ProblemInstance& instance, Index i, const Vector& x);
double loss_eval(const ProblemInstance& instance, const Vector& x);
double batch_loss(const ProblemInstance& instance, std::span<const Index> batch,
                  const Vector& x);

// sign(c) * grad c, with sign(0) = 0.
Vector sample_subgradient(const ProblemInstance& instance, Index i, const Vector& x);

// Distance to the stored truth, modulo the global sign ambiguity of phase retrieval.
double distance_to_truth(const ProblemInstance& instance, const Vector& x);

// Text format, one sample per row:
//   smod-instance 1
//   kind <phase_retrieval|blind_deconvolution|absolute_linear>
//   n <n>
//   d <signal dim>
//   seed <seed>
//   truth <dim values>      (optional)
//   f_hat <value>           (optional)
//   samples
//   b u_1 .. u_d [v_1 .. v_d]
void write_instance(std::ostream& os, const ProblemInstance& instance);
ProblemInstance read_instance(std::istream& is);
void save_instance(const std::string& path, const ProblemInstance& instance);
ProblemInstance load_instance(const std::string& path);

// Whitespace-separated reals, one image row per line.
Eigen::MatrixXd read_image(std::istream& is);
Eigen::MatrixXd load_image(const std::string& path);
void write_matrix(std::ostream& os, const Eigen::MatrixXd& matrix);

}  // namespace smod
