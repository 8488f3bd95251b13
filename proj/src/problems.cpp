#include "smod/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "smod/rng.hpp"

namespace smod {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::PhaseRetrieval:
      return "phase_retrieval";
    case ProblemKind::BlindDeconvolution:
      return "blind_deconvolution";
    case ProblemKind::AbsoluteLinear:
      return "absolute_linear";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(const std::string& name) {
  if (name == "phase_retrieval") return ProblemKind::PhaseRetrieval;
  if (name == "blind_deconvolution") return ProblemKind::BlindDeconvolution;
  if (name == "absolute_linear") return ProblemKind::AbsoluteLinear;
  throw std::invalid_argument("unknown problem kind: " + name);
}

void GenSpec::validate() const {
  if (n < 1 || d < 1) throw std::invalid_argument("GenSpec: n and d must be >= 1");
  if (!(kappa >= 1.0)) throw std::invalid_argument("GenSpec: kappa must be >= 1");
  if (!(p_fail >= 0.0 && p_fail <= 1.0)) {
    throw std::invalid_argument("GenSpec: p_fail must lie in [0, 1]");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("GenSpec: noise_std must be >= 0");
}

ProblemInstance make_instance(ProblemKind kind, const std::vector<Sample>& samples,
                              std::optional<Vector> truth) {
  if (samples.empty()) throw std::invalid_argument("make_instance: need at least one sample");
  const Index d = samples.front().u.size();
  if (d < 1) throw std::invalid_argument("make_instance: empty measurement vector");
  const bool bilinear = kind == ProblemKind::BlindDeconvolution;
  ProblemInstance inst;
  inst.kind = kind;
  const Index n = static_cast<Index>(samples.size());
  inst.u.resize(n, d);
  if (bilinear) inst.v.resize(n, d);
  inst.b.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    if (s.u.size() != d || (bilinear && s.v.size() != d)) {
      throw std::invalid_argument("make_instance: inconsistent sample dimensions");
    }
    inst.u.row(i) = s.u.transpose();
    if (bilinear) inst.v.row(i) = s.v.transpose();
    inst.b(i) = s.b;
  }
  if (truth) attach_truth(inst, *truth);
  return inst;
}

void attach_truth(ProblemInstance& instance, const Vector& truth) {
  if (truth.size() != instance.dim()) {
    throw std::invalid_argument("attach_truth: truth dimension mismatch");
  }
  instance.truth = truth;
  instance.f_hat = loss_eval(instance, truth);
}

Vector condition_diagonal(Index d, double kappa) {
  Vector diag(d);
  if (d == 1) {
    diag(0) = 1.0;
    return diag;
  }
  const double lo = 1.0 / kappa;
  for (Index j = 0; j < d; ++j) {
    diag(j) = lo + (1.0 - lo) * static_cast<double>(j) / static_cast<double>(d - 1);
  }
  return diag;
}

namespace {

Vector unit_sphere_point(Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(d);
  for (Index j = 0; j < d; ++j) x(j) = normal(rng);
  return x / x.norm();
}

RowMatrix scaled_gaussian(Index n, Index d, const Vector& diag, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = normal(rng) * diag(j);
  }
  return m;
}

// delta_i * zeta_i with delta ~ Bernoulli(p_fail), zeta ~ N(0, noise_std^2).
Vector corruption(Index n, const GenSpec& spec, Rng& rng) {
  std::bernoulli_distribution fail(spec.p_fail);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const bool hit = fail(rng);
    const double zeta = noise(rng);
    out(i) = hit ? zeta : 0.0;
  }
  return out;
}

}  // namespace

ProblemInstance gen_synthetic_phase_retrieval(const GenSpec& spec) {
  spec.validate();
  Rng data = make_rng(spec.seed, Stream::Data);
  Rng corrupt = make_rng(spec.seed, Stream::Corruption);

  ProblemInstance inst;
  inst.kind = ProblemKind::PhaseRetrieval;
  inst.seed = spec.seed;
  const Vector truth = unit_sphere_point(spec.d, data);
  inst.u = scaled_gaussian(spec.n, spec.d, condition_diagonal(spec.d, spec.kappa), data);
  inst.b = (inst.u * truth).array().square().matrix() + corruption(spec.n, spec, corrupt);
  attach_truth(inst, truth);
  return inst;
}

ProblemInstance gen_synthetic_blind_deconv(const GenSpec& spec) {
  spec.validate();
  Rng data = make_rng(spec.seed, Stream::Data);
  Rng corrupt = make_rng(spec.seed, Stream::Corruption);

  ProblemInstance inst;
  inst.kind = ProblemKind::BlindDeconvolution;
  inst.seed = spec.seed;
  const Vector signal = unit_sphere_point(spec.d, data);
  const Vector diag = condition_diagonal(spec.d, spec.kappa);
  inst.u = scaled_gaussian(spec.n, spec.d, diag, data);
  inst.v = scaled_gaussian(spec.n, spec.d, diag, data);
  inst.b = ((inst.u * signal).array() * (inst.v * signal).array()).matrix() +
           corruption(spec.n, spec, corrupt);
  Vector truth(2 * spec.d);
  truth << signal, signal;
  attach_truth(inst, truth);
  return inst;
}

ProblemInstance gen_absolute_linear(const GenSpec& spec) {
  spec.validate();
  Rng data = make_rng(spec.seed, Stream::Data);
  Rng corrupt = make_rng(spec.seed, Stream::Corruption);

  ProblemInstance inst;
  inst.kind = ProblemKind::AbsoluteLinear;
  inst.seed = spec.seed;
  const Vector truth = unit_sphere_point(spec.d, data);
  inst.u = scaled_gaussian(spec.n, spec.d, condition_diagonal(spec.d, spec.kappa), data);
  inst.b = inst.u * truth + corruption(spec.n, spec, corrupt);
  attach_truth(inst, truth);
  return inst;
}

RowMatrix hadamard(Index dim) {
  if (dim < 1 || (dim & (dim - 1)) != 0) {
    throw std::invalid_argument("hadamard: dimension must be a power of two");
  }
  RowMatrix h = RowMatrix::Ones(1, 1);
  while (h.rows() < dim) {
    const Index k = h.rows();
    RowMatrix next(2 * k, 2 * k);
    next << h, h, h, -h;
    h = std::move(next);
  }
  return h / std::sqrt(static_cast<double>(dim));
}

RowMatrix gen_hadamard_measurements(int blocks, std::uint64_t seed, Index block_dim) {
  if (blocks < 1) throw std::invalid_argument("gen_hadamard_measurements: blocks must be >= 1");
  const RowMatrix h = hadamard(block_dim);
  Rng rng = make_rng(seed, Stream::Data);
  std::bernoulli_distribution coin(0.5);
  RowMatrix a(blocks * block_dim, block_dim);
  for (int k = 0; k < blocks; ++k) {
    Vector signs(block_dim);
    for (Index j = 0; j < block_dim; ++j) signs(j) = coin(rng) ? 1.0 : -1.0;
    a.middleRows(k * block_dim, block_dim) = h * signs.asDiagonal();
  }
  return a;
}

ProblemInstance gen_zipcode_instance(const Eigen::MatrixXd& image, double p_fail,
                                     std::uint64_t seed, int blocks) {
  const Index pixels = image.size();
  if (image.rows() != image.cols() || pixels < 1 || (pixels & (pixels - 1)) != 0) {
    throw std::invalid_argument(
        "gen_zipcode_instance: image must be square with a power-of-two pixel count (16x16)");
  }
  if (!(p_fail >= 0.0 && p_fail <= 1.0)) {
    throw std::invalid_argument("gen_zipcode_instance: p_fail must lie in [0, 1]");
  }
  ProblemInstance inst;
  inst.kind = ProblemKind::PhaseRetrieval;
  inst.seed = seed;
  inst.u = gen_hadamard_measurements(blocks, seed, pixels);
  const Vector truth = Eigen::Map<const Vector>(image.data(), pixels);
  inst.b = (inst.u * truth).array().square().matrix();
  Rng corrupt = make_rng(seed, Stream::Corruption);
  std::bernoulli_distribution zero(p_fail);
  for (Index i = 0; i < inst.b.size(); ++i) {
    if (zero(corrupt)) inst.b(i) = 0.0;
  }
  attach_truth(inst, truth);
  return inst;
}

namespace {

void check_index(const ProblemInstance& instance, Index i) {
  if (i < 0 || i >= instance.n()) throw std::out_of_range("sample index out of range");
}

void check_dim(const ProblemInstance& instance, const Vector& x) {
  if (x.size() != instance.dim()) throw std::invalid_argument("decision dimension mismatch");
}

}  // namespace

double residual(const ProblemInstance& instance, Index i, const Vector& x) {
  const Index d = instance.signal_dim();
  switch (instance.kind) {
    case ProblemKind::PhaseRetrieval: {
      const double ax = instance.u.row(i).dot(x);
      return ax * ax - instance.b(i);
    }
    case ProblemKind::BlindDeconvolution:
      return instance.u.row(i).dot(x.head(d)) * instance.v.row(i).dot(x.tail(d)) -
             instance.b(i);
    case ProblemKind::AbsoluteLinear:
      return instance.u.row(i).dot(x) - instance.b(i);
  }
  return 0.0;
}

double residual_and_gradient(const ProblemInstance& instance, Index i, const Vector& x,
                             Eigen::Ref<Vector> grad) {
  const Index d = instance.signal_dim();
  switch (instance.kind) {
    case ProblemKind::PhaseRetrieval: {
      const double ax = instance.u.row(i).dot(x);
      grad = (2.0 * ax) * instance.u.row(i).transpose();
      return ax * ax - instance.b(i);
    }
    case ProblemKind::BlindDeconvolution: {
      const double ux = instance.u.row(i).dot(x.head(d));
      const double vy = instance.v.row(i).dot(x.tail(d));
      grad.head(d) = vy * instance.u.row(i).transpose();
      grad.tail(d) = ux * instance.v.row(i).transpose();
      return ux * vy - instance.b(i);
    }
    case ProblemKind::AbsoluteLinear:
      grad = instance.u.row(i).transpose();
      return instance.u.row(i).dot(x) - instance.b(i);
  }
  return 0.0;
}

double sample_loss(const ProblemInstance& instance, Index i, const Vector& x) {
  check_index(instance, i);
  check_dim(instance, x);
  return std::abs(residual(instance, i, x));
}

double loss_eval(const ProblemInstance& instance, const Vector& x) {
  check_dim(instance, x);
  const Index d = instance.signal_dim();
  switch (instance.kind) {
    case ProblemKind::PhaseRetrieval:
      return ((instance.u * x).array().square() - instance.b.array()).abs().mean();
    case ProblemKind::BlindDeconvolution:
      return ((instance.u * x.head(d)).array() * (instance.v * x.tail(d)).array() -
              instance.b.array())
          .abs()
          .mean();
    case ProblemKind::AbsoluteLinear:
      return ((instance.u * x).array() - instance.b.array()).abs().mean();
  }
  return 0.0;
}

double batch_loss(const ProblemInstance& instance, std::span<const Index> batch,
                  const Vector& x) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double sum = 0.0;
  for (Index i : batch) sum += sample_loss(instance, i, x);
  return sum / static_cast<double>(batch.size());
}

Vector sample_subgradient(const ProblemInstance& instance, Index i, const Vector& x) {
  check_index(instance, i);
  check_dim(instance, x);
  Vector g(instance.dim());
  const double c = residual_and_gradient(instance, i, x, g);
  const double s = (c > 0.0) - (c < 0.0);
  return s * g;
}

double distance_to_truth(const ProblemInstance& instance, const Vector& x) {
  if (!instance.truth) return std::numeric_limits<double>::quiet_NaN();
  const Vector& t = *instance.truth;
  const double direct = (x - t).norm();
  if (instance.kind == ProblemKind::AbsoluteLinear) return direct;
  return std::min(direct, (x + t).norm());
}

void write_instance(std::ostream& os, const ProblemInstance& instance) {
  const auto old_precision = os.precision(17);
  os << "smod-instance 1\n";
  os << "kind " << to_string(instance.kind) << '\n';
  os << "n " << instance.n() << '\n';
  os << "d " << instance.signal_dim() << '\n';
  os << "seed " << instance.seed << '\n';
  if (instance.truth) {
    os << "truth";
    for (Index j = 0; j < instance.truth->size(); ++j) os << ' ' << (*instance.truth)(j);
    os << '\n';
  }
  if (instance.f_hat) os << "f_hat " << *instance.f_hat << '\n';
  os << "samples\n";
  const bool bilinear = instance.kind == ProblemKind::BlindDeconvolution;
  for (Index i = 0; i < instance.n(); ++i) {
    os << instance.b(i);
    for (Index j = 0; j < instance.signal_dim(); ++j) os << ' ' << instance.u(i, j);
    if (bilinear) {
      for (Index j = 0; j < instance.signal_dim(); ++j) os << ' ' << instance.v(i, j);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

ProblemInstance read_instance(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "smod-instance" || version != 1) {
    throw std::runtime_error("read_instance: missing 'smod-instance 1' header");
  }
  ProblemInstance inst;
  Index n = -1, d = -1;
  std::vector<double> truth_values;
  std::optional<double> f_hat;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "samples") break;
    if (key == "kind") {
      std::string name;
      ls >> name;
      inst.kind = problem_kind_from_string(name);
    } else if (key == "n") {
      ls >> n;
    } else if (key == "d") {
      ls >> d;
    } else if (key == "seed") {
      ls >> inst.seed;
    } else if (key == "truth") {
      double value;
      while (ls >> value) truth_values.push_back(value);
    } else if (key == "f_hat") {
      double value;
      ls >> value;
      f_hat = value;
    } else {
      throw std::runtime_error("read_instance: unknown header key '" + key + "'");
    }
  }
  if (n < 1 || d < 1) throw std::runtime_error("read_instance: header lacks n or d");
  const bool bilinear = inst.kind == ProblemKind::BlindDeconvolution;
  inst.u.resize(n, d);
  if (bilinear) inst.v.resize(n, d);
  inst.b.resize(n);
  for (Index i = 0; i < n; ++i) {
    if (!(is >> inst.b(i))) throw std::runtime_error("read_instance: truncated sample rows");
    for (Index j = 0; j < d; ++j) {
      if (!(is >> inst.u(i, j))) throw std::runtime_error("read_instance: truncated sample rows");
    }
    if (bilinear) {
      for (Index j = 0; j < d; ++j) {
        if (!(is >> inst.v(i, j))) {
          throw std::runtime_error("read_instance: truncated sample rows");
        }
      }
    }
  }
  if (!truth_values.empty()) {
    if (static_cast<Index>(truth_values.size()) != inst.dim()) {
      throw std::runtime_error("read_instance: truth has wrong dimension");
    }
    inst.truth = Eigen::Map<Vector>(truth_values.data(), inst.dim());
  }
  inst.f_hat = f_hat;
  return inst;
}

void save_instance(const std::string& path, const ProblemInstance& instance) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_instance(os, instance);
}

ProblemInstance load_instance(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_instance(is);
}

Eigen::MatrixXd read_image(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double value;
    while (ls >> value) row.push_back(value);
    if (!ls.eof()) throw std::runtime_error("read_image: non-numeric entry");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_image: empty image");
  const std::size_t cols = rows.front().size();
  Eigen::MatrixXd image(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw std::runtime_error("read_image: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      image(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return image;
}

Eigen::MatrixXd load_image(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_image(is);
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& matrix) {
  const auto old_precision = os.precision(17);
  for (Index r = 0; r < matrix.rows(); ++r) {
    for (Index c = 0; c < matrix.cols(); ++c) {
      if (c) os << ' ';
      os << matrix(r, c);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace smod
