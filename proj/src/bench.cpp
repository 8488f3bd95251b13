#include "smod/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "smod/rng.hpp"
#include "smod/stationarity.hpp"

namespace smod {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: " + v);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not an integer: " + v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') throw std::invalid_argument("bad");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a seed: " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': not a boolean: " + v);
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F convert) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) {
    if (item.empty()) throw std::invalid_argument("config key '" + key + "': empty list item");
    out.push_back(convert(key, item));
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  return parse_key_values(in);
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "dataset") c.dataset = v;
    else if (key == "n") c.gen.n = to_int(key, v);
    else if (key == "d") c.gen.d = to_int(key, v);
    else if (key == "kappa") c.gen.kappa = to_double(key, v);
    else if (key == "p_fail") c.gen.p_fail = to_double(key, v);
    else if (key == "noise_std") c.gen.noise_std = to_double(key, v);
    else if (key == "data_seed") c.gen.seed = to_u64(key, v);
    else if (key == "image") c.image_path = v;
    else if (key == "blocks") c.blocks = static_cast<int>(to_int(key, v));
    else if (key == "instance") c.instance_path = v;
    else if (key == "algorithms")
      c.algorithms = to_list<Algorithm>(key, v, [](const std::string&, const std::string& s) {
        return algorithm_from_string(s);
      });
    else if (key == "kinds")
      c.kinds = to_list<ModelKind>(key, v, [](const std::string&, const std::string& s) {
        return model_kind_from_string(s);
      });
    else if (key == "alpha0") c.alpha0 = to_list<double>(key, v, to_double);
    else if (key == "alpha0_min") c.alpha0_min = to_double(key, v);
    else if (key == "alpha0_max") c.alpha0_max = to_double(key, v);
    else if (key == "alpha0_count") c.alpha0_count = static_cast<int>(to_int(key, v));
    else if (key == "m")
      c.m = to_list<int>(key, v, [](const std::string& k, const std::string& s) {
        return static_cast<int>(to_int(k, s));
      });
    else if (key == "beta") c.beta = to_list<double>(key, v, to_double);
    else if (key == "epochs") c.epochs = static_cast<int>(to_int(key, v));
    else if (key == "seeds") c.seeds = static_cast<int>(to_int(key, v));
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "threshold") c.threshold = to_double(key, v);
    else if (key == "threshold_floor") c.threshold_floor = to_double(key, v);
    else if (key == "out") c.out = v;
    else if (key == "threads") c.threads = static_cast<int>(to_int(key, v));
    else if (key == "fresh_data_per_run") c.fresh_data_per_run = to_bool(key, v);
    else if (key == "traces") c.traces = to_bool(key, v);
    else if (key == "record_every") c.record_every = static_cast<int>(to_int(key, v));
    else throw std::invalid_argument("unknown config key: " + key);
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> datasets{"synthetic_pr", "synthetic_bd", "zipcode",
                                              "absolute_linear", "instance"};
  if (!datasets.count(dataset)) throw std::invalid_argument("unknown dataset: " + dataset);
  if (dataset == "zipcode" && image_path.empty()) throw std::invalid_argument("zipcode needs image");
  if (dataset == "instance" && instance_path.empty()) {
    throw std::invalid_argument("dataset = instance needs an instance path");
  }
  if (dataset != "zipcode" && dataset != "instance") gen.validate();
  if (algorithms.empty() || kinds.empty() || m.empty()) {
    throw std::invalid_argument("config: algorithm, kind and m grids must be nonempty");
  }
  for (double a : alpha0) {
    if (!(a > 0.0)) throw std::invalid_argument("config: alpha0 values must be > 0");
  }
  if (alpha0.empty() && alpha0_count < 1) throw std::invalid_argument("config: alpha0_count >= 1");
  if ((alpha0_min != 0.0 || alpha0_max != 0.0) && !(alpha0_min > 0.0 && alpha0_max >= alpha0_min)) {
    throw std::invalid_argument("config: need 0 < alpha0_min <= alpha0_max");
  }
  for (int b : m) {
    if (b < 1) throw std::invalid_argument("config: m values must be >= 1");
  }
  for (double b : beta) {
    if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("config: beta values in [0,1)");
  }
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 1");
  if (seeds < 1) throw std::invalid_argument("config: seeds must be >= 1");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (record_every < 0) throw std::invalid_argument("config: record_every must be >= 0");
  if (threshold > 0.0 && !(threshold > 1.0)) {
    throw std::invalid_argument("config: threshold factor must be > 1 (or <= 0 to disable)");
  }
}

bool ExperimentConfig::momentum() const {
  return std::any_of(algorithms.begin(), algorithms.end(), [](Algorithm a) {
    return a == Algorithm::Semod || a == Algorithm::SemodMB;
  });
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw std::invalid_argument("log_grid: bad range");
  std::vector<double> out;
  if (count == 1) return {lo};
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  return out;
}

std::vector<double> ExperimentConfig::alpha0_grid() const {
  if (!alpha0.empty()) return alpha0;
  if (alpha0_min > 0.0) return log_grid(alpha0_min, alpha0_max, alpha0_count);
  const bool zip = dataset == "zipcode";
  if (momentum()) return zip ? log_grid(1.0, 10.0, alpha0_count) : log_grid(0.01, 1.0, alpha0_count);
  return zip ? log_grid(10.0, 1000.0, alpha0_count) : log_grid(0.1, 100.0, alpha0_count);
}

std::vector<double> ExperimentConfig::beta_grid(Algorithm algorithm) const {
  if (algorithm != Algorithm::Semod && algorithm != Algorithm::SemodMB) return {0.0};
  if (!beta.empty()) return beta;
  return {dataset == "zipcode" ? 0.9 : 0.6};
}

int ExperimentConfig::epoch_cap() const {
  if (epochs > 0) return epochs;
  return momentum() ? 400 : 200;
}

ProblemInstance build_instance(const ExperimentConfig& config, std::uint64_t data_seed) {
  GenSpec spec = config.gen;
  spec.seed = data_seed;
  if (config.dataset == "synthetic_pr") return gen_synthetic_phase_retrieval(spec);
  if (config.dataset == "synthetic_bd") return gen_synthetic_blind_deconv(spec);
  if (config.dataset == "absolute_linear") return gen_absolute_linear(spec);
  if (config.dataset == "zipcode") {
    return gen_zipcode_instance(load_image(config.image_path), config.gen.p_fail, data_seed,
                                config.blocks);
  }
  if (config.dataset == "instance") return load_instance(config.instance_path);
  throw std::invalid_argument("unknown dataset: " + config.dataset);
}

std::string RunCell::key() const {
  return to_string(algorithm) + "|" + to_string(kind) + "|" + fmt(alpha0) + "|" +
         std::to_string(m) + "|" + fmt(beta) + "|" + std::to_string(rep);
}

std::vector<RunCell> expand_grid(const ExperimentConfig& config) {
  std::vector<RunCell> cells;
  const auto alphas = config.alpha0_grid();
  for (Algorithm alg : config.algorithms)
    for (ModelKind kind : config.kinds)
      for (double a : alphas)
        for (int m : config.m)
          for (double b : config.beta_grid(alg))
            for (int rep = 0; rep < config.seeds; ++rep) cells.push_back({alg, kind, a, m, b, rep});
  return cells;
}

std::uint64_t run_seed(const ExperimentConfig& config, int rep) {
  return derive_seed(config.seed, Stream::Trial, static_cast<std::uint64_t>(rep));
}

SolverConfig solver_config(const ExperimentConfig& config, const ProblemInstance& instance,
                           const RunCell& cell) {
  SolverConfig sc;
  sc.algorithm = cell.algorithm;
  sc.kind = cell.kind;
  sc.m = cell.m;
  sc.beta = cell.beta;
  const int per_epoch = static_cast<int>((instance.n() + cell.m - 1) / cell.m);
  sc.K = config.epoch_cap() * per_epoch;
  // The Nesterov schedule is tuned through D~, which takes the alpha0 slot.
  if (cell.algorithm == Algorithm::Nesterov) {
    sc.schedule = NesterovTheory{cell.alpha0, std::nullopt};
  } else {
    sc.schedule = ExperimentStep{cell.alpha0};
  }
  sc.seed = run_seed(config, cell.rep);
  if (config.threshold > 0.0 && (instance.f_hat || config.threshold_floor > 0.0)) {
    sc.stopping = ObjectiveThreshold{config.threshold, config.threshold_floor};
  }
  sc.record_every = config.record_every > 0 ? config.record_every : per_epoch;
  if (config.dataset == "zipcode" && instance.truth) {
    Rng rng = make_rng(sc.seed, Stream::Init);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x0 = *instance.truth;
    for (Index j = 0; j < x0.size(); ++j) x0(j) += normal(rng);
    sc.x0 = std::move(x0);
  }
  return sc;
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols{
      "dataset", "n",         "d",         "kappa",          "p_fail",   "noise_std",
      "data_seed", "algorithm", "kind",    "alpha0",         "m",        "beta",
      "rep",     "seed",      "epochs",    "K",              "threshold", "gamma",
      "stop_iter", "iterations", "hit_cap", "diverged",      "prox_failures",
      "final_objective", "f_hat", "status", "wall_time"};
  return cols;
}

namespace {

std::string sanitize(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

std::string row_key(const ResultRow& row) {
  auto get = [&](const char* k) {
    auto it = row.find(k);
    return it == row.end() ? std::string() : it->second;
  };
  return get("algorithm") + "|" + get("kind") + "|" + get("alpha0") + "|" + get("m") + "|" +
         get("beta") + "|" + get("rep");
}

void write_trace(const std::string& path, const RunRecord& rec) {
  std::ofstream os(path);
  os << "k,objective,dist_to_truth,gamma,lipschitz,batch_digest\n";
  for (const auto& r : rec.rows) {
    os << r.k << ',' << fmt(r.objective) << ',' << fmt(r.dist_to_truth) << ',' << fmt(r.gamma)
       << ',' << fmt(r.lipschitz) << ',' << r.batch_digest << '\n';
  }
}

std::string run_cell(const ExperimentConfig& config, const ProblemInstance* shared,
                     const RunCell& cell) {
  std::map<std::string, std::string> row;
  const std::uint64_t data_seed =
      config.fresh_data_per_run
          ? derive_seed(config.gen.seed, Stream::Data, static_cast<std::uint64_t>(cell.rep))
          : config.gen.seed;
  row["dataset"] = config.dataset;
  row["data_seed"] = std::to_string(data_seed);
  row["algorithm"] = to_string(cell.algorithm);
  row["kind"] = to_string(cell.kind);
  row["alpha0"] = fmt(cell.alpha0);
  row["m"] = std::to_string(cell.m);
  row["beta"] = fmt(cell.beta);
  row["rep"] = std::to_string(cell.rep);
  row["seed"] = std::to_string(run_seed(config, cell.rep));
  row["epochs"] = std::to_string(config.epoch_cap());
  row["threshold"] = fmt(config.threshold);
  row["kappa"] = fmt(config.gen.kappa);
  row["p_fail"] = fmt(config.gen.p_fail);
  row["noise_std"] = fmt(config.gen.noise_std);
  try {
    std::optional<ProblemInstance> own;
    if (!shared) own = build_instance(config, data_seed);
    const ProblemInstance& inst = shared ? *shared : *own;
    row["n"] = std::to_string(inst.n());
    row["d"] = std::to_string(inst.signal_dim());
    row["f_hat"] = inst.f_hat ? fmt(*inst.f_hat) : "nan";
    const SolverConfig sc = solver_config(config, inst, cell);
    row["K"] = std::to_string(sc.K);
    const RunRecord rec = run(inst, sc);
    row["gamma"] = fmt(rec.gamma);
    row["stop_iter"] = std::to_string(rec.stop_iter);
    row["iterations"] = std::to_string(rec.hit_cap ? sc.K : rec.stop_iter);
    row["hit_cap"] = rec.hit_cap ? "1" : "0";
    row["diverged"] = rec.diverged ? "1" : "0";
    row["prox_failures"] = rec.prox_failures ? "1" : "0";
    row["final_objective"] = fmt(rec.final_objective);
    row["status"] = rec.diverged ? "diverged" : (rec.hit_cap ? "max" : "ok");
    row["wall_time"] = fmt(rec.wall_time);
    if (config.traces) {
      fs::create_directories(fs::path(config.out) / "traces");
      std::string name = cell.key();
      std::replace(name.begin(), name.end(), '|', '_');
      write_trace((fs::path(config.out) / "traces" / (name + ".csv")).string(), rec);
    }
  } catch (const std::exception& e) {
    row["status"] = "error: " + sanitize(e.what());
  }
  std::string line;
  for (const auto& col : result_columns()) {
    if (!line.empty()) line += ',';
    auto it = row.find(col);
    line += it == row.end() ? "" : it->second;
  }
  return line + "\n";
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  ExperimentSummary summary;
  summary.results_path = (fs::path(config.out) / "results.csv").string();

  std::set<std::string> done;
  const bool exists = fs::exists(summary.results_path) && fs::file_size(summary.results_path) > 0;
  if (exists) {
    for (const auto& row : read_results(summary.results_path)) done.insert(row_key(row));
  }

  const auto cells = expand_grid(config);
  summary.cells = static_cast<int>(cells.size());
  std::vector<RunCell> todo;
  for (const auto& cell : cells) {
    if (done.count(cell.key())) {
      ++summary.skipped;
    } else {
      todo.push_back(cell);
    }
  }

  std::ofstream out(summary.results_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + summary.results_path);
  if (!exists) {
    std::string header;
    for (const auto& col : result_columns()) header += (header.empty() ? "" : ",") + col;
    out << header << '\n';
    out.flush();
  }
  if (todo.empty()) return summary;

  std::optional<ProblemInstance> shared;
  if (!config.fresh_data_per_run) shared = build_instance(config, config.gen.seed);
  const ProblemInstance* shared_ptr = shared ? &*shared : nullptr;

  std::vector<std::optional<std::string>> lines(todo.size());
  std::size_t next_write = 0;
  std::atomic<std::size_t> next_job{0};
  std::mutex mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next_job.fetch_add(1);
      if (j >= todo.size()) return;
      std::string line = run_cell(config, shared_ptr, todo[j]);
      std::lock_guard<std::mutex> lock(mutex);
      lines[j] = std::move(line);
      while (next_write < lines.size() && lines[next_write]) {
        out << *lines[next_write];
        if (lines[next_write]->find(",error: ") != std::string::npos) ++summary.failed;
        lines[next_write].reset();
        ++next_write;
      }
      out.flush();
    }
  };
  const int nthreads = std::max(1, std::min<int>(config.threads, static_cast<int>(todo.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  summary.executed = static_cast<int>(todo.size());
  return summary;
}

std::vector<ResultRow> read_results(std::istream& is) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(is, line)) return rows;
  const auto header = split(trim(line), ',');
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    ResultRow row;
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open results: " + path);
  return read_results(in);
}

namespace {

std::string field(const ResultRow& row, const std::string& key) {
  auto it = row.find(key);
  if (it == row.end()) throw std::invalid_argument("result row lacks column " + key);
  return it->second;
}

bool reached(const ResultRow& row) { return field(row, "status") == "ok"; }

}  // namespace

std::vector<SpeedupEntry> speedup_table(const std::vector<ResultRow>& rows) {
  using Group = std::tuple<std::string, std::string, double>;
  std::map<Group, double> caps;
  std::map<Group, std::map<int, std::map<double, std::vector<const ResultRow*>>>> grouped;
  for (const auto& row : rows) {
    const Group g{field(row, "algorithm"), field(row, "kind"), std::stod(field(row, "beta"))};
    const std::string k = field(row, "K");
    if (!k.empty()) caps[g] = std::max(caps[g], std::stod(k) + 1.0);
    grouped[g][std::stoi(field(row, "m"))][std::stod(field(row, "alpha0"))].push_back(&row);
  }
  std::vector<SpeedupEntry> table;
  for (const auto& [g, by_m] : grouped) {
    const double cap = caps[g];
    std::map<int, std::pair<double, double>> best;  // m -> (T*, alpha0)
    for (const auto& [m, by_alpha] : by_m) {
      double t_star = std::numeric_limits<double>::infinity(), arg = 0.0;
      for (const auto& [alpha, list] : by_alpha) {
        double sum = 0.0;
        for (const ResultRow* r : list) sum += reached(*r) ? std::stod(field(*r, "stop_iter")) : cap;
        const double mean = sum / static_cast<double>(list.size());
        if (mean < t_star) {
          t_star = mean;
          arg = alpha;
        }
      }
      best[m] = {t_star, arg};
    }
    if (!best.count(1)) {
      throw std::invalid_argument("speedup: missing m = 1 baseline for " + std::get<0>(g) + "/" +
                                  std::get<1>(g));
    }
    const double t1 = best[1].first;
    for (const auto& [m, tb] : best) {
      table.push_back({std::get<0>(g), std::get<1>(g), std::get<2>(g), m, tb.second, tb.first,
                       tb.first > 0.0 ? t1 / tb.first : 1.0});
    }
  }
  return table;
}

void write_speedup(std::ostream& os, const std::vector<SpeedupEntry>& table) {
  os << "algorithm,kind,beta,m,best_alpha0,t_star,speedup\n";
  for (const auto& e : table) {
    os << e.algorithm << ',' << e.kind << ',' << fmt(e.beta) << ',' << e.m << ','
       << fmt(e.best_alpha0) << ',' << fmt(e.t_star) << ',' << fmt(e.speedup) << '\n';
  }
}

std::vector<RobustnessEntry> robustness_table(const std::vector<ResultRow>& rows) {
  using Group = std::tuple<std::string, std::string, double, int>;
  std::map<Group, std::map<int, int>> hits;  // rep -> reached count
  std::map<Group, std::set<double>> alphas;
  for (const auto& row : rows) {
    const Group g{field(row, "algorithm"), field(row, "kind"), std::stod(field(row, "beta")),
                  std::stoi(field(row, "m"))};
    alphas[g].insert(std::stod(field(row, "alpha0")));
    hits[g][std::stoi(field(row, "rep"))] += reached(row) ? 1 : 0;
  }
  std::vector<RobustnessEntry> out;
  for (const auto& [g, per_rep] : hits) {
    double sum = 0.0;
    for (const auto& [rep, count] : per_rep) sum += count;
    out.push_back({std::get<0>(g), std::get<1>(g), std::get<2>(g), std::get<3>(g),
                   sum / static_cast<double>(per_rep.size()),
                   static_cast<int>(alphas[g].size())});
  }
  return out;
}

std::vector<StationarityRow> stationarity_trace(const ProblemInstance& instance,
                                                const RunRecord& record, double rho, int stride,
                                                double tol) {
  if (stride < 1) throw std::invalid_argument("stationarity_trace: stride must be >= 1");
  if (record.iterates.empty()) {
    throw std::invalid_argument("stationarity_trace: run kept no iterates");
  }
  const ObjectiveOracle oracle = ObjectiveOracle::of(instance);
  const int first = record.iterates.front().first;
  const int last = record.iterates.back().first;
  std::vector<StationarityRow> rows;
  for (std::size_t j = 0; j < record.iterates.size(); ++j) {
    const auto& [k, x] = record.iterates[j];
    if (k >= last && record.iterates.size() > 1) break;
    if ((k - first) % stride != 0) continue;
    const Vector& z = j < record.extrapolated.size() ? record.extrapolated[j].second : x;
    StationarityRow row;
    row.k = k;
    row.objective = loss_eval(instance, x);
    row.grad_x = moreau_grad_norm(oracle, x, rho, tol);
    row.grad_z = (z - x).norm() == 0.0 ? row.grad_x : moreau_grad_norm(oracle, z, rho, tol);
    rows.push_back(row);
  }
  return rows;
}

void write_stationarity(std::ostream& os, const std::vector<StationarityRow>& rows) {
  os << "k,objective,moreau_grad_x,moreau_grad_z\n";
  for (const auto& r : rows) {
    os << r.k << ',' << fmt(r.objective) << ',' << fmt(r.grad_x) << ',' << fmt(r.grad_z) << '\n';
  }
}

std::vector<std::string> recover_dump(const RunRecord& record, const std::vector<int>& checkpoints,
                                      const std::string& dir) {
  std::vector<std::string> paths;
  if (checkpoints.empty()) return paths;
  fs::create_directories(dir);
  for (int c : checkpoints) {
    const auto it = std::find_if(record.iterates.begin(), record.iterates.end(),
                                 [c](const auto& p) { return p.first == c; });
    if (it == record.iterates.end()) {
      throw std::invalid_argument("recover_dump: no stored iterate for k = " + std::to_string(c));
    }
    const Vector& x = it->second;
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(x.size()))));
    if (side * side != x.size()) {
      throw std::invalid_argument("recover_dump: dimension " + std::to_string(x.size()) +
                                  " is not a perfect square");
    }
    const Eigen::MatrixXd image = Eigen::Map<const Eigen::MatrixXd>(x.data(), side, side);
    const std::string path = (fs::path(dir) / ("iterate_" + std::to_string(c) + ".txt")).string();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_matrix(os, image);
    paths.push_back(path);
  }
  return paths;
}

StabilityConfig StabilityConfig::from_key_values(const KeyValues& kv) {
  StabilityConfig c;
  KeyValues rest;
  for (const auto& [key, v] : kv) {
    if (key == "kinds")
      c.kinds = to_list<ModelKind>(key, v, [](const std::string&, const std::string& s) {
        return model_kind_from_string(s);
      });
    else if (key == "m")
      c.m = to_list<int>(key, v, [](const std::string& k, const std::string& s) {
        return static_cast<int>(to_int(k, s));
      });
    else if (key == "gamma") c.gamma = to_double(key, v);
    else if (key == "trials") c.trials = static_cast<int>(to_int(key, v));
    else if (key == "gap_trials") c.gap_trials = static_cast<int>(to_int(key, v));
    else if (key == "identical") c.identical = to_bool(key, v);
    else if (key == "tol") c.tol = to_double(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else rest[key] = v;
  }
  c.data = ExperimentConfig::from_key_values(rest);
  if (c.kinds.empty() || c.m.empty()) throw std::invalid_argument("stability: empty grid");
  for (int m : c.m) {
    if (m < 1) throw std::invalid_argument("stability: m must be >= 1");
  }
  if (c.trials < 1) throw std::invalid_argument("stability: trials must be >= 1");
  if (c.gap_trials != 0 && c.gap_trials < 2) throw std::invalid_argument("stability: gap_trials >= 2");
  return c;
}

std::vector<StabilityCell> stability_command(const StabilityConfig& config) {
  const ProblemInstance inst = build_instance(config.data, config.data.gen.seed);
  fs::create_directories(config.data.out);
  Rng rng = make_rng(config.seed, Stream::Init);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(inst.dim());
  for (Index j = 0; j < z.size(); ++j) z(j) = normal(rng);

  std::ofstream trials_os(fs::path(config.data.out) / "stability_trials.csv");
  std::ofstream summary_os(fs::path(config.data.out) / "stability_summary.csv");
  if (!trials_os || !summary_os) throw std::runtime_error("cannot write stability output");
  trials_os << "kind,m,gamma,trial,replaced,replacement,distance,lipschitz,bound,ratio,valid\n";
  summary_os << "kind,m,gamma,trials,invalid,max_ratio,mean_ratio,violations,gap_estimate,"
                "gap_half_width,gap_bound\n";

  std::vector<StabilityCell> cells;
  for (ModelKind kind : config.kinds) {
    const ModelConstants mc = model_constants(kind, inst);
    const double curvature = max_curvature(inst);
    const double gamma =
        config.gamma > 0.0 ? config.gamma : (curvature > 0.0 ? 3.0 * curvature : 1.0) + mc.lambda;
    for (int m : config.m) {
      const std::uint64_t cell_seed =
          derive_seed(config.seed, Stream::Batch, static_cast<std::uint64_t>(m) * 8 +
                                                      static_cast<std::uint64_t>(kind));
      const auto trials =
          stability_trials(inst, kind, z, z, gamma, m, config.trials, cell_seed, config.identical);
      std::optional<GapEstimate> gap;
      if (config.gap_trials > 0) {
        gap = expectation_gap_estimate(inst, kind, z, gamma, m, config.gap_trials, cell_seed);
      }
      const StabilityReport report = summarize(trials, config.tol, gap);
      for (std::size_t t = 0; t < trials.size(); ++t) {
        const auto& tr = trials[t];
        trials_os << to_string(kind) << ',' << m << ',' << fmt(gamma) << ',' << t << ','
                  << tr.replaced << ',' << tr.replacement << ',' << fmt(tr.distance) << ','
                  << fmt(tr.lipschitz) << ',' << fmt(tr.bound) << ','
                  << fmt(tr.bound > 0.0 ? tr.distance / tr.bound : 0.0) << ','
                  << (tr.valid ? 1 : 0) << '\n';
      }
      summary_os << to_string(kind) << ',' << m << ',' << fmt(gamma) << ',' << report.trials << ','
                 << report.invalid << ',' << fmt(report.max_ratio) << ','
                 << fmt(report.mean_ratio) << ',' << report.violations << ','
                 << (gap ? fmt(gap->estimate) : "nan") << ','
                 << (gap ? fmt(gap->half_width) : "nan") << ','
                 << (gap ? fmt(gap->bound) : "nan") << '\n';
      cells.push_back({kind, m, gamma, report});
    }
  }
  return cells;
}

}  // namespace smod
