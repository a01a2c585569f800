#include "spiked/bench.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

namespace spiked {

std::string to_string(Method m) {
  switch (m) {
    case Method::Pscm: return "pscm";
    case Method::Rgd: return "t-rgd";
    case Method::Rtr: return "t-rtr";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "pscm") return Method::Pscm;
  if (s == "t-rgd" || s == "rgd") return Method::Rgd;
  if (s == "t-rtr" || s == "rtr") return Method::Rtr;
  throw ConfigError("unknown method '" + s + "' (expected pscm, rgd or rtr)");
}

std::string to_string(MetricRule r) {
  switch (r) {
    case MetricRule::StudentMatched: return "student-matched";
    case MetricRule::Gaussian: return "gaussian";
    case MetricRule::Explicit: return "explicit";
  }
  return "unknown";
}

MetricRule parse_metric_rule(const std::string& s) {
  if (s == "student-matched") return MetricRule::StudentMatched;
  if (s == "gaussian") return MetricRule::Gaussian;
  if (s == "explicit") return MetricRule::Explicit;
  throw ConfigError("unknown metric rule '" + s + "' (expected student-matched, gaussian or explicit)");
}

SolverConfig ExperimentConfig::default_rgd() {
  SolverConfig c;
  c.max_iters = 1000;
  c.grad_tol = 1e-6;
  return c;
}

SolverConfig ExperimentConfig::default_rtr() {
  SolverConfig c;
  c.max_iters = 200;
  c.grad_tol = 1e-6;
  return c;
}

void ExperimentConfig::validate() const {
  if (k < 1 || p <= k) throw ConfigError("need p > k >= 1");
  if (dofs.empty()) throw ConfigError("dof list is empty");
  for (double d : dofs)
    if (!(d > 0.0)) throw ConfigError("dof values must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(cond >= 1.0)) throw ConfigError("cond must be >= 1");
  if (n_grid.empty()) throw ConfigError("n grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw ConfigError("n values must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n grid must be strictly ascending");
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (methods.empty()) throw ConfigError("method set is empty");
  if (alpha_pp_override && !(*alpha_pp_override > 0.0)) throw ConfigError("alpha_pp must be positive");
  try {
    for (double d : dofs) metric_for(d).validate();
    rgd.validate();
    rtr.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

MetricParams ExperimentConfig::metric_for(double dof) const {
  switch (metric) {
    case MetricRule::StudentMatched: return MetricParams::student_matched(p, k, dof);
    case MetricRule::Gaussian: return MetricParams::gaussian(p, k);
    case MetricRule::Explicit: return {p, k, alpha, beta};
  }
  return MetricParams::gaussian(p, k);
}

double ExperimentConfig::alpha_pp_for_dof(double dof) const {
  return alpha_pp_override ? *alpha_pp_override : alpha_pp_for(p, dof);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
  if (trim(v.substr(pos)) != "") throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + v + "'");
  }
  if (trim(v.substr(pos)) != "") throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_solver_key(SolverConfig& c, bool trust_region, const std::string& key, const std::string& v) {
  if (key == "max_iters") c.max_iters = static_cast<int>(to_integer(key, v));
  else if (key == "grad_tol") c.grad_tol = to_double(key, v);
  else if (key == "reorthonormalize_every") c.reorthonormalize_every = static_cast<int>(to_integer(key, v));
  else if (!trust_region && key == "c1") c.armijo.c1 = to_double(key, v);
  else if (!trust_region && key == "backtrack") c.armijo.backtrack = to_double(key, v);
  else if (!trust_region && key == "max_backtracks") c.armijo.max_backtracks = static_cast<int>(to_integer(key, v));
  else if (!trust_region && key == "growth") c.armijo.growth = to_double(key, v);
  else if (trust_region && key == "delta0") c.tr.delta0 = to_double(key, v);
  else if (trust_region && key == "delta_max") c.tr.delta_max = to_double(key, v);
  else if (trust_region && key == "rho_accept") c.tr.rho_accept = to_double(key, v);
  else if (trust_region && key == "kappa") c.tr.kappa = to_double(key, v);
  else if (trust_region && key == "theta") c.tr.theta = to_double(key, v);
  else if (trust_region && key == "max_inner") c.tr.max_inner = static_cast<int>(to_integer(key, v));
  else if (trust_region && key == "fd_hessian") c.fd_hessian = to_bool(key, v);
  else throw ConfigError("unknown key '" + key + "' in [" + (trust_region ? "solver.rtr" : "solver.rgd") + "]");
}

}  // namespace

ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string v = trim(node.data());
      if (section == "problem") {
        if (key == "p") c.p = to_integer(key, v);
        else if (key == "k") c.k = to_integer(key, v);
        else if (key == "dof") {
          c.dofs.clear();
          for (const auto& s : split_list(v)) c.dofs.push_back(to_double(key, s));
        } else if (key == "sigma") c.sigma = to_double(key, v);
        else if (key == "cond") c.cond = to_double(key, v);
        else if (key == "n") {
          c.n_grid.clear();
          for (const auto& s : split_list(v)) c.n_grid.push_back(to_integer(key, s));
        } else if (key == "trials") c.trials = static_cast<int>(to_integer(key, v));
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, v));
        else if (key == "fixed_truth") c.fixed_truth = to_bool(key, v);
        else if (key == "metric") c.metric = parse_metric_rule(v);
        else if (key == "alpha") c.alpha = to_double(key, v);
        else if (key == "beta") c.beta = to_double(key, v);
        else if (key == "alpha_pp") c.alpha_pp_override = to_double(key, v);
        else if (key == "methods") {
          c.methods.clear();
          for (const auto& s : split_list(v)) c.methods.push_back(parse_method(s));
        } else if (key == "threads") c.threads = static_cast<unsigned>(to_integer(key, v));
        else throw ConfigError("unknown key '" + key + "' in [problem]");
      } else if (section == "solver.rgd") {
        apply_solver_key(c.rgd, false, key, v);
      } else if (section == "solver.rtr") {
        apply_solver_key(c.rtr, true, key, v);
      } else if (section == "output") {
        if (key == "dir") c.out_dir = v;
        else throw ConfigError("unknown key '" + key + "' in [output]");
      } else {
        throw ConfigError("unknown section [" + section + "]");
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse_config(in);
}

std::uint64_t trial_seed(std::uint64_t base, double dof, Eigen::Index n, int trial) {
  std::uint64_t h = mix64(base);
  h = hash_combine(h, std::bit_cast<std::uint64_t>(dof));
  h = hash_combine(h, static_cast<std::uint64_t>(n));
  return hash_combine(h, static_cast<std::uint64_t>(trial));
}

EstimateResult estimate(const SampleSet& data, const MetricParams& params, Method method, const SolverConfig& rgd,
                        const SolverConfig& rtr) {
  params.validate();
  if (params.p != data.p()) throw DimensionError("estimate: metric dimension does not match the data");
  EstimateResult out;
  out.method = method;
  const Objective obj = tyler_objective(data, params);
  if (method == Method::Pscm) {
    const auto t0 = std::chrono::steady_clock::now();
    out.point = pscm(data, params.k);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.status = "closed_form";
  } else {
    const ManifoldPoint x0 = pscm_init(data, params.k);
    const SolveResult r = method == Method::Rgd ? solve_rgd(obj, x0, params, rgd) : solve_rtr(obj, x0, params, rtr);
    out.point = r.point;
    out.status = to_string(r.status);
    out.iterations = r.iterations;
    out.seconds = r.seconds;
  }
  out.cost = static_cast<double>(obj.cost(out.point));
  out.grad_norm = norm(params, out.point, obj.rgrad(out.point));
  return out;
}

namespace {

struct Unit {
  std::size_t dof_index, n_index;
  int trial;
};

struct UnitResult {
  std::vector<TrialRecord> records;
  TrialBounds bounds;
};

UnitResult run_unit(const ExperimentConfig& c, const Unit& u) {
  const double dof = c.dofs[u.dof_index];
  const Eigen::Index n = c.n_grid[u.n_index];
  const std::uint64_t seed = trial_seed(c.seed, dof, n, u.trial);
  Rng rng(seed);

  SpikedTruth truth;
  if (c.fixed_truth) {
    Rng truth_rng(hash_combine(mix64(c.seed), 0x7472757468ULL));
    truth = make_spiked(c.p, c.k, c.sigma, c.cond, truth_rng);
  } else {
    truth = make_spiked(c.p, c.k, c.sigma, c.cond, rng);
  }
  const SampleSet data = sample_student_t({dof, truth.covariance}, n, rng);
  const MetricParams params = c.metric_for(dof);

  UnitResult out;
  for (Method m : c.methods) {
    TrialRecord rec;
    rec.n = n;
    rec.dof = dof;
    rec.trial = u.trial;
    rec.method = m;
    rec.seed = seed;
    try {
      const EstimateResult est = estimate(data, params, m, c.rgd, c.rtr);
      rec.status = est.status;
      rec.iterations = est.iterations;
      rec.seconds = est.seconds;
      rec.err_subspace = subspace_error(truth.point.U, est.point.U);
      try {
        rec.err_total = divergence(params, truth.point, est.point);
      } catch (const AlignmentError&) {
        rec.err_total = std::nan("");
      }
    } catch (const std::exception& e) {
      rec.status = std::string("error: ") + e.what();
      rec.err_total = std::nan("");
      rec.err_subspace = std::nan("");
    }
    out.records.push_back(std::move(rec));
  }

  const FisherSpec spec{static_cast<double>(n), c.alpha_pp_for_dof(dof)};
  const std::vector<BoundRow> rows = bound_rows(spec, params, truth.point);
  out.bounds = {n, dof, u.trial, spec.alpha_pp, rows[0].value, rows[1].value, rows[2].value, rows[3].value};
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_db(double mean) { return 10.0 * std::log10(mean); }

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Unit> units;
  for (std::size_t di = 0; di < config.dofs.size(); ++di)
    for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni)
      for (int t = 0; t < config.trials; ++t) units.push_back({di, ni, t});

  std::vector<UnitResult> results(units.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      try {
        results[i] = run_unit(config, units[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = units.size();
      }
    }
  };
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, units.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  // Units were enumerated in (dof, n, trial) order, so concatenation is
  // already sorted regardless of which thread ran what.
  ExperimentResult out;
  for (UnitResult& r : results) {
    for (TrialRecord& rec : r.records) out.trials.push_back(std::move(rec));
    out.bounds.push_back(r.bounds);
  }
  out.summary = summarize(out.trials, out.bounds, config);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!config.out_dir.empty()) write_outputs(out, config);
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& trials, const std::vector<TrialBounds>& bounds,
                                  const ExperimentConfig& config) {
  std::vector<SummaryRow> rows;
  auto add = [&rows](Eigen::Index n, double dof, const std::string& source, const std::string& metric,
                     const std::vector<double>& vals) {
    double sum = 0.0;
    int count = 0, excluded = 0;
    for (double v : vals) {
      if (std::isnan(v)) {
        ++excluded;
      } else {
        sum += v;
        ++count;
      }
    }
    const double value = count > 0 ? to_db(sum / count) : std::nan("");
    rows.push_back({n, dof, source, metric, value, count, excluded});
  };
  for (double dof : config.dofs) {
    for (Eigen::Index n : config.n_grid) {
      for (Method m : config.methods) {
        std::vector<double> tot, sub;
        for (const TrialRecord& r : trials) {
          if (r.dof == dof && r.n == n && r.method == m) {
            tot.push_back(r.err_total);
            sub.push_back(r.err_subspace);
          }
        }
        add(n, dof, to_string(m), "err_total_db", tot);
        add(n, dof, to_string(m), "err_subspace_db", sub);
      }
      std::vector<double> bt, btt, bs, bsc;
      for (const TrialBounds& b : bounds) {
        if (b.dof == dof && b.n == n) {
          bt.push_back(b.total);
          btt.push_back(b.total_tilde);
          bs.push_back(b.subspace);
          bsc.push_back(b.subspace_closed);
        }
      }
      add(n, dof, kBoundTotal, "err_total_db", bt);
      add(n, dof, kBoundTotalTilde, "err_total_db", btt);
      add(n, dof, kBoundSubspace, "err_subspace_db", bs);
      add(n, dof, kBoundSubspaceClosed, "err_subspace_db", bsc);
    }
  }
  return rows;
}

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& trials) {
  os << "n,dof,trial,method,err_total,err_subspace,status,iterations,seconds,seed\n";
  for (const TrialRecord& r : trials) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << r.n << ',' << fmt(r.dof) << ',' << r.trial << ',' << to_string(r.method) << ',' << fmt(r.err_total) << ','
       << fmt(r.err_subspace) << ',' << status << ',' << r.iterations << ',' << fmt(r.seconds) << ',' << r.seed
       << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "n,dof,source,metric,value,count\n";
  for (const SummaryRow& r : rows) {
    os << r.n << ',' << fmt(r.dof) << ',' << r.source << ',' << r.metric << ',' << fmt(r.value) << ',' << r.count
       << '\n';
  }
}

void write_mean_bounds_csv(std::ostream& os, const std::vector<TrialBounds>& bounds, const ExperimentConfig& config) {
  std::vector<BoundRow> rows;
  for (double dof : config.dofs) {
    for (Eigen::Index n : config.n_grid) {
      double s[4] = {0, 0, 0, 0};
      int count = 0;
      for (const TrialBounds& b : bounds) {
        if (b.dof != dof || b.n != n) continue;
        s[0] += b.total;
        s[1] += b.total_tilde;
        s[2] += b.subspace;
        s[3] += b.subspace_closed;
        ++count;
      }
      if (count == 0) continue;
      const double app = config.alpha_pp_for_dof(dof);
      const double nd = static_cast<double>(n);
      rows.push_back({config.p, config.k, nd, app, kBoundTotal, s[0] / count});
      rows.push_back({config.p, config.k, nd, app, kBoundTotalTilde, s[1] / count});
      rows.push_back({config.p, config.k, nd, app, kBoundSubspace, s[2] / count});
      rows.push_back({config.p, config.k, nd, app, kBoundSubspaceClosed, s[3] / count});
    }
  }
  write_bounds_csv(os, rows);
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(config.out_dir / name);
    if (!f) throw IoError("cannot write " + (config.out_dir / name).string());
    return f;
  };
  {
    auto f = open("trials.csv");
    write_trials_csv(f, result.trials);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, result.summary);
  }
  {
    auto f = open("bounds.csv");
    write_mean_bounds_csv(f, result.bounds, config);
  }

  nlohmann::json report;
  report["p"] = config.p;
  report["k"] = config.k;
  report["dof"] = config.dofs;
  report["sigma"] = config.sigma;
  report["cond"] = config.cond;
  report["n"] = config.n_grid;
  report["trials"] = config.trials;
  report["seed"] = config.seed;
  report["fixed_truth"] = config.fixed_truth;
  report["metric_rule"] = to_string(config.metric);
  std::vector<std::string> methods;
  for (Method m : config.methods) methods.push_back(to_string(m));
  report["methods"] = methods;
  std::map<std::string, std::map<std::string, int>> status_counts;
  for (const TrialRecord& r : result.trials) ++status_counts[to_string(r.method)][r.status];
  report["status_counts"] = status_counts;
  nlohmann::json excluded = nlohmann::json::array();
  for (const SummaryRow& r : result.summary) {
    if (r.excluded > 0) {
      excluded.push_back({{"n", r.n}, {"dof", r.dof}, {"source", r.source}, {"metric", r.metric}, {"excluded", r.excluded}});
    }
  }
  report["excluded"] = excluded;
  report["seconds"] = result.seconds;
  auto f = open("report.json");
  f << report.dump(2) << '\n';
  if (!f) throw IoError("write failed in " + config.out_dir.string());
}

void write_complex_matrix_csv(std::ostream& os, const CMat& m) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int part = 0; part < 2; ++part) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        os << (j ? "," : "") << (part == 0 ? m(i, j).real() : m(i, j).imag());
      }
      os << '\n';
    }
  }
}

CMat read_complex_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<double> vals;
    for (const auto& cell : split_list(line)) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') throw ParseError("not a number: '" + cell + "'", line_no);
      vals.push_back(v);
    }
    if (!rows.empty() && vals.size() != rows.front().size()) throw ParseError("ragged row", line_no);
    rows.push_back(std::move(vals));
  }
  if (rows.empty() || rows.size() % 2 != 0) throw ParseError("expected an even, nonzero number of rows", line_no);
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size() / 2);
  const Eigen::Index c = static_cast<Eigen::Index>(rows.front().size());
  CMat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = cd(rows[static_cast<std::size_t>(2 * i)][static_cast<std::size_t>(j)],
                   rows[static_cast<std::size_t>(2 * i + 1)][static_cast<std::size_t>(j)]);
  return m;
}

}  // namespace spiked
