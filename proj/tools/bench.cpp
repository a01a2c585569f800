// bench: Monte Carlo runs, bound evaluation and single-dataset estimation.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spiked/bench.hpp"

namespace fs = std::filesystem;
using namespace spiked;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

RVec parse_spectrum(const std::string& spec, Eigen::Index k) {
  if (spec == "iso") return RVec::Ones(k);
  std::string text = spec;
  if (fs::is_regular_file(spec)) {
    std::ifstream in = open_in(spec);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::vector<double> vals;
  std::string item;
  for (char& ch : text)
    if (ch == '\n' || ch == '\r' || ch == ' ' || ch == '\t') ch = ',';
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      vals.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--spectrum: not a number: '" + item + "'");
    }
  }
  if (static_cast<Eigen::Index>(vals.size()) != k) {
    throw ConfigError("--spectrum: expected " + std::to_string(k) + " values, got " + std::to_string(vals.size()));
  }
  for (double v : vals)
    if (!(v > 0.0)) throw ConfigError("--spectrum: values must be positive");
  return Eigen::Map<RVec>(vals.data(), k);
}

ManifoldPoint read_point(const fs::path& dir) {
  std::ifstream fu = open_in(dir / "U.csv");
  std::ifstream fs_ = open_in(dir / "Sigma.csv");
  ManifoldPoint x{read_complex_matrix_csv(fu), read_complex_matrix_csv(fs_)};
  try {
    x.validate(1e-8);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--point-dir: ") + e.what());
  }
  return x;
}

struct RunOpts {
  std::string config;
  int trials = 0;
  long long seed = -1;
  bool fixed_truth = false;
  unsigned threads = 0;
  std::string out;
};

int cmd_run(const RunOpts& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.trials > 0) c.trials = o.trials;
  if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
  if (o.fixed_truth) c.fixed_truth = true;
  if (o.threads > 0) c.threads = o.threads;
  c.out_dir = o.out;
  c.validate();
  const ExperimentResult r = run_experiment(c);
  std::cout << "trials: " << r.trials.size() << " records, " << r.bounds.size() << " bound sets\n"
            << "output: " << c.out_dir.string() << "\n"
            << "seconds: " << r.seconds << "\n";
  return 0;
}

struct BoundsOpts {
  Eigen::Index p = 16, k = 4;
  double n = 100.0;
  std::optional<double> alpha_pp;
  std::optional<double> dof;
  std::string spectrum = "iso";
  std::string point_dir;
  double alpha = 1.0, beta = 0.0;
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_bounds(const BoundsOpts& o) {
  const double app = o.alpha_pp ? *o.alpha_pp : (o.dof ? alpha_pp_for(o.p, *o.dof) : 1.0);
  ManifoldPoint x;
  if (!o.point_dir.empty()) {
    x = read_point(o.point_dir);
  } else {
    if (o.k < 1 || o.p <= o.k) throw ConfigError("need p > k >= 1");
    Rng rng(o.seed);
    x.U = thin_qr(complex_gaussian(o.p, o.k, rng)).Q;
    x.Sigma = parse_spectrum(o.spectrum, o.k).cast<cd>().asDiagonal();
  }
  const MetricParams params{x.p(), x.k(), o.alpha, o.beta};
  const FisherSpec spec{o.n, app};
  try {
    params.validate();
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::vector<BoundRow> rows = bound_rows(spec, params, x);
  std::cout << std::setprecision(12);
  for (const BoundRow& r : rows) std::cout << std::left << std::setw(28) << r.name << r.value << "\n";
  const double assembled = rows[2].value, closed = rows[3].value;
  const double rel = std::abs(assembled - closed) / std::abs(closed);
  std::cout << std::setw(28) << "closed_form_check" << (rel <= 1e-8 ? "pass" : "FAIL") << " (rel err "
            << std::setprecision(3) << rel << ")\n";
  if (!o.csv.empty()) {
    std::ofstream f = open_out(o.csv);
    write_bounds_csv(f, rows);
  }
  return 0;
}

struct EstimateOpts {
  std::string input;
  Eigen::Index k = 1;
  std::string method = "rtr";
  std::optional<double> dof;
  std::string metric;
  double alpha = 1.0, beta = 0.0;
  std::string out = ".";
};

int cmd_estimate(const EstimateOpts& o) {
  const Method m = parse_method(o.method);
  std::ifstream in = open_in(o.input);
  const SampleSet data = read_samples_csv(in);
  const Eigen::Index p = data.p();
  if (o.k < 1 || o.k >= p) throw ConfigError("--k must satisfy 1 <= k < p = " + std::to_string(p));

  MetricRule rule = o.dof ? MetricRule::StudentMatched : MetricRule::Gaussian;
  if (!o.metric.empty()) rule = parse_metric_rule(o.metric);
  MetricParams params = MetricParams::gaussian(p, o.k);
  if (rule == MetricRule::StudentMatched) {
    if (!o.dof) throw ConfigError("--metric student-matched needs --dof");
    params = MetricParams::student_matched(p, o.k, *o.dof);
  } else if (rule == MetricRule::Explicit) {
    params = {p, o.k, o.alpha, o.beta};
  }
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const EstimateResult r = estimate(data, params, m);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create " + o.out + ": " + ec.message());
  {
    std::ofstream f = open_out(fs::path(o.out) / "U.csv");
    write_complex_matrix_csv(f, r.point.U);
  }
  {
    std::ofstream f = open_out(fs::path(o.out) / "Sigma.csv");
    write_complex_matrix_csv(f, r.point.Sigma);
  }
  nlohmann::json report{{"method", to_string(m)},
                        {"p", p},
                        {"k", o.k},
                        {"n", data.n()},
                        {"alpha", params.alpha},
                        {"beta", params.beta},
                        {"cost", r.cost},
                        {"grad_norm", r.grad_norm},
                        {"iterations", r.iterations},
                        {"status", r.status},
                        {"seconds", r.seconds}};
  std::ofstream f = open_out(fs::path(o.out) / "report.json");
  f << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiked covariance estimation benchmarks"};
  app.require_subcommand(1);

  RunOpts run;
  auto* run_cmd = app.add_subcommand("run", "Monte Carlo experiment from an INI config");
  run_cmd->add_option("--config", run.config, "INI config file")->required();
  run_cmd->add_option("--trials", run.trials, "Override the trial count");
  run_cmd->add_option("--seed", run.seed, "Override the base seed");
  run_cmd->add_flag("--fixed-truth", run.fixed_truth, "Use one truth for all trials");
  run_cmd->add_option("--threads", run.threads, "Worker threads (0: all cores)");
  run_cmd->add_option("--out", run.out, "Output directory")->required();

  BoundsOpts bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Cramer-Rao bounds at a point");
  bounds_cmd->add_option("--p", bounds.p, "Ambient dimension");
  bounds_cmd->add_option("--k", bounds.k, "Rank");
  bounds_cmd->add_option("--n", bounds.n, "Sample count")->required();
  auto* app_opt = bounds_cmd->add_option("--alpha-pp", bounds.alpha_pp, "Density-generator constant");
  bounds_cmd->add_option("--dof", bounds.dof, "Derive alpha_pp from Student-t degrees of freedom")->excludes(app_opt);
  bounds_cmd->add_option("--spectrum", bounds.spectrum,
                         "iso, a comma-separated list of k eigenvalues, or a file holding them");
  bounds_cmd->add_option("--point-dir", bounds.point_dir, "Directory with U.csv and Sigma.csv");
  bounds_cmd->add_option("--alpha", bounds.alpha, "Metric alpha");
  bounds_cmd->add_option("--beta", bounds.beta, "Metric beta");
  bounds_cmd->add_option("--seed", bounds.seed, "Seed for the random subspace");
  bounds_cmd->add_option("--csv", bounds.csv, "Also write the bounds as CSV");

  EstimateOpts est;
  auto* est_cmd = app.add_subcommand("estimate", "Fit the spiked model to a sample CSV");
  est_cmd->add_option("--input", est.input, "Sample CSV")->required();
  est_cmd->add_option("--k", est.k, "Rank")->required();
  est_cmd->add_option("--method", est.method, "pscm, rgd or rtr");
  est_cmd->add_option("--dof", est.dof, "Student-t degrees of freedom for the matched metric");
  est_cmd->add_option("--metric", est.metric, "student-matched, gaussian or explicit");
  est_cmd->add_option("--alpha", est.alpha, "Metric alpha for --metric explicit");
  est_cmd->add_option("--beta", est.beta, "Metric beta for --metric explicit");
  est_cmd->add_option("--out", est.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*bounds_cmd) return cmd_bounds(bounds);
    if (*est_cmd) return cmd_estimate(est);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
