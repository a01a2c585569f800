#pragma once

// Monte Carlo comparison of spiked covariance estimators against the
// intrinsic Cramer-Rao bounds.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spiked/crb.hpp"
#include "spiked/model.hpp"
#include "spiked/optim.hpp"

namespace spiked {

/// Invalid or inconsistent experiment configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable input or unwritable output (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method { Pscm, Rgd, Rtr };

/// "pscm", "t-rgd", "t-rtr"
std::string to_string(Method m);
/// Accepts the names above and the short forms "rgd", "rtr".
Method parse_method(const std::string& s);

enum class MetricRule { StudentMatched, Gaussian, Explicit };

std::string to_string(MetricRule r);
MetricRule parse_metric_rule(const std::string& s);

struct ExperimentConfig {
  Eigen::Index p = 16;
  Eigen::Index k = 4;
  std::vector<double> dofs{3.0, 100.0};
  double sigma = 50.0;
  double cond = 20.0;
  std::vector<Eigen::Index> n_grid{12, 14, 15, 17, 20, 40, 70, 100, 200, 300};
  int trials = 500;
  std::uint64_t seed = 0;
  bool fixed_truth = false;
  MetricRule metric = MetricRule::StudentMatched;
  double alpha = 1.0;  // used by MetricRule::Explicit
  double beta = 0.0;
  /// Overrides the alpha_pp implied by each dof for the bounds.
  std::optional<double> alpha_pp_override;
  std::vector<Method> methods{Method::Pscm, Method::Rgd, Method::Rtr};
  SolverConfig rgd = default_rgd();
  SolverConfig rtr = default_rtr();
  unsigned threads = 0;  // 0: hardware concurrency
  std::filesystem::path out_dir;

  static SolverConfig default_rgd();
  static SolverConfig default_rtr();

  /// Throws ConfigError.
  void validate() const;
  MetricParams metric_for(double dof) const;
  double alpha_pp_for_dof(double dof) const;
};

/// INI file with sections [problem], [solver.rgd], [solver.rtr], [output].
/// Unknown sections or keys are rejected. Throws ConfigError or IoError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& is);

struct TrialRecord {
  Eigen::Index n = 0;
  double dof = 0.0;
  int trial = 0;
  Method method = Method::Pscm;
  double err_total = 0.0;     // NaN when the divergence is undefined
  double err_subspace = 0.0;
  std::string status;         // solver status, "closed_form" for pSCM
  int iterations = 0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

struct TrialBounds {
  Eigen::Index n = 0;
  double dof = 0.0;
  int trial = 0;
  double alpha_pp = 1.0;
  double total = 0.0;
  double total_tilde = 0.0;
  double subspace = 0.0;
  double subspace_closed = 0.0;
};

struct SummaryRow {
  Eigen::Index n = 0;
  double dof = 0.0;
  std::string source;  // method or bound name
  std::string metric;  // err_total_db or err_subspace_db
  double value = 0.0;  // 10 log10(mean)
  int count = 0;
  int excluded = 0;    // missing values left out of the mean
};

struct ExperimentResult {
  std::vector<TrialRecord> trials;  // sorted by (dof, n, trial, method)
  std::vector<TrialBounds> bounds;  // sorted by (dof, n, trial)
  std::vector<SummaryRow> summary;
  double seconds = 0.0;
};

/// Seed of one trial; depends on the dof and n values, not their positions
/// in the grids.
std::uint64_t trial_seed(std::uint64_t base, double dof, Eigen::Index n, int trial);

/// Runs every (dof, n, trial) unit on a worker pool and aggregates
/// deterministically. Writes outputs when config.out_dir is set.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& trials, const std::vector<TrialBounds>& bounds,
                                  const ExperimentConfig& config);

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& trials);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
/// Bounds averaged over trials per (dof, n), in the crb CSV schema.
void write_mean_bounds_csv(std::ostream& os, const std::vector<TrialBounds>& bounds, const ExperimentConfig& config);
/// trials.csv, summary.csv, bounds.csv and report.json into config.out_dir.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config);

/// Complex matrix as real CSV: rows 2i and 2i+1 hold the real and imaginary
/// parts of row i. No header.
void write_complex_matrix_csv(std::ostream& os, const CMat& m);
CMat read_complex_matrix_csv(std::istream& is);

struct EstimateResult {
  ManifoldPoint point;
  Method method = Method::Pscm;
  double cost = 0.0;
  double grad_norm = 0.0;
  std::string status;
  int iterations = 0;
  double seconds = 0.0;
};

/// Fits the spiked model to data with the given method under `params`.
EstimateResult estimate(const SampleSet& data, const MetricParams& params, Method method,
                        const SolverConfig& rgd = ExperimentConfig::default_rgd(),
                        const SolverConfig& rtr = ExperimentConfig::default_rtr());

}  // namespace spiked
