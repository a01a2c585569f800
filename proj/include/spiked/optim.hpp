#pragma once

// Riemannian gradient descent (Armijo backtracking) and Riemannian trust
// region (Steihaug-Toint truncated CG) on the quotient geometry.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "spiked/manifold.hpp"
#include "spiked/model.hpp"

namespace spiked {

/// Hessian-vector product at a fixed point.
using HessOp = std::function<TangentVector(const TangentVector&)>;

struct Objective {
  /// Returned in long double so that line searches and trust-region ratios
  /// can use cost differences below double rounding of the cost itself.
  std::function<long double(const ManifoldPoint&)> cost;
  /// Horizontal Riemannian gradient.
  std::function<TangentVector(const ManifoldPoint&)> rgrad;
  /// Optional. Returns the Hessian operator at a point, so per-point work is
  /// done once per outer iteration.
  std::function<HessOp(const ManifoldPoint&)> hess_at;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;    // accepted step size (RGD) or radius (RTR)
  int inner = 0;        // backtracks (RGD) or tCG iterations (RTR)
  bool accepted = true;
};

using TraceSink = std::function<void(const IterationRecord&)>;

/// Writes one JSON object per line.
TraceSink json_lines_sink(std::ostream& os);

struct ArmijoConfig {
  double c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 50;
  /// The first trial step is `growth` times the previously accepted one;
  /// on the first iteration it is 1 / ||grad||.
  double growth = 2.0;
};

struct TrustRegionConfig {
  double delta_max = 0.0;  // <= 0: sqrt(manifold dimension)
  double delta0 = 0.0;     // <= 0: delta_max / 8
  double rho_accept = 0.1;
  double kappa = 0.1;
  double theta = 1.0;
  int max_inner = 0;       // <= 0: manifold dimension
};

struct SolverConfig {
  int max_iters = 500;
  double grad_tol = 1e-6;
  ArmijoConfig armijo;
  TrustRegionConfig tr;
  /// Use finite differences of the gradient when the objective has no
  /// Hessian.
  bool fd_hessian = false;
  int reorthonormalize_every = 50;
  TraceSink trace;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

enum class SolveStatus { Converged, MaxIters, LineSearchFailure, NumericalBreakdown };

std::string to_string(SolveStatus s);

struct SolveResult {
  ManifoldPoint point;
  long double cost = 0.0;
  double grad_norm = 0.0;
  std::vector<long double> cost_trace;  // entry 0 is the start point
  std::vector<double> grad_norm_trace;
  SolveStatus status = SolveStatus::MaxIters;
  int iterations = 0;
  int inner_iterations = 0;
  double seconds = 0.0;
};

struct LineSearchResult {
  double step = 0.0;
  ManifoldPoint point;
  long double cost = 0.0;
  int backtracks = 0;
  bool ok = false;
};

/// Backtracking from `initial_step` until
///   f(R(t d)) - f(x) <= c1 t slope   and   f(R(t d)) < f(x).
/// Throws std::invalid_argument if slope >= 0.
LineSearchResult armijo_linesearch(const Objective& obj, const MetricParams& params, const ManifoldPoint& x,
                                   long double fx, const TangentVector& direction, double slope, double initial_step,
                                   const ArmijoConfig& config);

SolveResult solve_rgd(const Objective& obj, const ManifoldPoint& start, const MetricParams& params,
                      const SolverConfig& config);

/// Needs obj.hess_at unless config.fd_hessian is set.
SolveResult solve_rtr(const Objective& obj, const ManifoldPoint& start, const MetricParams& params,
                      const SolverConfig& config);

/// P^H((rgrad(R(h xi)) - rgrad(x)) / h) with h = 2^-14 / ||xi||.
HessOp fd_hessian(const Objective& obj, const MetricParams& params, const ManifoldPoint& x);

/// Tyler's cost on the spiked model with gradient and Hessian under the
/// given metric. The data are copied into the objective.
Objective tyler_objective(const SampleSet& data, const MetricParams& params);

}  // namespace spiked
