// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criterion 9 runs only when SPIKED_FULL_FIGURE is set.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spiked/bench.hpp"

using namespace spiked;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

double pair_norm(const TangentVector& a) { return std::sqrt(a.xiU.squaredNorm() + a.xiSigma.squaredNorm()); }

CMat embed_pair(const ManifoldPoint& x) { return x.U * x.Sigma * x.U.adjoint(); }

TangentVector ambient(Eigen::Index p, Eigen::Index k, Rng& rng) {
  return {complex_gaussian(p, k, rng), complex_gaussian(k, k, rng)};
}

RVec random_spectrum(Eigen::Index k, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 10.0);
  RVec s(k);
  for (Eigen::Index i = 0; i < k; ++i) s(i) = u(rng);
  return s;
}

ManifoldPoint point_with_spectrum(Eigen::Index p, const RVec& s, Rng& rng) {
  const Eigen::Index k = s.size();
  const CMat v = random_unitary(k, rng);
  return {thin_qr(complex_gaussian(p, k, rng)).Q, herm(CMat(v * s.cast<cd>().asDiagonal() * v.adjoint()))};
}

const double kAlphas[][2] = {{1.0, 0.0}, {19.0 / 20.0, -1.0 / 20.0}, {2.5, 0.4}, {0.2, 0.0}};

// 1. Closed form of the subspace bound against the assembled FIM.
void closed_form(Outcome& o) {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index p = k + 1 + static_cast<Eigen::Index>(rng() % (16 - k));
    const RVec s = random_spectrum(k, rng);
    const FisherSpec spec{t % 2 ? 50.0 : 100.0, t % 3 ? 1.0 : 0.95};
    const auto& ab = kAlphas[t % 4];
    const FimBundle b = assemble_fim(spec, MetricParams{p, k, ab[0], ab[1]}, point_with_spectrum(p, s, rng));
    const double e = rel(bound_subspace(b), bound_subspace_closed(spec, p, k, s));
    worst = std::max(worst, e);
    o.require(e < 1e-8, "p=" + std::to_string(p) + " k=" + std::to_string(k));
  }
  o.detail << "max rel err " << worst;
}

// 2. Rank and block structure of F.
void fim_structure(Outcome& o) {
  Rng rng(102);
  double coupling = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index p = k + 1 + static_cast<Eigen::Index>(rng() % (12 - k));
    const auto& ab = kAlphas[t % 4];
    const FimBundle b = assemble_fim(FisherSpec{100.0, t % 2 ? 1.0 : 0.95}, MetricParams{p, k, ab[0], ab[1]},
                                     point_with_spectrum(p, random_spectrum(k, rng), rng));
    o.require(b.rank == 2 * p * k - k * k, "rank at p=" + std::to_string(p) + " k=" + std::to_string(k));
    const Eigen::Index nu = b.n_uperp, rest = 2 * p * k - nu;
    const double c = std::max(b.F.topRightCorner(nu, rest).cwiseAbs().maxCoeff(),
                              b.F.bottomLeftCorner(rest, nu).cwiseAbs().maxCoeff());
    coupling = std::max(coupling, c);
    o.require(c < 1e-9, "coupling block");
  }
  o.detail << "max coupling " << coupling;
}

// 3. Projectors, geodesic speed, retraction order, orthonormal basis.
void geometry(Outcome& o) {
  Rng rng(103);
  double proj = 0.0, speed = 0.0, ratio = 1e300, gram_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto& ab = kAlphas[t % 4];
    const Eigen::Index k = 1 + t % 4, p = k + 2 + t % 5;
    const MetricParams params{p, k, ab[0], ab[1]};
    const ManifoldPoint x = random_point(params, rng);

    const TangentVector z = ambient(p, k, rng);
    const TangentVector pt = project_tangent(x, z);
    proj = std::max(proj, pair_norm(project_tangent(x, pt) - pt));
    const TangentVector res = z - pt, eta = random_tangent(params, x, rng, false);
    proj = std::max(proj, std::abs(real_inner(CMat(res.xiU), CMat(eta.xiU - 0.5 * x.U * (x.U.adjoint() * eta.xiU)))) +
                              std::abs(real_inner(CMat(res.xiSigma), eta.xiSigma)));
    const TangentVector xi = random_tangent(params, x, rng, false);
    const TangentVector ph = project_horizontal(params, x, xi);
    proj = std::max(proj, pair_norm(project_horizontal(params, x, ph) - ph));
    proj = std::max(proj, std::abs(inner(params, x, xi - ph, random_tangent(params, x, rng, true))));

    const TangentVector h = random_tangent(params, x, rng, true);
    const double dt = 1e-5;
    double s0 = 0.0;
    for (double s : {0.0, 0.3, 0.7, 1.0}) {
      const ManifoldPoint a = geodesic(params, x, h, s + dt), b = geodesic(params, x, h, s - dt);
      const TangentVector v{(a.U - b.U) / (2 * dt), (a.Sigma - b.Sigma) / (2 * dt)};
      const double sp = inner(params, geodesic(params, x, h, s), v, v);
      if (s == 0.0) s0 = sp;
      speed = std::max(speed, rel(sp, s0));
    }

    auto e = [&](double s) { return (embed_pair(retract(params, x, s * h)) - embed_pair(geodesic(params, x, h, s))).norm(); };
    ratio = std::min(ratio, e(1e-2) / e(5e-3));

    if (t < 8) {
      const TangentBasis basis = tangent_basis(params, x);
      const auto m = static_cast<Eigen::Index>(basis.vectors.size());
      RMat gram(m, m);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
          gram(i, j) = inner(params, x, basis.vectors[static_cast<std::size_t>(i)], basis.vectors[static_cast<std::size_t>(j)]);
      gram_err = std::max(gram_err, (gram - RMat::Identity(m, m)).cwiseAbs().maxCoeff());
    }
  }
  o.require(proj < 1e-9, "projector");
  o.require(speed < 1e-7, "geodesic speed");
  o.require(ratio >= 6.0, "retraction ratio");
  o.require(gram_err < 1e-9, "basis Gram");
  o.detail << "projector " << proj << ", speed drift " << speed << ", retraction ratio " << ratio << ", Gram "
           << gram_err;
}

// 4. Gradient and Hessian of the Tyler pipeline.
void tyler_derivatives(Outcome& o) {
  const MetricParams params = MetricParams::student_matched(16, 4, 3.0);
  Rng rng(104);
  const SpikedTruth truth = make_spiked(16, 4, 50.0, 20.0, rng);
  const SampleSet data = sample_student_t({3.0, truth.covariance}, 200, rng);
  const ManifoldPoint x = random_point(params, rng);
  const Objective obj = tyler_objective(data, params);
  const TangentVector g = obj.rgrad(x);
  const HessOp hess = obj.hess_at(x);
  const long double f0 = obj.cost(x);

  double grad_err = 0.0, ratio = 1e300, sym = 0.0;
  for (int t = 0; t < 10; ++t) {
    const TangentVector xi = random_tangent(params, x, rng, true);
    const double h = 1e-5;
    const double fd =
        static_cast<double>((obj.cost(retract(params, x, h * xi)) - obj.cost(retract(params, x, -h * xi))) / (2 * h));
    grad_err = std::max(grad_err, rel(fd, inner(params, x, g, xi)));

    const double gx = inner(params, x, g, xi), hx = inner(params, x, hess(xi), xi);
    auto err = [&](double s) {
      return std::abs(static_cast<double>(obj.cost(retract(params, x, s * xi)) - f0) - s * gx - 0.5 * s * s * hx);
    };
    ratio = std::min(ratio, err(1e-2) / err(5e-3));

    const TangentVector eta = random_tangent(params, x, rng, true);
    const double a = inner(params, x, hess(xi), eta), b = inner(params, x, xi, hess(eta));
    sym = std::max(sym, std::abs(a - b) / std::max({1.0, std::abs(a), norm(params, x, hess(xi))}));
  }
  o.require(grad_err < 1e-5, "gradient");
  o.require(ratio >= 6.0, "Taylor ratio");
  o.require(sym < 1e-8, "self-adjoint");
  o.detail << "grad rel err " << grad_err << ", Taylor ratio " << ratio << ", asymmetry " << sym;
}

// 5. Invariance under U_k gauges.
void gauge(Outcome& o) {
  Rng rng(105);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index k = 1 + t % 4, p = k + 3;
    const auto& ab = kAlphas[t % 4];
    const MetricParams params{p, k, ab[0], ab[1]};
    const ManifoldPoint x = point_with_spectrum(p, random_spectrum(k, rng), rng);
    const ManifoldPoint y = point_with_spectrum(p, random_spectrum(k, rng), rng);
    const Gauge gx = Gauge::random(k, rng), gy = Gauge::random(k, rng);
    const ManifoldPoint xg = gauge_transport(x, gx), yg = gauge_transport(y, gy);
    const SampleSet data(complex_gaussian(p, 3 * p, rng));

    auto track = [&](double a, double b) { worst = std::max(worst, rel(a, b)); };
    track(tyler_cost(xg, data), tyler_cost(x, data));
    track(divergence(params, xg, yg), divergence(params, x, y));
    track(subspace_error(xg.U, yg.U), subspace_error(x.U, y.U));
    const FisherSpec spec{100.0, 0.95};
    const auto a = bound_rows(spec, params, x), b = bound_rows(spec, params, xg);
    for (std::size_t i = 0; i < a.size(); ++i) track(b[i].value, a[i].value);
  }
  o.require(worst < 1e-9, "gauge");
  o.detail << "max rel change " << worst;
}

ExperimentConfig figure_config() {
  ExperimentConfig c;
  c.p = 16;
  c.k = 4;
  c.sigma = 50.0;
  c.cond = 20.0;
  c.trials = 100;
  c.seed = 2024;
  return c;
}

const SummaryRow* find(const std::vector<SummaryRow>& rows, Eigen::Index n, double dof, const std::string& source,
                       const std::string& metric) {
  for (const SummaryRow& r : rows)
    if (r.n == n && r.dof == dof && r.source == source && r.metric == metric) return &r;
  return nullptr;
}

// Gap in dB of source over bound; NaN when either row is missing.
double gap(const std::vector<SummaryRow>& rows, Eigen::Index n, double dof, const std::string& source,
           const std::string& bound, const std::string& metric) {
  const SummaryRow* a = find(rows, n, dof, source, metric);
  const SummaryRow* b = find(rows, n, dof, bound, metric);
  if (!a || !b) return std::nan("");
  return a->value - b->value;
}

// 6. T-RTR against the bounds at d = 3.
void attainment(Outcome& o) {
  ExperimentConfig c = figure_config();
  c.dofs = {3.0};
  c.n_grid = {100, 300};
  c.methods = {Method::Rtr};
  const ExperimentResult r = run_experiment(c);
  const std::string rtr = to_string(Method::Rtr);
  for (Eigen::Index n : {100, 300}) {
    const double g = gap(r.summary, n, 3.0, rtr, kBoundSubspace, "err_subspace_db");
    o.require(g <= 1.5, "subspace gap at n=" + std::to_string(n));
    o.detail << "n=" << n << " subspace gap " << g << " dB; ";
  }
  const double g = gap(r.summary, 300, 3.0, rtr, kBoundTotalTilde, "err_total_db");
  o.require(g <= 2.0, "total gap at n=300");
  o.detail << "n=300 total gap " << g << " dB";
}

// 7. pSCM at d = 3 and d = 100.
void robustness(Outcome& o) {
  ExperimentConfig c = figure_config();
  c.dofs = {3.0, 100.0};
  c.n_grid = {300};
  c.methods = {Method::Pscm};
  const ExperimentResult r = run_experiment(c);
  const std::string ps = to_string(Method::Pscm);
  const double g3 = gap(r.summary, 300, 3.0, ps, kBoundSubspace, "err_subspace_db");
  const double g100 = gap(r.summary, 300, 100.0, ps, kBoundSubspace, "err_subspace_db");
  o.require(g3 >= 3.0, "d=3 gap");
  o.require(g100 <= 1.5, "d=100 gap");
  o.detail << "d=3 gap " << g3 << " dB, d=100 gap " << g100 << " dB";
}

// 8. Solver behavior.
void solvers(Outcome& o) {
  const MetricParams params = MetricParams::student_matched(16, 4, 3.0);
  Rng rng(108);
  const SpikedTruth truth = make_spiked(16, 4, 50.0, 20.0, rng);
  const SampleSet data = sample_student_t({3.0, truth.covariance}, 200, rng);
  const Objective obj = tyler_objective(data, params);
  const ManifoldPoint start = pscm_init(data, 4);

  SolverConfig rtr = ExperimentConfig::default_rtr();
  rtr.max_iters = 100;
  const SolveResult a = solve_rtr(obj, start, params, rtr);
  o.require(a.status == SolveStatus::Converged && a.grad_norm < 1e-6, "T-RTR convergence");
  o.detail << "T-RTR " << a.iterations << " iters, grad " << a.grad_norm << "; ";

  SolverConfig rgd = ExperimentConfig::default_rgd();
  rgd.max_iters = 300;
  const SolveResult b = solve_rgd(obj, start, params, rgd);
  bool monotone = true;
  for (std::size_t i = 1; i < b.cost_trace.size(); ++i) monotone = monotone && b.cost_trace[i] < b.cost_trace[i - 1];
  o.require(monotone, "T-RGD monotone");
  o.detail << "T-RGD trace " << b.cost_trace.size() << " entries monotone=" << monotone << "; ";

  int breakdowns = 0;
  for (int t = 0; t < 100; ++t) {
    Rng r(trial_seed(108, 3.0, 12, t));
    const SpikedTruth tr = make_spiked(16, 4, 50.0, 20.0, r);
    const SampleSet d = sample_student_t({3.0, tr.covariance}, 12, r);
    const SolveResult s = solve_rgd(tyler_objective(d, params), pscm_init(d, 4), params, ExperimentConfig::default_rgd());
    if (s.status == SolveStatus::NumericalBreakdown) ++breakdowns;
  }
  o.require(breakdowns <= 10, "n=12 breakdowns");
  o.detail << "n=12 breakdowns " << breakdowns << "/100";
}

// 9. Full default configuration, k in {4, 8}.
void full_figure(Outcome& o) {
  for (Eigen::Index k : {4, 8}) {
    ExperimentConfig c;
    c.k = k;
    c.seed = 9;
    if (const char* dir = std::getenv("SPIKED_FULL_FIGURE_OUT")) c.out_dir = std::string(dir) + "/k" + std::to_string(k);
    const ExperimentResult r = run_experiment(c);
    const std::string rtr = to_string(Method::Rtr), ps = to_string(Method::Pscm);
    for (double dof : c.dofs) {
      for (Eigen::Index n : c.n_grid) {
        for (const std::string& m : {rtr, ps, to_string(Method::Rgd)}) {
          const double g = gap(r.summary, n, dof, m, kBoundSubspace, "err_subspace_db");
          o.require(!(g < -1.0), "bound above " + m + " at n=" + std::to_string(n));
        }
      }
      const double last = gap(r.summary, c.n_grid.back(), dof, rtr, kBoundSubspace, "err_subspace_db");
      o.require(last <= 1.5, "T-RTR near the bound at the largest n");
      const double order = gap(r.summary, c.n_grid.back(), dof, ps, rtr, "err_subspace_db");
      if (dof < 10.0) o.require(order > 0.0, "pSCM above T-RTR at d=3");
      o.detail << "k=" << k << " d=" << dof << " T-RTR gap " << last << " dB, pSCM-T-RTR " << order << " dB; ";
    }
  }
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "closed-form subspace bound", 10, closed_form},
      {2, "FIM rank and structure", 30, fim_structure},
      {3, "geometry suite", 30, geometry},
      {4, "Tyler gradient and Hessian", 30, tyler_derivatives},
      {5, "gauge invariance", 10, gauge},
      {6, "T-RTR bound attainment", 300, attainment},
      {7, "pSCM robustness contrast", 300, robustness},
      {8, "solver behavior", 300, solvers},
      {9, "full figure regeneration", 3600, full_figure},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (c.id == 9 && !std::getenv("SPIKED_FULL_FIGURE")) {
      std::printf("[SKIP] %d %s (set SPIKED_FULL_FIGURE=1 to run)\n", c.id, c.name);
      continue;
    }
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.budget_seconds, "runtime budget");
    std::printf("[%s] %d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.str().c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
