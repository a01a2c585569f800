#include "spiked/optim.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>

#include "json.hpp"

namespace spiked {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double manifold_dim(const MetricParams& params) {
  return static_cast<double>(2 * params.p * params.k - params.k * params.k);
}

void emit(const SolverConfig& config, const IterationRecord& rec) {
  if (config.trace) config.trace(rec);
}

struct TcgResult {
  TangentVector eta;
  TangentVector Heta;
  int iterations = 0;
  bool hit_boundary = false;
};

// Steihaug-Toint truncated CG on the quadratic model
//   m(eta) = <g, eta> + <eta, H eta> / 2,  ||eta|| <= delta.
TcgResult truncated_cg(const MetricParams& params, const ManifoldPoint& x, const TangentVector& grad,
                       const HessOp& hess, double delta, const TrustRegionConfig& cfg, int max_inner) {
  TcgResult out{TangentVector::zero(x), TangentVector::zero(x)};
  TangentVector r = grad;
  double r_r = inner(params, x, r, r);
  const double norm_r0 = std::sqrt(r_r);
  double e_Pe = 0.0, e_Pd = 0.0, d_Pd = r_r;
  double z_r = r_r;
  TangentVector dir = -r;
  double model = 0.0;

  for (int j = 0; j < max_inner; ++j) {
    ++out.iterations;
    const TangentVector Hd = hess(dir);
    const double d_Hd = inner(params, x, dir, Hd);
    const double alpha = z_r / d_Hd;
    const double e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha * alpha * d_Pd;

    if (!(d_Hd > 0.0) || e_Pe_new >= delta * delta) {
      const double tau = (-e_Pd + std::sqrt(e_Pd * e_Pd + d_Pd * (delta * delta - e_Pe))) / d_Pd;
      out.eta += tau * dir;
      out.Heta += tau * Hd;
      out.hit_boundary = true;
      break;
    }
    e_Pe = e_Pe_new;
    TangentVector eta_new = out.eta + alpha * dir;
    TangentVector Heta_new = out.Heta + alpha * Hd;
    const double model_new = inner(params, x, eta_new, grad) + 0.5 * inner(params, x, eta_new, Heta_new);
    if (model_new >= model) break;  // rounding stalled the model decrease
    model = model_new;
    out.eta = std::move(eta_new);
    out.Heta = std::move(Heta_new);

    r += alpha * Hd;
    r = project_horizontal(params, x, r);
    r_r = inner(params, x, r, r);
    const double norm_r = std::sqrt(r_r);
    if (norm_r <= norm_r0 * std::min(std::pow(norm_r0, cfg.theta), cfg.kappa)) break;

    const double z_r_old = z_r;
    z_r = r_r;
    const double beta = z_r / z_r_old;
    dir = beta * dir - r;
    e_Pd = beta * (e_Pd + alpha * d_Pd);
    d_Pd = z_r + beta * beta * d_Pd;
  }
  return out;
}

}  // namespace

TraceSink json_lines_sink(std::ostream& os) {
  return [&os](const IterationRecord& r) {
    nlohmann::json j{{"iteration", r.iteration}, {"cost", r.cost},   {"grad_norm", r.grad_norm},
                     {"step", r.step},           {"inner", r.inner}, {"accepted", r.accepted}};
    os << j.dump() << '\n';
  };
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("SolverConfig: " + m); };
  if (max_iters < 0) fail("max_iters must be >= 0");
  if (!(grad_tol > 0.0)) fail("grad_tol must be positive");
  if (!(armijo.c1 > 0.0 && armijo.c1 < 1.0)) fail("armijo c1 must be in (0, 1)");
  if (!(armijo.backtrack > 0.0 && armijo.backtrack < 1.0)) fail("armijo backtrack must be in (0, 1)");
  if (armijo.max_backtracks < 1) fail("armijo max_backtracks must be >= 1");
  if (!(armijo.growth > 0.0)) fail("armijo growth must be positive");
  if (!(tr.rho_accept >= 0.0 && tr.rho_accept < 0.25)) fail("rho_accept must be in [0, 0.25)");
  if (!(tr.kappa > 0.0 && tr.kappa < 1.0)) fail("tCG kappa must be in (0, 1)");
  if (!(tr.theta > 0.0)) fail("tCG theta must be positive");
  if (tr.delta0 > 0.0 && tr.delta_max > 0.0 && tr.delta0 > tr.delta_max) fail("delta0 exceeds delta_max");
  if (reorthonormalize_every < 1) fail("reorthonormalize_every must be >= 1");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIters: return "max_iters";
    case SolveStatus::LineSearchFailure: return "line_search_failure";
    case SolveStatus::NumericalBreakdown: return "numerical_breakdown";
  }
  return "unknown";
}

LineSearchResult armijo_linesearch(const Objective& obj, const MetricParams& params, const ManifoldPoint& x,
                                   long double fx, const TangentVector& direction, double slope, double initial_step,
                                   const ArmijoConfig& config) {
  if (!(slope < 0.0)) throw std::invalid_argument("armijo_linesearch: direction is not a descent direction");
  LineSearchResult res;
  double t = initial_step;
  for (int b = 0; b <= config.max_backtracks; ++b) {
    res.backtracks = b;
    try {
      ManifoldPoint trial = retract(params, x, t * direction);
      const long double ft = obj.cost(trial);
      if (std::isfinite(ft) && ft - fx <= config.c1 * t * slope && ft < fx) {
        res.step = t;
        res.point = std::move(trial);
        res.cost = ft;
        res.ok = true;
        return res;
      }
    } catch (const DegeneracyError&) {
    } catch (const DomainError&) {
    }
    t *= config.backtrack;
  }
  return res;
}

SolveResult solve_rgd(const Objective& obj, const ManifoldPoint& start, const MetricParams& params,
                      const SolverConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  SolveResult out;
  ManifoldPoint x = start;
  long double fx = obj.cost(x);
  TangentVector g = obj.rgrad(x);
  double gn = norm(params, x, g);
  out.cost_trace.push_back(fx);
  out.grad_norm_trace.push_back(gn);
  emit(config, {0, static_cast<double>(fx), gn, 0.0, 0, true});

  double prev_step = 0.0;
  out.status = SolveStatus::MaxIters;
  for (int it = 1;; ++it) {
    if (!std::isfinite(fx) || !std::isfinite(gn)) {
      out.status = SolveStatus::NumericalBreakdown;
      break;
    }
    if (gn < config.grad_tol) {
      out.status = SolveStatus::Converged;
      break;
    }
    if (it > config.max_iters) break;

    long double f_ref = fx;
    if (it % config.reorthonormalize_every == 0) {
      x = reorthonormalize(x);
      const long double f_re = obj.cost(x);
      g = obj.rgrad(x);
      gn = norm(params, x, g);
      // Keep the recorded trace strictly decreasing across the reset.
      f_ref = std::min(fx, f_re);
    }
    const double slope = -gn * gn;
    const double t_init = prev_step > 0.0 ? config.armijo.growth * prev_step : 1.0 / gn;
    LineSearchResult ls = armijo_linesearch(obj, params, x, f_ref, -g, slope, t_init, config.armijo);
    out.inner_iterations += ls.backtracks;
    if (!ls.ok) {
      out.status = SolveStatus::LineSearchFailure;
      break;
    }
    prev_step = ls.step;
    x = std::move(ls.point);
    fx = ls.cost;
    g = obj.rgrad(x);
    gn = norm(params, x, g);
    out.iterations = it;
    out.cost_trace.push_back(fx);
    out.grad_norm_trace.push_back(gn);
    emit(config, {it, static_cast<double>(fx), gn, ls.step, ls.backtracks, true});
  }
  out.point = std::move(x);
  out.cost = fx;
  out.grad_norm = gn;
  out.seconds = seconds_since(t0);
  return out;
}

HessOp fd_hessian(const Objective& obj, const MetricParams& params, const ManifoldPoint& x) {
  auto g0 = std::make_shared<TangentVector>(obj.rgrad(x));
  return [&obj, params, x, g0](const TangentVector& xi) {
    const double nx = norm(params, x, xi);
    if (nx == 0.0) return TangentVector::zero(x);
    const double h = std::ldexp(1.0, -14) / nx;
    const ManifoldPoint xh = retract(params, x, h * xi);
    const TangentVector gh = obj.rgrad(xh);
    TangentVector d{(gh.xiU - g0->xiU) / h, (gh.xiSigma - g0->xiSigma) / h};
    return project_horizontal(params, x, project_tangent(x, d));
  };
}

SolveResult solve_rtr(const Objective& obj, const ManifoldPoint& start, const MetricParams& params,
                      const SolverConfig& config) {
  config.validate();
  if (!obj.hess_at && !config.fd_hessian) {
    throw std::invalid_argument("solve_rtr: objective has no Hessian and fd_hessian is off");
  }
  const auto t0 = Clock::now();
  const double dim = manifold_dim(params);
  const double delta_max = config.tr.delta_max > 0.0 ? config.tr.delta_max : std::sqrt(dim);
  double delta = config.tr.delta0 > 0.0 ? config.tr.delta0 : delta_max / 8.0;
  const int max_inner = config.tr.max_inner > 0 ? config.tr.max_inner : static_cast<int>(dim);
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  SolveResult out;
  ManifoldPoint x = start;
  long double fx = obj.cost(x);
  TangentVector g = obj.rgrad(x);
  double gn = norm(params, x, g);
  out.cost_trace.push_back(fx);
  out.grad_norm_trace.push_back(gn);
  emit(config, {0, static_cast<double>(fx), gn, delta, 0, true});

  out.status = SolveStatus::MaxIters;
  int accepted_count = 0;
  for (int it = 1;; ++it) {
    if (!std::isfinite(fx) || !std::isfinite(gn)) {
      out.status = SolveStatus::NumericalBreakdown;
      break;
    }
    if (gn < config.grad_tol) {
      out.status = SolveStatus::Converged;
      break;
    }
    if (it > config.max_iters) break;
    out.iterations = it;

    const HessOp hess = obj.hess_at ? obj.hess_at(x) : fd_hessian(obj, params, x);
    const TcgResult tcg = truncated_cg(params, x, g, hess, delta, config.tr, max_inner);
    out.inner_iterations += tcg.iterations;

    bool retract_ok = true;
    ManifoldPoint x_prop;
    long double f_prop = std::numeric_limits<long double>::quiet_NaN();
    try {
      x_prop = retract(params, x, tcg.eta);
      f_prop = obj.cost(x_prop);
    } catch (const DegeneracyError&) {
      retract_ok = false;
    } catch (const DomainError&) {
      retract_ok = false;
    }

    // Regularized ratio keeps rho meaningful once cost differences reach
    // rounding level.
    const double reg = std::max(1.0, std::abs(static_cast<double>(fx))) * kEps * 1e3;
    const double rho_num = static_cast<double>(fx - f_prop) + reg;
    const double rho_den = -(inner(params, x, g, tcg.eta) + 0.5 * inner(params, x, tcg.eta, tcg.Heta)) + reg;
    if (!(rho_den > 0.0)) {
      out.status = SolveStatus::NumericalBreakdown;
      break;
    }
    const double rho = retract_ok && std::isfinite(f_prop) ? rho_num / rho_den : -1.0;

    if (rho < 0.25) {
      delta *= 0.25;
    } else if (rho > 0.75 && tcg.hit_boundary) {
      delta = std::min(2.0 * delta, delta_max);
    }
    const bool accept = rho > config.tr.rho_accept;
    if (accept) {
      x = std::move(x_prop);
      fx = f_prop;
      ++accepted_count;
      if (accepted_count % config.reorthonormalize_every == 0) {
        x = reorthonormalize(x);
        fx = obj.cost(x);
      }
      g = obj.rgrad(x);
      gn = norm(params, x, g);
      out.cost_trace.push_back(fx);
      out.grad_norm_trace.push_back(gn);
    }
    emit(config, {it, static_cast<double>(fx), gn, delta, tcg.iterations, accept});
    if (delta < kEps * delta_max) {
      out.status = SolveStatus::NumericalBreakdown;
      break;
    }
  }
  out.point = std::move(x);
  out.cost = fx;
  out.grad_norm = gn;
  out.seconds = seconds_since(t0);
  return out;
}

namespace {

// Quantities of Tyler's cost that depend only on the point.
struct TylerState {
  CMat R, Ri, psi, W, G;
  RVec q;
  TangentVector egrad;
};

TylerState tyler_state(const SampleSet& data, const ManifoldPoint& x) {
  TylerState s;
  s.R = embed_full(x).R;
  Eigen::LLT<CMat> llt(s.R);
  if (llt.info() != Eigen::Success) throw DomainError("tyler_objective: R is not positive definite");
  const Eigen::Index p = data.p();
  s.Ri = herm(CMat(llt.solve(CMat::Identity(p, p))));
  s.W = llt.solve(data.X());
  s.q = (data.X().array().conjugate() * s.W.array()).colwise().sum().real().transpose();
  s.psi = herm(CMat(data.X() * s.q.cwiseInverse().asDiagonal() * data.X().adjoint()));
  s.G = herm(CMat(static_cast<double>(data.n()) * s.Ri - static_cast<double>(p) * s.Ri * s.psi * s.Ri));
  s.egrad = lift_egrad(x, s.G);
  return s;
}

}  // namespace

Objective tyler_objective(const SampleSet& data, const MetricParams& params) {
  params.validate();
  auto d = std::make_shared<const SampleSet>(data);
  Objective obj;
  obj.cost = [d](const ManifoldPoint& x) { return tyler_cost_extended(x, *d); };
  obj.rgrad = [d, params](const ManifoldPoint& x) {
    return egrad_to_rgrad(params, x, lift_egrad(x, tyler_egrad_hpd(embed_full(x).R, *d)));
  };
  obj.hess_at = [d, params](const ManifoldPoint& x) -> HessOp {
    auto s = std::make_shared<const TylerState>(tyler_state(*d, x));
    return [d, params, x, s](const TangentVector& xi) {
      const double pd = static_cast<double>(d->p()), nd = static_cast<double>(d->n());
      const CMat e = dembed(x, xi);
      const RVec c = (s->W.array().conjugate() * (e * s->W).array()).colwise().sum().real().transpose();
      const RVec coef = c.array() / s->q.array().square();
      const CMat dpsi = d->X() * coef.asDiagonal() * d->X().adjoint();
      const CMat hpp = herm(CMat(2.0 * pd * s->Ri * herm(CMat(e * s->Ri * s->psi)) * s->Ri -
                                 s->Ri * (pd * dpsi + nd * e) * s->Ri));
      const TangentVector hdir = lift_ehess(x, s->G, hpp, xi);
      return ehess_to_rhess(params, x, s->egrad, hdir, xi);
    };
  };
  return obj;
}

}  // namespace spiked
