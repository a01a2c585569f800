#include "spiked/manifold.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace spiked {

namespace {

CMat hpd_inverse(const CMat& s) {
  Eigen::LLT<CMat> llt(s);
  if (llt.info() != Eigen::Success) throw DomainError("Sigma is not positive definite");
  return herm(llt.solve(CMat::Identity(s.rows(), s.cols())));
}

// tr(A B) without forming the product.
cd trace_of_product(const CMat& a, const CMat& b) { return (a.array() * b.transpose().array()).sum(); }

// Orthonormal Q with U^H Q = 0 and Q R = (I - UU^H) xiU. Uses a Q with k
// columns when 2k <= p; otherwise the normal part cannot in general be
// factored with Q orthogonal to U, so the full complement U_perp is used.
struct NormalFrame {
  CMat Q;
  CMat R;
};

NormalFrame normal_frame(const CMat& u, const CMat& xi_u) {
  const Eigen::Index p = u.rows(), k = u.cols();
  const CMat normal = xi_u - u * (u.adjoint() * xi_u);
  CMat q;
  if (2 * k <= p) {
    CMat stacked(p, 2 * k);
    stacked << u, normal;
    Eigen::HouseholderQR<CMat> qr(stacked);
    const CMat full = qr.householderQ() * CMat::Identity(p, 2 * k);
    q = full.rightCols(k);
  } else {
    q = orthonormal_complement(u);
  }
  CMat r = q.adjoint() * normal;
  return {std::move(q), std::move(r)};
}

// [[U^H xiU, -R^H], [R, 0]]
CMat stiefel_block(const CMat& a, const CMat& r) {
  const Eigen::Index k = a.rows(), m = r.rows();
  CMat block = CMat::Zero(k + m, k + m);
  block.topLeftCorner(k, k) = skewh(a);
  block.topRightCorner(k, m) = -r.adjoint();
  block.bottomLeftCorner(m, k) = r;
  return block;
}

}  // namespace

void MetricParams::validate() const {
  if (k < 1 || p <= k) {
    throw std::invalid_argument("MetricParams: need p > k >= 1 (p=" + std::to_string(p) +
                                ", k=" + std::to_string(k) + ")");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("MetricParams: alpha must be positive");
  if (!(beta > -alpha / static_cast<double>(k))) {
    throw std::invalid_argument("MetricParams: beta must exceed -alpha/k");
  }
}

MetricParams MetricParams::student_matched(Eigen::Index p, Eigen::Index k, double dof) {
  const double a = (static_cast<double>(p) + dof) / (static_cast<double>(p) + dof + 1.0);
  return {p, k, a, a - 1.0};
}

void ManifoldPoint::validate(double tol) const {
  if (U.cols() != Sigma.rows() || Sigma.rows() != Sigma.cols()) {
    throw DimensionError("ManifoldPoint: inconsistent shapes");
  }
  if (U.rows() <= U.cols() || U.cols() < 1) throw DimensionError("ManifoldPoint: need p > k >= 1");
  const double orth = (U.adjoint() * U - CMat::Identity(k(), k())).norm();
  if (!(orth < tol)) {
    throw std::invalid_argument("ManifoldPoint: U is not orthonormal (residual " + std::to_string(orth) + ")");
  }
  const double asym = (Sigma - Sigma.adjoint()).norm();
  if (!(asym <= tol * (1.0 + Sigma.norm()))) throw std::invalid_argument("ManifoldPoint: Sigma is not Hermitian");
  const RVec lam = hermitian_eig(Sigma).eigenvalues;
  if (!(lam(0) > 0.0)) throw std::invalid_argument("ManifoldPoint: Sigma is not positive definite");
}

double euclidean_inner(const TangentVector& a, const TangentVector& b) {
  return real_inner(a.xiU, b.xiU) + real_inner(a.xiSigma, b.xiSigma);
}

Gauge::Gauge(CMat o) : o_(std::move(o)) {
  if (o_.rows() != o_.cols()) throw DimensionError("Gauge: matrix must be square");
  const double err = (o_.adjoint() * o_ - CMat::Identity(o_.rows(), o_.cols())).norm();
  if (!(err < 1e-10)) throw std::invalid_argument("Gauge: matrix is not unitary (residual " + std::to_string(err) + ")");
}

ManifoldPoint gauge_transport(const ManifoldPoint& x, const Gauge& g) {
  const CMat& o = g.matrix();
  return {x.U * o, herm(o.adjoint() * x.Sigma * o)};
}

TangentVector gauge_transport(const TangentVector& xi, const Gauge& g) {
  const CMat& o = g.matrix();
  return {xi.xiU * o, herm(o.adjoint() * xi.xiSigma * o)};
}

double inner(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
             const TangentVector& eta) {
  const CMat uxi = x.U.adjoint() * xi.xiU;
  const CMat ueta = x.U.adjoint() * eta.xiU;
  const double stiefel = real_inner(xi.xiU, eta.xiU) - 0.5 * real_inner(uxi, ueta);

  const CMat si = hpd_inverse(x.Sigma);
  const CMat a = si * xi.xiSigma;
  const CMat b = si * eta.xiSigma;
  const double affine = params.alpha * trace_of_product(a, b).real() + params.beta * a.trace().real() * b.trace().real();
  return stiefel + affine;
}

double norm(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi) {
  return std::sqrt(std::max(0.0, inner(params, x, xi, xi)));
}

TangentVector project_tangent(const ManifoldPoint& x, const TangentVector& z) {
  return {z.xiU - x.U * herm(x.U.adjoint() * z.xiU), herm(z.xiSigma)};
}

CMat horizontal_omega(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi) {
  const HermitianEig es = hermitian_eig(x.Sigma);
  const RVec& lam = es.eigenvalues;
  const CMat& v = es.eigenvectors;
  const CMat si = v * lam.cwiseInverse().asDiagonal() * v.adjoint();

  const double a = params.alpha;
  const CMat rhs = skewh(CMat(x.U.adjoint() * xi.xiU + 2.0 * a * (xi.xiSigma * si - si * xi.xiSigma)));
  CMat rot = v.adjoint() * rhs * v;
  for (Eigen::Index j = 0; j < rot.cols(); ++j)
    for (Eigen::Index i = 0; i < rot.rows(); ++i) {
      // >= 1 for every alpha > 0.
      const double d = 1.0 - 4.0 * a + 2.0 * a * (lam(j) / lam(i) + lam(i) / lam(j));
      rot(i, j) /= d;
    }
  return skewh(CMat(v * rot * v.adjoint()));
}

TangentVector vertical_vector(const ManifoldPoint& x, const CMat& omega) {
  return {x.U * omega, herm(CMat(x.Sigma * omega - omega * x.Sigma))};
}

TangentVector project_horizontal(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi) {
  const CMat omega = horizontal_omega(params, x, xi);
  return {xi.xiU - x.U * omega, herm(CMat(xi.xiSigma + omega * x.Sigma - x.Sigma * omega))};
}

double horizontality_residual(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi) {
  const CMat si = hpd_inverse(x.Sigma);
  return (x.U.adjoint() * xi.xiU - 2.0 * params.alpha * (si * xi.xiSigma - xi.xiSigma * si)).norm();
}

TangentVector levi_civita_product(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
                                  const TangentVector& eta, const TangentVector& deta_xi) {
  (void)params;
  TangentVector out = project_tangent(x, deta_xi);
  // herm(etaU xiU^H) U, then the component normal to span(U).
  const CMat w = 0.5 * (eta.xiU * (xi.xiU.adjoint() * x.U) + xi.xiU * (eta.xiU.adjoint() * x.U));
  out.xiU += w - x.U * (x.U.adjoint() * w);
  const CMat si = hpd_inverse(x.Sigma);
  out.xiSigma -= herm(CMat(eta.xiSigma * si * xi.xiSigma));
  return out;
}

TangentVector levi_civita(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
                          const TangentVector& eta, const TangentVector& deta_xi) {
  return project_horizontal(params, x, levi_civita_product(params, x, xi, eta, deta_xi));
}

ManifoldPoint geodesic(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi, double t,
                       double horizontal_tol) {
  const double res = horizontality_residual(params, x, xi);
  if (!(res <= horizontal_tol)) {
    throw std::invalid_argument("geodesic: direction is not horizontal (residual " + std::to_string(res) + ")");
  }
  const Eigen::Index k = x.k();
  const NormalFrame nf = normal_frame(x.U, xi.xiU);
  const CMat block = stiefel_block(x.U.adjoint() * xi.xiU, nf.R);
  const CMat e = skew_hermitian_exp(CMat(t * block));
  CMat basis(x.p(), k + nf.Q.cols());
  basis << x.U, nf.Q;
  const CMat u_t = basis * e.leftCols(k);

  const CMat s_half = hermitian_matfun(x.Sigma, MatFun::Sqrt);
  const CMat s_ihalf = hermitian_matfun(x.Sigma, MatFun::InvSqrt);
  const CMat inner_exp = hermitian_matfun(CMat(t * s_ihalf * xi.xiSigma * s_ihalf), MatFun::Exp);
  return {u_t, herm(CMat(s_half * inner_exp * s_half))};
}

ManifoldPoint retract(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi) {
  (void)params;
  const Eigen::Index k = x.k();
  const NormalFrame nf = normal_frame(x.U, xi.xiU);
  const CMat block = stiefel_block(x.U.adjoint() * xi.xiU, nf.R);
  CMat w;
  try {
    w = polar_unitary_factor(gamma2(block));
  } catch (const DegeneracyError&) {
    throw DegeneracyError("retract: step too large, reduce the step size");
  }
  CMat basis(x.p(), k + nf.Q.cols());
  basis << x.U, nf.Q;
  const CMat u_new = basis * w.leftCols(k);

  const CMat s_half = hermitian_matfun(x.Sigma, MatFun::Sqrt);
  const CMat s_ihalf = hermitian_matfun(x.Sigma, MatFun::InvSqrt);
  const CMat g = gamma2(herm(CMat(s_ihalf * xi.xiSigma * s_ihalf)));
  return {u_new, herm(CMat(s_half * g * s_half))};
}

TangentVector egrad_to_rgrad(const MetricParams& params, const ManifoldPoint& x, const TangentVector& egrad) {
  const double a = params.alpha, b = params.beta;
  const double k = static_cast<double>(x.k());
  const CMat& u = x.U;
  const CMat& s = x.Sigma;
  const CMat gs = herm(egrad.xiSigma);
  const CMat gu_part = egrad.xiU - u * (egrad.xiU.adjoint() * u);
  const double tr = trace_of_product(gs, s).real();
  const CMat gs_part = herm(CMat(s * gs * s / a - (b * tr / (a * (a + k * b))) * s));
  return {gu_part, gs_part};
}

TangentVector ehess_to_rhess(const MetricParams& params, const ManifoldPoint& x, const TangentVector& egrad,
                             const TangentVector& hdir, const TangentVector& xi) {
  const double a = params.alpha, b = params.beta;
  const double c = b / (a * (a + static_cast<double>(x.k()) * b));
  const CMat& u = x.U;
  const CMat& s = x.Sigma;
  const CMat& gu = egrad.xiU;
  const CMat gs = herm(egrad.xiSigma);
  const CMat hs = herm(hdir.xiSigma);

  // Directional derivative of egrad_to_rgrad along xi, then the connection.
  const CMat d_u = hdir.xiU - xi.xiU * (gu.adjoint() * u) - u * (hdir.xiU.adjoint() * u) - u * (gu.adjoint() * xi.xiU);
  const double t = trace_of_product(gs, s).real();
  const double dt = trace_of_product(hs, s).real() + trace_of_product(gs, xi.xiSigma).real();
  const CMat d_s = herm(CMat((xi.xiSigma * gs * s + s * hs * s + s * gs * xi.xiSigma) / a - c * dt * s - c * t * xi.xiSigma));

  const TangentVector rgrad = egrad_to_rgrad(params, x, egrad);
  return levi_civita(params, x, xi, rgrad, {d_u, d_s});
}

ManifoldPoint reorthonormalize(const ManifoldPoint& x) {
  // Polar factor of the p x k matrix: U (U^H U)^{-1/2}.
  const CMat gram = herm(CMat(x.U.adjoint() * x.U));
  return {x.U * hermitian_matfun(gram, MatFun::InvSqrt), herm(x.Sigma)};
}

ManifoldPoint random_point(const MetricParams& params, Rng& rng, double eps) {
  params.validate();
  CMat u = thin_qr(complex_gaussian(params.p, params.k, rng)).Q;
  CMat s = hermitian_matfun(CMat(eps * random_hermitian(params.k, rng)), MatFun::Exp);
  return {std::move(u), std::move(s)};
}

TangentVector random_tangent(const MetricParams& params, const ManifoldPoint& x, Rng& rng, bool horizontal) {
  TangentVector z{complex_gaussian(x.p(), x.k(), rng), complex_gaussian(x.k(), x.k(), rng)};
  TangentVector xi = project_tangent(x, z);
  if (horizontal) xi = project_horizontal(params, x, xi);
  const double nrm = norm(params, x, xi);
  return (1.0 / nrm) * xi;
}

}  // namespace spiked
