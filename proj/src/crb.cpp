#include "spiked/crb.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "spiked/model.hpp"

namespace spiked {

double divergence(const MetricParams& params, const ManifoldPoint& theta, const ManifoldPoint& theta_hat) {
  if (theta.p() != theta_hat.p() || theta.k() != theta_hat.k()) {
    throw DimensionError("divergence: points have different dimensions");
  }
  const PrincipalAngles pa = principal_angles(theta.U, theta_hat.U);
  const double max_angle = pa.theta(pa.theta.size() - 1);
  if (max_angle > M_PI / 2 - kAlignmentTol) {
    throw AlignmentError("divergence: subspaces are numerically orthogonal (max principal angle " +
                         std::to_string(max_angle) + ")");
  }
  // O Oh^H is the polar factor of U^H U_hat, independent of the SVD gauge.
  const CMat align = pa.O * pa.O_hat.adjoint();
  const CMat m = herm(CMat(align * theta_hat.Sigma * align.adjoint()));
  const CMat s_ihalf = hermitian_matfun(theta.Sigma, MatFun::InvSqrt);
  const CMat l = hermitian_matfun(herm(CMat(s_ihalf * m * s_ihalf)), MatFun::Log);
  const double tr_l = l.trace().real();
  return params.alpha * l.squaredNorm() + params.beta * tr_l * tr_l + pa.theta.squaredNorm();
}

double subspace_error(const CMat& u, const CMat& u_hat) { return principal_angles(u, u_hat).theta.squaredNorm(); }

void FisherSpec::validate() const {
  if (!(n >= 1.0)) throw std::invalid_argument("FisherSpec: n must be >= 1");
  if (!(alpha_pp > 0.0)) throw std::invalid_argument("FisherSpec: alpha_pp must be positive");
}

double alpha_pp_for(Eigen::Index p, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("alpha_pp_for: dof must be positive");
  if (dof >= kGaussianDof) return 1.0;
  const double pd = static_cast<double>(p) + dof;
  return pd / (pd + 1.0);
}

TangentBasis tangent_basis(const MetricParams& params, const ManifoldPoint& x) {
  params.validate();
  const Eigen::Index p = x.p(), k = x.k();
  const cd I(0.0, 1.0);
  const double r2 = std::sqrt(2.0);
  TangentBasis b;
  b.vectors.reserve(static_cast<std::size_t>(2 * p * k));
  auto push = [&](CMat u, CMat s) { b.vectors.push_back({std::move(u), std::move(s)}); };

  const CMat uperp = orthonormal_complement(x.U);
  for (Eigen::Index i = 0; i < p - k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      CMat e = CMat::Zero(p, k);
      e.col(j) = uperp.col(i);
      push(e, CMat::Zero(k, k));
      push(I * e, CMat::Zero(k, k));
    }
  }
  b.n_uperp = static_cast<Eigen::Index>(b.vectors.size());

  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      CMat om = CMat::Zero(k, k);
      om(i, j) = 1.0;
      om(j, i) = -1.0;
      push(x.U * om, CMat::Zero(k, k));
    }
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      CMat om = CMat::Zero(k, k);
      if (i == j) {
        om(i, i) = r2 * I;
      } else {
        om(i, j) = I;
        om(j, i) = I;
      }
      push(x.U * om, CMat::Zero(k, k));
    }
  }
  b.n_u = static_cast<Eigen::Index>(b.vectors.size()) - b.n_uperp;

  const CMat s_half = hermitian_matfun(x.Sigma, MatFun::Sqrt);
  const double sa = std::sqrt(params.alpha);
  const double sab = std::sqrt(params.alpha + static_cast<double>(k) * params.beta);
  const double trace_coef = (sa - sab) / (static_cast<double>(k) * sa * sab);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      CMat h = CMat::Zero(k, k);
      if (i == j) {
        h(i, i) = 1.0;
      } else {
        h(i, j) = 1.0 / r2;
        h(j, i) = 1.0 / r2;
      }
      const CMat e = s_half * h * s_half / sa + trace_coef * h.trace().real() * x.Sigma;
      push(CMat::Zero(p, k), herm(e));
    }
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      CMat h = CMat::Zero(k, k);
      h(i, j) = I / r2;
      h(j, i) = -I / r2;
      push(CMat::Zero(p, k), herm(CMat(s_half * h * s_half / sa)));
    }
  }
  b.n_sigma = static_cast<Eigen::Index>(b.vectors.size()) - b.n_uperp - b.n_u;
  return b;
}

double fisher_inner_hpd(const FisherSpec& spec, const CMat& R, const CMat& xi, const CMat& eta) {
  spec.validate();
  Eigen::LLT<CMat> llt(herm(R));
  if (llt.info() != Eigen::Success) throw DomainError("fisher_inner_hpd: R is not positive definite");
  const CMat a = llt.solve(xi);
  const CMat b = llt.solve(eta);
  const double tr_ab = (a.array() * b.transpose().array()).sum().real();
  return spec.n * spec.alpha_pp * tr_ab + spec.n * (spec.alpha_pp - 1.0) * a.trace().real() * b.trace().real();
}

double fisher_inner_product(const FisherSpec& spec, const ManifoldPoint& x, const TangentVector& xi,
                            const TangentVector& eta) {
  return fisher_inner_hpd(spec, embed_full(x).R, dembed(x, xi), dembed(x, eta));
}

FimBundle assemble_fim(const FisherSpec& spec, const MetricParams& params, const ManifoldPoint& x) {
  spec.validate();
  const TangentBasis basis = tangent_basis(params, x);
  const Eigen::Index p = x.p(), k = x.k();
  const Eigen::Index dim = static_cast<Eigen::Index>(basis.vectors.size());

  // With R = L L^H and A = L^-1 D L^-H (Hermitian), the Fisher metric is
  // n a Re<A_q, A_l> + n (a - 1) tr(A_q) tr(A_l); stack real and imaginary
  // parts of every A_q as the columns of V.
  Eigen::LLT<CMat> llt(embed_full(x).R);
  if (llt.info() != Eigen::Success) throw DomainError("assemble_fim: R is not positive definite");
  const auto L = llt.matrixL();
  RMat v(2 * p * p, dim);
  RVec tr(dim);
  for (Eigen::Index q = 0; q < dim; ++q) {
    const CMat d = dembed(x, basis.vectors[static_cast<std::size_t>(q)]);
    CMat a = L.solve(d);
    a = herm(CMat(L.solve(a.adjoint()).adjoint()));
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < p; ++i) {
        v(2 * (i + j * p), q) = a(i, j).real();
        v(2 * (i + j * p) + 1, q) = a(i, j).imag();
      }
    tr(q) = a.trace().real();
  }
  FimBundle b;
  b.F = spec.n * spec.alpha_pp * (v.transpose() * v) + spec.n * (spec.alpha_pp - 1.0) * (tr * tr.transpose());
  b.F = (0.5 * (b.F + b.F.transpose())).eval();
  b.n_uperp = basis.n_uperp;
  b.n_u = basis.n_u;
  b.n_sigma = basis.n_sigma;

  Eigen::SelfAdjointEigenSolver<RMat> es(b.F, Eigen::EigenvaluesOnly);
  b.F_eigenvalues = es.eigenvalues();
  const double cutoff = kRankCutoff * b.F_eigenvalues.cwiseAbs().maxCoeff();
  b.rank = (b.F_eigenvalues.array() > cutoff).count();
  const Eigen::Index expected = 2 * p * k - k * k;
  if (b.rank != expected) {
    throw std::logic_error("assemble_fim: rank of F is " + std::to_string(b.rank) + ", expected " +
                           std::to_string(expected));
  }

  b.F_Uperp = b.F.topLeftCorner(b.n_uperp, b.n_uperp);
  b.F_Sigma = b.F.bottomRightCorner(b.n_sigma, b.n_sigma);
  b.F_tilde = RMat::Zero(b.n_uperp + b.n_sigma, b.n_uperp + b.n_sigma);
  b.F_tilde.topLeftCorner(b.n_uperp, b.n_uperp) = b.F_Uperp;
  b.F_tilde.bottomRightCorner(b.n_sigma, b.n_sigma) = b.F_Sigma;
  return b;
}

namespace {

double trace_of_inverse(const RMat& a, const char* what) {
  Eigen::LLT<RMat> llt(a);
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + ": matrix is not positive definite");
  return llt.solve(RMat::Identity(a.rows(), a.cols())).trace();
}

}  // namespace

double bound_total(const FimBundle& b) {
  const double cutoff = kRankCutoff * b.F_eigenvalues.cwiseAbs().maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < b.F_eigenvalues.size(); ++i)
    if (b.F_eigenvalues(i) > cutoff) s += 1.0 / b.F_eigenvalues(i);
  return s;
}

double bound_total_tilde(const FimBundle& b) {
  return trace_of_inverse(b.F_Uperp, "bound_total_tilde") + trace_of_inverse(b.F_Sigma, "bound_total_tilde");
}

double bound_subspace(const FimBundle& b) { return trace_of_inverse(b.F_Uperp, "bound_subspace"); }

double bound_subspace_closed(const FisherSpec& spec, Eigen::Index p, Eigen::Index k, const RVec& sigma_eigs) {
  spec.validate();
  if (sigma_eigs.size() != k) throw DimensionError("bound_subspace_closed: expected k eigenvalues");
  if (!(sigma_eigs.array() > 0.0).all()) throw DomainError("bound_subspace_closed: eigenvalues must be positive");
  const double s = ((1.0 + sigma_eigs.array()) / sigma_eigs.array().square()).sum();
  return static_cast<double>(p - k) / (spec.n * spec.alpha_pp) * s;
}

std::vector<BoundRow> bound_rows(const FisherSpec& spec, const MetricParams& params, const ManifoldPoint& x) {
  const FimBundle b = assemble_fim(spec, params, x);
  const RVec eigs = hermitian_eig(x.Sigma).eigenvalues;
  const Eigen::Index p = x.p(), k = x.k();
  return {
      {p, k, spec.n, spec.alpha_pp, kBoundTotal, bound_total(b)},
      {p, k, spec.n, spec.alpha_pp, kBoundTotalTilde, bound_total_tilde(b)},
      {p, k, spec.n, spec.alpha_pp, kBoundSubspace, bound_subspace(b)},
      {p, k, spec.n, spec.alpha_pp, kBoundSubspaceClosed, bound_subspace_closed(spec, p, k, eigs)},
  };
}

void write_bounds_csv(std::ostream& os, const std::vector<BoundRow>& rows) {
  os << "p,k,n,alpha_pp,bound_name,value\n" << std::setprecision(17);
  for (const BoundRow& r : rows) {
    os << r.p << ',' << r.k << ',' << r.n << ',' << r.alpha_pp << ',' << r.name << ',' << r.value << '\n';
  }
}

}  // namespace spiked
