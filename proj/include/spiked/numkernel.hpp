#pragma once

// Complex Hermitian linear-algebra kernels shared by the rest of the library.
//
// Every function takes Eigen expressions (MatrixBase<Derived>) and returns a
// plain dense matrix of the same scalar type, so callers can pass products or
// blocks without materializing them first.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace spiked {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

/// Shape mismatch between arguments.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a matrix function (e.g. log of a
/// non-positive-definite matrix).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A factorization degenerated (singular polar factor, rank collapse).
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Relative tolerance applied to eigen/singular values throughout.
inline constexpr double kRelTol = 1e-12;

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

/// (A + A^H) / 2
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> herm(
    const Eigen::MatrixBase<Derived>& a) {
  require_square(a, "herm");
  using M = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const M x = a;
  M out = 0.5 * (x + x.adjoint());
  // Exact symmetry of the stored entries; the diagonal is made real.
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    out(j, j) = Eigen::numext::real(out(j, j));
    for (Eigen::Index i = j + 1; i < out.rows(); ++i) out(j, i) = Eigen::numext::conj(out(i, j));
  }
  return out;
}

/// (A - A^H) / 2
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> skewh(
    const Eigen::MatrixBase<Derived>& a) {
  require_square(a, "skewh");
  using M = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const M x = a;
  M out = 0.5 * (x - x.adjoint());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    out(j, j) -= Eigen::numext::real(out(j, j));
    for (Eigen::Index i = j + 1; i < out.rows(); ++i) out(j, i) = -Eigen::numext::conj(out(i, j));
  }
  return out;
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
struct HermitianEig {
  RVec eigenvalues;
  CMat eigenvectors;
};

template <typename Derived>
HermitianEig hermitian_eig(const Eigen::MatrixBase<Derived>& a) {
  require_square(a, "hermitian_eig");
  const CMat h = herm(a);
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  if (es.info() != Eigen::Success) throw DegeneracyError("hermitian_eig: solver did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Scalar functions applied through the spectral decomposition.
enum class MatFun { Exp, Log, Sqrt, InvSqrt, Power };

namespace detail {

inline bool needs_positive(MatFun f) { return f != MatFun::Exp; }

inline double apply_scalar(MatFun f, double x, double t) {
  switch (f) {
    case MatFun::Exp: return std::exp(x);
    case MatFun::Log: return std::log(x);
    case MatFun::Sqrt: return std::sqrt(x);
    case MatFun::InvSqrt: return 1.0 / std::sqrt(x);
    case MatFun::Power: return std::exp(t * std::log(x));
  }
  return x;
}

}  // namespace detail

/// V f(Λ) V^H for Hermitian A. `t` is the exponent for MatFun::Power.
/// Log, Sqrt, InvSqrt and Power require A positive definite relative to its
/// largest eigenvalue magnitude.
template <typename Derived>
CMat hermitian_matfun(const Eigen::MatrixBase<Derived>& a, MatFun f, double t = 1.0) {
  const HermitianEig es = hermitian_eig(a);
  const RVec& lam = es.eigenvalues;
  if (lam.size() == 0) return CMat(0, 0);
  if (detail::needs_positive(f)) {
    const double scale = lam.cwiseAbs().maxCoeff();
    if (!(lam(0) > kRelTol * scale) || !(scale > 0.0)) {
      throw DomainError("hermitian_matfun: matrix is not positive definite (smallest eigenvalue " +
                        std::to_string(lam(0)) + ")");
    }
  }
  RVec fl(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) fl(i) = detail::apply_scalar(f, lam(i), t);
  return herm(es.eigenvectors * fl.asDiagonal() * es.eigenvectors.adjoint());
}

/// Second-order exponential surrogate I + X + X^2/2.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gamma2(
    const Eigen::MatrixBase<Derived>& x) {
  require_square(x, "gamma2");
  using M = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const M m = x;
  return M::Identity(m.rows(), m.cols()) + m + 0.5 * (m * m);
}

/// exp(S) for skew-Hermitian S, via the Hermitian matrix iS. Exactly unitary
/// up to rounding.
template <typename Derived>
CMat skew_hermitian_exp(const Eigen::MatrixBase<Derived>& s) {
  require_square(s, "skew_hermitian_exp");
  const CMat h = cd(0.0, 1.0) * CMat(s);
  const HermitianEig es = hermitian_eig(h);
  // S = -i H, so exp(S) = V exp(-i λ) V^H.
  CVec ph(es.eigenvalues.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::exp(cd(0.0, -es.eigenvalues(i)));
  return es.eigenvectors * ph.asDiagonal() * es.eigenvectors.adjoint();
}

struct ThinQR {
  CMat Q;  // p x k, orthonormal columns
  CMat R;  // k x k, upper triangular, real nonnegative diagonal
};

/// Householder thin QR with the diagonal of R made real and nonnegative.
/// Rank-deficient input is allowed; only Q R = A is promised then.
template <typename Derived>
ThinQR thin_qr(const Eigen::MatrixBase<Derived>& a) {
  const Eigen::Index p = a.rows(), k = a.cols();
  if (p < k) throw DimensionError("thin_qr: need rows >= cols");
  const CMat m = a;
  Eigen::HouseholderQR<CMat> qr(m);
  CMat q = qr.householderQ() * CMat::Identity(p, k);
  CMat r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) {
      const cd phase = r(j, j) / mag;
      q.col(j) *= phase;
      r.row(j) *= std::conj(phase);
      r(j, j) = mag;
    } else {
      r(j, j) = 0.0;
    }
  }
  return {std::move(q), std::move(r)};
}

/// Orthonormal completion: p x (p-k) matrix whose columns span the
/// orthogonal complement of the columns of U (U must have orthonormal
/// columns). Deterministic: trailing columns of the Householder Q of U.
template <typename Derived>
CMat orthonormal_complement(const Eigen::MatrixBase<Derived>& u) {
  const Eigen::Index p = u.rows(), k = u.cols();
  if (p < k) throw DimensionError("orthonormal_complement: need rows >= cols");
  const CMat m = u;
  Eigen::HouseholderQR<CMat> qr(m);
  const CMat full = qr.householderQ() * CMat::Identity(p, p);
  return full.rightCols(p - k);
}

/// Unitary factor W V^H of the polar decomposition A = (W V^H)(V S V^H).
template <typename Derived>
CMat polar_unitary_factor(const Eigen::MatrixBase<Derived>& a) {
  require_square(a, "polar_unitary_factor");
  const CMat m = a;
  if (m.size() == 0) return m;
  Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  if (!(s(s.size() - 1) >= 1e-12 * s(0)) || !(s(0) > 0.0)) {
    throw DegeneracyError("polar_unitary_factor: matrix is numerically singular (min singular value " +
                          std::to_string(s(s.size() - 1)) + ")");
  }
  return svd.matrixU() * svd.matrixV().adjoint();
}

/// U^H Û = O cos(Θ) Ô^H with angles ascending in [0, π/2].
struct PrincipalAngles {
  CMat O;
  RVec theta;
  CMat O_hat;
};

template <typename DA, typename DB>
PrincipalAngles principal_angles(const Eigen::MatrixBase<DA>& u, const Eigen::MatrixBase<DB>& u_hat) {
  if (u.rows() != u_hat.rows() || u.cols() != u_hat.cols()) {
    throw DimensionError("principal_angles: bases must have the same shape");
  }
  const CMat c = u.adjoint() * u_hat;
  Eigen::JacobiSVD<CMat> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Singular values come out descending, so the angles are ascending.
  RVec theta(svd.singularValues().size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) = std::acos(std::clamp(svd.singularValues()(i), 0.0, 1.0));
  }
  return {svd.matrixU(), std::move(theta), svd.matrixV()};
}

/// Re tr(A^H B)
template <typename DA, typename DB>
double real_inner(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  return (a.array().conjugate() * b.array()).real().sum();
}

}  // namespace spiked
