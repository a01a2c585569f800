#pragma once

// Quotient geometry of (St_{p,k} x HPD_k) / U_k, handled through
// representatives (U, Sigma) in the product manifold.
//
// Metric on the product (weights alpha > 0, beta > -alpha/k):
//   <xi, eta> = Re tr(xiU^H (I - UU^H/2) etaU)
//             + alpha tr(S^-1 xiS S^-1 etaS) + beta tr(S^-1 xiS) tr(S^-1 etaS)
// It is invariant under (U, S) -> (UO, O^H S O), so it descends to the
// quotient; horizontal vectors are the metric complement of the fibers.

#include "spiked/numkernel.hpp"
#include "spiked/random.hpp"

namespace spiked {

struct MetricParams {
  Eigen::Index p = 2;
  Eigen::Index k = 1;
  double alpha = 1.0;
  double beta = 0.0;

  /// Throws std::invalid_argument when the invariants are violated.
  void validate() const;

  static MetricParams gaussian(Eigen::Index p, Eigen::Index k) { return {p, k, 1.0, 0.0}; }
  /// alpha = (p+d)/(p+d+1), beta = alpha - 1.
  static MetricParams student_matched(Eigen::Index p, Eigen::Index k, double dof);
};

/// Representative (U, Sigma) of a point on the quotient.
struct ManifoldPoint {
  CMat U;      // p x k, orthonormal columns
  CMat Sigma;  // k x k, Hermitian positive definite

  Eigen::Index p() const { return U.rows(); }
  Eigen::Index k() const { return U.cols(); }

  /// Throws std::invalid_argument if U is not orthonormal to `tol` or
  /// Sigma is not Hermitian positive definite.
  void validate(double tol = 1e-10) const;
};

/// Element (xiU, xiSigma) of the product tangent space, or an ambient pair
/// when produced by Euclidean gradient code.
struct TangentVector {
  CMat xiU;
  CMat xiSigma;

  static TangentVector zero(Eigen::Index p, Eigen::Index k) {
    return {CMat::Zero(p, k), CMat::Zero(k, k)};
  }
  static TangentVector zero(const ManifoldPoint& x) { return zero(x.p(), x.k()); }

  TangentVector& operator+=(const TangentVector& o) {
    xiU += o.xiU;
    xiSigma += o.xiSigma;
    return *this;
  }
  TangentVector& operator-=(const TangentVector& o) {
    xiU -= o.xiU;
    xiSigma -= o.xiSigma;
    return *this;
  }
  TangentVector& operator*=(double s) {
    xiU *= s;
    xiSigma *= s;
    return *this;
  }
};

inline TangentVector operator+(TangentVector a, const TangentVector& b) { return a += b; }
inline TangentVector operator-(TangentVector a, const TangentVector& b) { return a -= b; }
inline TangentVector operator*(double s, TangentVector a) { return a *= s; }
inline TangentVector operator*(TangentVector a, double s) { return a *= s; }
inline TangentVector operator-(TangentVector a) { return a *= -1.0; }

/// Euclidean inner product Re tr(aU^H bU) + Re tr(aS^H bS) on C^{pxk} x C^{kxk}.
double euclidean_inner(const TangentVector& a, const TangentVector& b);

/// Element of the unitary group U_k acting on the fibers.
class Gauge {
 public:
  /// Throws std::invalid_argument if `o` is not unitary to 1e-10.
  explicit Gauge(CMat o);
  static Gauge identity(Eigen::Index k) { return Gauge(CMat::Identity(k, k)); }
  static Gauge random(Eigen::Index k, Rng& rng) { return Gauge(random_unitary(k, rng)); }

  const CMat& matrix() const { return o_; }
  Gauge inverse() const { return Gauge(o_.adjoint()); }

 private:
  CMat o_;
};

/// (UO, O^H Sigma O)
ManifoldPoint gauge_transport(const ManifoldPoint& x, const Gauge& g);
/// (xiU O, O^H xiSigma O)
TangentVector gauge_transport(const TangentVector& xi, const Gauge& g);

double inner(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
             const TangentVector& eta);
double norm(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi);

/// Metric-orthogonal projection of an ambient pair onto the product tangent
/// space: (ZU - U herm(U^H ZU), herm(ZSigma)).
TangentVector project_tangent(const ManifoldPoint& x, const TangentVector& z);

/// Skew-Hermitian Omega such that xi - (U Omega, Sigma Omega - Omega Sigma)
/// is horizontal. Solved elementwise in the eigenbasis of Sigma.
CMat horizontal_omega(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi);

/// (U Omega, Sigma Omega - Omega Sigma) for skew-Hermitian Omega.
TangentVector vertical_vector(const ManifoldPoint& x, const CMat& omega);

/// Metric-orthogonal projection of a tangent vector onto the horizontal
/// space.
TangentVector project_horizontal(const MetricParams& params, const ManifoldPoint& x,
                                 const TangentVector& xi);

/// || U^H xiU - 2 alpha (S^-1 xiS - xiS S^-1) ||_F; zero iff xi is horizontal.
double horizontality_residual(const MetricParams& params, const ManifoldPoint& x,
                              const TangentVector& xi);

/// Levi-Civita connection on the product manifold. `deta_xi` is the ambient
/// directional derivative D eta[xi] of the field eta, supplied by the caller.
TangentVector levi_civita_product(const MetricParams& params, const ManifoldPoint& x,
                                  const TangentVector& xi, const TangentVector& eta,
                                  const TangentVector& deta_xi);

/// Horizontal representative of the quotient connection.
TangentVector levi_civita(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
                          const TangentVector& eta, const TangentVector& deta_xi);

/// Geodesic through x with horizontal initial velocity xi, evaluated at t.
/// Throws std::invalid_argument if horizontality_residual(xi) > horizontal_tol.
ManifoldPoint geodesic(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi,
                       double t, double horizontal_tol = 1e-8);

/// Second-order retraction: polar factor of I + M + M^2/2 on the Stiefel
/// part and Sigma^{1/2} Gamma(Sigma^{-1/2} xiS Sigma^{-1/2}) Sigma^{1/2}.
ManifoldPoint retract(const MetricParams& params, const ManifoldPoint& x, const TangentVector& xi);

/// Riemannian gradient from the Euclidean gradient G = (GU, GSigma).
TangentVector egrad_to_rgrad(const MetricParams& params, const ManifoldPoint& x, const TangentVector& egrad);

/// Horizontal Riemannian Hessian-vector product from the Euclidean gradient
/// and the Euclidean Hessian-vector product hdir = D egrad[xi].
TangentVector ehess_to_rhess(const MetricParams& params, const ManifoldPoint& x, const TangentVector& egrad,
                             const TangentVector& hdir, const TangentVector& xi);

/// Re-orthonormalize U (polar factor) and re-symmetrize Sigma.
ManifoldPoint reorthonormalize(const ManifoldPoint& x);

/// U from the QR of a complex Gaussian; Sigma = exp(eps H), H random Hermitian.
ManifoldPoint random_point(const MetricParams& params, Rng& rng, double eps = 1.0);

/// Unit-norm tangent vector (horizontal when requested).
TangentVector random_tangent(const MetricParams& params, const ManifoldPoint& x, Rng& rng, bool horizontal);

}  // namespace spiked
