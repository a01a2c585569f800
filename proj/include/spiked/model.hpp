#pragma once

// Spiked covariance model R = I_p + U Sigma U^H, Tyler's cost and its
// derivatives, the complex Student-t sampler and the projected sample
// covariance baseline.

#include <iosfwd>
#include <string>

#include "spiked/manifold.hpp"

namespace spiked {

/// n complex observations of dimension p, stored as the columns of X.
class SampleSet {
 public:
  /// Throws std::invalid_argument on an empty set, a zero column or a
  /// non-finite entry.
  explicit SampleSet(CMat x);

  Eigen::Index p() const { return x_.rows(); }
  Eigen::Index n() const { return x_.cols(); }
  const CMat& X() const { return x_; }

 private:
  CMat x_;
};

/// CSV with a header row; one row per sample with 2p columns
/// re(x_1), im(x_1), ..., re(x_p), im(x_p).
void write_samples_csv(std::ostream& os, const SampleSet& data);
/// Throws ParseError (with the offending line number) on malformed input.
SampleSet read_samples_csv(std::istream& is);

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

/// R = I_p + H, H Hermitian PSD.
struct SpikedCovariance {
  CMat R;
};

struct StudentTParams {
  double dof = 3.0;
  SpikedCovariance scatter;
};

/// dof at or above this value draws exact complex Gaussian samples.
inline constexpr double kGaussianDof = 1e6;

/// U Sigma U^H
CMat embed(const ManifoldPoint& x);
/// I_p + U Sigma U^H
SpikedCovariance embed_full(const ManifoldPoint& x);
/// U Sigma xiU^H + xiU Sigma U^H + U xiSigma U^H
CMat dembed(const ManifoldPoint& x, const TangentVector& xi);

/// p sum_i log(x_i^H R^-1 x_i) + n log det R, through one Cholesky of R.
double tyler_cost_hpd(const CMat& R, const SampleSet& data);
double tyler_cost(const ManifoldPoint& x, const SampleSet& data);

/// Same costs accumulated in long double. Differences of nearby costs stay
/// accurate well below the rounding level of the double-precision value.
long double tyler_cost_hpd_extended(const CMat& R, const SampleSet& data);
long double tyler_cost_extended(const ManifoldPoint& x, const SampleSet& data);

/// sum_i x_i x_i^H / (x_i^H R^-1 x_i)
CMat tyler_psi(const CMat& R, const SampleSet& data);
/// Directional derivative of tyler_psi at R along the Hermitian xi.
CMat tyler_dpsi(const CMat& R, const SampleSet& data, const CMat& xi);

/// R^-1 (n R - p Psi(R)) R^-1
CMat tyler_egrad_hpd(const CMat& R, const SampleSet& data);
/// 2p R^-1 herm(xi R^-1 Psi) R^-1 - R^-1 (p DPsi[xi] + n xi) R^-1
CMat tyler_ehess_hpd(const CMat& R, const SampleSet& data, const CMat& xi);

/// Euclidean gradient of L(I + U Sigma U^H) from the gradient Gpp of L at
/// I + U Sigma U^H: (2 Gpp U Sigma, U^H Gpp U).
TangentVector lift_egrad(const ManifoldPoint& x, const CMat& gpp);
/// Euclidean Hessian-vector product of the lifted cost; hpp is the HPD
/// Hessian applied to dembed(x, xi).
TangentVector lift_ehess(const ManifoldPoint& x, const CMat& gpp, const CMat& hpp, const TangentVector& xi);

/// x_i = sqrt(d / s_i) R^{1/2} z_i, z_i standard complex Gaussian,
/// s_i ~ Gamma(d, 1). The scatter matrix is R, E[x x^H] = d/(d-1) R.
SampleSet sample_student_t(const StudentTParams& params, Eigen::Index n, Rng& rng);

struct SpikedTruth {
  ManifoldPoint point;  // (U, sigma * Sigma)
  SpikedCovariance covariance;
};

/// Random spiked model: U uniform on the Stiefel manifold, Sigma diagonal
/// with extremes 1/sqrt(c) and sqrt(c), interior entries uniform in between,
/// normalized to trace k, scaled by the spike-to-noise ratio sigma.
SpikedTruth make_spiked(Eigen::Index p, Eigen::Index k, double sigma, double cond, Rng& rng);

/// Floor applied to the projected sample covariance spikes.
inline constexpr double kPscmFloor = 1e-8;

/// Frobenius projection of the sample covariance onto I_p + {rank-k PSD}:
/// top-k eigenvectors with spikes max(lambda_i - 1, floor).
ManifoldPoint pscm(const SampleSet& data, Eigen::Index k);

/// (U_pSCM, I_k), the starting point for the iterative estimators.
ManifoldPoint pscm_init(const SampleSet& data, Eigen::Index k);

}  // namespace spiked
