#pragma once

// Error measures on the spiked model and intrinsic Cramer-Rao bounds built
// from the Fisher information matrix in an orthonormal tangent basis.

#include <iosfwd>
#include <string>
#include <vector>

#include "spiked/manifold.hpp"

namespace spiked {

/// Thrown when the alignment of two subspaces degenerates (a principal
/// angle is numerically pi/2).
struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Max principal angle closer than this to pi/2 is rejected by divergence().
inline constexpr double kAlignmentTol = 1e-6;

/// alpha ||log(S^-1/2 M S^-1/2)||^2 + beta (log det(S^-1 M))^2 + ||Theta||^2
/// with M = O Oh^H Sigma_hat Oh O^H and U^H U_hat = O cos(Theta) Oh^H.
double divergence(const MetricParams& params, const ManifoldPoint& theta, const ManifoldPoint& theta_hat);

/// Squared Grassmann distance ||Theta||_F^2.
double subspace_error(const CMat& u, const CMat& u_hat);

struct FisherSpec {
  double n = 1.0;
  double alpha_pp = 1.0;

  void validate() const;
};

/// Density-generator constant: 1 for Gaussian data (dof >= kGaussianDof),
/// (p + d) / (p + d + 1) for complex Student-t with d degrees of freedom.
double alpha_pp_for(Eigen::Index p, double dof);

/// Orthonormal basis of the product tangent space, ordered
/// [U-perp block | U block | Sigma block].
struct TangentBasis {
  std::vector<TangentVector> vectors;
  Eigen::Index n_uperp = 0;  // 2 (p - k) k
  Eigen::Index n_u = 0;      // k^2
  Eigen::Index n_sigma = 0;  // k^2
};

TangentBasis tangent_basis(const MetricParams& params, const ManifoldPoint& x);

/// n a tr(R^-1 xi R^-1 eta) + n (a - 1) tr(R^-1 xi) tr(R^-1 eta), a = alpha_pp.
double fisher_inner_hpd(const FisherSpec& spec, const CMat& R, const CMat& xi, const CMat& eta);

/// Pullback of fisher_inner_hpd through (U, Sigma) -> I + U Sigma U^H.
double fisher_inner_product(const FisherSpec& spec, const ManifoldPoint& x, const TangentVector& xi,
                            const TangentVector& eta);

struct FimBundle {
  RMat F;         // 2pk x 2pk
  RMat F_tilde;   // blockdiag(F_Uperp, F_Sigma)
  RMat F_Uperp;
  RMat F_Sigma;
  RVec F_eigenvalues;  // ascending
  Eigen::Index n_uperp = 0, n_u = 0, n_sigma = 0;
  Eigen::Index rank = 0;
};

/// Relative eigenvalue cutoff used for the rank of F and its pseudo-inverse.
inline constexpr double kRankCutoff = 1e-10;

/// Assembles F entrywise in the basis of tangent_basis. Throws
/// std::logic_error if the numerical rank of F differs from 2pk - k^2.
FimBundle assemble_fim(const FisherSpec& spec, const MetricParams& params, const ManifoldPoint& x);

/// tr(F^+)
double bound_total(const FimBundle& b);
/// tr(F_tilde^-1); conjectured bound on the divergence error.
double bound_total_tilde(const FimBundle& b);
/// tr(F_Uperp^-1)
double bound_subspace(const FimBundle& b);
/// (p - k) / (n alpha_pp) sum_i (1 + s_i) / s_i^2
double bound_subspace_closed(const FisherSpec& spec, Eigen::Index p, Eigen::Index k, const RVec& sigma_eigs);

struct BoundRow {
  Eigen::Index p = 0, k = 0;
  double n = 0.0, alpha_pp = 0.0;
  std::string name;
  double value = 0.0;
};

inline const char* kBoundTotal = "tr_F_pinv";
inline const char* kBoundTotalTilde = "tr_Ftilde_inv_conjectured";
inline const char* kBoundSubspace = "tr_FUperp_inv";
inline const char* kBoundSubspaceClosed = "closed_form_subspace";

/// The four bounds at x.
std::vector<BoundRow> bound_rows(const FisherSpec& spec, const MetricParams& params, const ManifoldPoint& x);

/// Header p,k,n,alpha_pp,bound_name,value.
void write_bounds_csv(std::ostream& os, const std::vector<BoundRow>& rows);

}  // namespace spiked
