#include "spiked/model.hpp"

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

namespace spiked {

namespace {

Eigen::LLT<CMat> hpd_cholesky(const CMat& r, const char* what) {
  Eigen::LLT<CMat> llt(herm(r));
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + ": R is not Hermitian positive definite");
  return llt;
}

// Quadratic forms q_i = x_i^H R^-1 x_i.
RVec quadratic_forms(const Eigen::LLT<CMat>& llt, const CMat& x) {
  const CMat y = llt.matrixL().solve(x);
  return y.colwise().squaredNorm().transpose();
}

CMat hpd_inverse(const Eigen::LLT<CMat>& llt, Eigen::Index p) { return herm(llt.solve(CMat::Identity(p, p))); }

}  // namespace

SampleSet::SampleSet(CMat x) : x_(std::move(x)) {
  if (x_.cols() < 1 || x_.rows() < 1) throw std::invalid_argument("SampleSet: empty sample set");
  if (!x_.allFinite()) throw std::invalid_argument("SampleSet: non-finite entry");
  for (Eigen::Index i = 0; i < x_.cols(); ++i) {
    if (x_.col(i).squaredNorm() == 0.0) {
      throw std::invalid_argument("SampleSet: sample " + std::to_string(i) + " is the zero vector");
    }
  }
}

void write_samples_csv(std::ostream& os, const SampleSet& data) {
  const Eigen::Index p = data.p();
  for (Eigen::Index j = 0; j < p; ++j) {
    os << (j ? "," : "") << "re_x" << (j + 1) << ",im_x" << (j + 1);
  }
  os << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const cd v = data.X()(j, i);
      os << (j ? "," : "") << v.real() << ',' << v.imag();
    }
    os << '\n';
  }
}

SampleSet read_samples_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("missing header row", 1);
  ++line_no;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const char* begin = cell.c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      while (end && (*end == ' ' || *end == '\t')) ++end;
      if (end == begin || *end != '\0') throw ParseError("not a number: '" + cell + "'", line_no);
      vals.push_back(v);
    }
    if (vals.empty() || vals.size() % 2 != 0) {
      throw ParseError("expected an even number of columns (re/im pairs), got " + std::to_string(vals.size()), line_no);
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " columns, got " + std::to_string(vals.size()), line_no);
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::invalid_argument("samples CSV contains no data rows");
  const Eigen::Index p = static_cast<Eigen::Index>(width / 2);
  CMat x(p, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(j, static_cast<Eigen::Index>(i)) = cd(rows[i][2 * j], rows[i][2 * j + 1]);
  return SampleSet(std::move(x));
}

CMat embed(const ManifoldPoint& x) { return herm(CMat(x.U * x.Sigma * x.U.adjoint())); }

SpikedCovariance embed_full(const ManifoldPoint& x) {
  CMat r = embed(x);
  r.diagonal().array() += 1.0;
  return {std::move(r)};
}

CMat dembed(const ManifoldPoint& x, const TangentVector& xi) {
  const CMat a = x.U * x.Sigma * xi.xiU.adjoint();
  return herm(CMat(a + a.adjoint() + x.U * xi.xiSigma * x.U.adjoint()));
}

namespace {

template <typename Real>
using ExtMat = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Real>
Real tyler_cost_impl(const ExtMat<Real>& r, const SampleSet& data) {
  using C = std::complex<Real>;
  if (r.rows() != data.p() || r.cols() != data.p()) throw DimensionError("tyler_cost_hpd: R does not match the data");
  Eigen::LLT<ExtMat<Real>> llt(r);
  if (llt.info() != Eigen::Success) throw DomainError("tyler_cost_hpd: R is not Hermitian positive definite");
  const ExtMat<Real> y = llt.matrixL().solve(data.X().template cast<C>());
  const auto q = y.colwise().squaredNorm();
  Real logq = 0, logdet = 0;
  for (Eigen::Index i = 0; i < q.size(); ++i) logq += std::log(q(i));
  for (Eigen::Index i = 0; i < r.rows(); ++i) logdet += std::log(std::real(llt.matrixLLT()(i, i)));
  return static_cast<Real>(data.p()) * logq + static_cast<Real>(data.n()) * 2 * logdet;
}

}  // namespace

double tyler_cost_hpd(const CMat& R, const SampleSet& data) { return tyler_cost_impl<double>(herm(R), data); }

long double tyler_cost_hpd_extended(const CMat& R, const SampleSet& data) {
  return tyler_cost_impl<long double>(herm(R).cast<std::complex<long double>>(), data);
}

double tyler_cost(const ManifoldPoint& x, const SampleSet& data) { return tyler_cost_hpd(embed_full(x).R, data); }

long double tyler_cost_extended(const ManifoldPoint& x, const SampleSet& data) {
  // The embedding is formed in extended precision as well; rounding it to
  // double first would reintroduce noise at the double rounding level.
  using C = std::complex<long double>;
  const ExtMat<long double> u = x.U.cast<C>();
  ExtMat<long double> r = u * herm(x.Sigma).cast<C>() * u.adjoint();
  r = (0.5L * (r + r.adjoint())).eval();
  r.diagonal().array() += 1.0L;
  return tyler_cost_impl<long double>(r, data);
}

CMat tyler_psi(const CMat& R, const SampleSet& data) {
  const auto llt = hpd_cholesky(R, "tyler_psi");
  const RVec q = quadratic_forms(llt, data.X());
  const CMat& x = data.X();
  return herm(CMat(x * q.cwiseInverse().asDiagonal() * x.adjoint()));
}

CMat tyler_dpsi(const CMat& R, const SampleSet& data, const CMat& xi) {
  const auto llt = hpd_cholesky(R, "tyler_dpsi");
  const CMat& x = data.X();
  const CMat w = llt.solve(x);
  const RVec q = (x.array().conjugate() * w.array()).colwise().sum().real().transpose();
  const RVec c = (w.array().conjugate() * (xi * w).array()).colwise().sum().real().transpose();
  const RVec coef = c.array() / q.array().square();
  return herm(CMat(x * coef.asDiagonal() * x.adjoint()));
}

CMat tyler_egrad_hpd(const CMat& R, const SampleSet& data) {
  const auto llt = hpd_cholesky(R, "tyler_egrad_hpd");
  const Eigen::Index p = data.p();
  const CMat ri = hpd_inverse(llt, p);
  const CMat psi = tyler_psi(R, data);
  return herm(CMat(static_cast<double>(data.n()) * ri - static_cast<double>(p) * ri * psi * ri));
}

CMat tyler_ehess_hpd(const CMat& R, const SampleSet& data, const CMat& xi) {
  const auto llt = hpd_cholesky(R, "tyler_ehess_hpd");
  const Eigen::Index p = data.p();
  const double pd = static_cast<double>(p), nd = static_cast<double>(data.n());
  const CMat ri = hpd_inverse(llt, p);
  const CMat psi = tyler_psi(R, data);
  const CMat dpsi = tyler_dpsi(R, data, xi);
  const CMat first = 2.0 * pd * ri * herm(CMat(xi * ri * psi)) * ri;
  const CMat second = ri * (pd * dpsi + nd * xi) * ri;
  return herm(CMat(first - second));
}

TangentVector lift_egrad(const ManifoldPoint& x, const CMat& gpp) {
  const CMat gu = gpp * x.U;
  return {2.0 * gu * x.Sigma, herm(CMat(x.U.adjoint() * gu))};
}

TangentVector lift_ehess(const ManifoldPoint& x, const CMat& gpp, const CMat& hpp, const TangentVector& xi) {
  const CMat hu = 2.0 * hpp * x.U * x.Sigma + 2.0 * gpp * (xi.xiU * x.Sigma + x.U * xi.xiSigma);
  const CMat ug_xi = x.U.adjoint() * gpp * xi.xiU;
  const CMat hs = x.U.adjoint() * hpp * x.U + ug_xi + ug_xi.adjoint();
  return {hu, herm(hs)};
}

SampleSet sample_student_t(const StudentTParams& params, Eigen::Index n, Rng& rng) {
  if (!(params.dof > 0.0)) throw std::invalid_argument("sample_student_t: dof must be positive");
  const CMat& r = params.scatter.R;
  const Eigen::Index p = r.rows();
  const CMat root = hermitian_matfun(r, MatFun::Sqrt);
  const bool gaussian = params.dof >= kGaussianDof;
  std::gamma_distribution<double> gamma(params.dof, 1.0);
  CMat x(p, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = gaussian ? params.dof : gamma(rng);
    const CMat z = complex_gaussian(p, 1, rng);
    x.col(i) = std::sqrt(params.dof / s) * (root * z);
  }
  return SampleSet(std::move(x));
}

SpikedTruth make_spiked(Eigen::Index p, Eigen::Index k, double sigma, double cond, Rng& rng) {
  if (k < 1 || p <= k) throw std::invalid_argument("make_spiked: need p > k >= 1");
  if (!(cond >= 1.0)) throw std::invalid_argument("make_spiked: condition number must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_spiked: spike-to-noise ratio must be positive");
  CMat u = thin_qr(complex_gaussian(p, k, rng)).Q;
  RVec d(k);
  if (k == 1) {
    d(0) = 1.0;
  } else {
    const double lo = 1.0 / std::sqrt(cond), hi = std::sqrt(cond);
    std::uniform_real_distribution<double> unif(lo, hi);
    d(0) = lo;
    d(1) = hi;
    for (Eigen::Index i = 2; i < k; ++i) d(i) = unif(rng);
    d *= static_cast<double>(k) / d.sum();
  }
  CMat s = CMat::Zero(k, k);
  s.diagonal() = (sigma * d).cast<cd>();
  ManifoldPoint point{std::move(u), std::move(s)};
  SpikedCovariance cov = embed_full(point);
  return {std::move(point), std::move(cov)};
}

ManifoldPoint pscm(const SampleSet& data, Eigen::Index k) {
  const Eigen::Index p = data.p();
  if (k < 1 || k >= p) throw std::invalid_argument("pscm: need 1 <= k < p");
  const CMat scm = data.X() * data.X().adjoint() / static_cast<double>(data.n());
  const HermitianEig es = hermitian_eig(scm);
  CMat u(p, k);
  CMat s = CMat::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index src = p - 1 - i;  // descending
    u.col(i) = es.eigenvectors.col(src);
    s(i, i) = std::max(es.eigenvalues(src) - 1.0, kPscmFloor);
  }
  return {std::move(u), std::move(s)};
}

ManifoldPoint pscm_init(const SampleSet& data, Eigen::Index k) {
  ManifoldPoint x = pscm(data, k);
  x.Sigma = CMat::Identity(k, k);
  return x;
}

}  // namespace spiked
