#include <gtest/gtest.h>

#include <array>
#include <sstream>

#include "spiked/crb.hpp"
#include "spiked/model.hpp"
#include "test_util.hpp"

using namespace spiked;
using spiked::test::random_hpd;
using spiked::test::rel_err;

namespace {

using Shape = std::array<Eigen::Index, 2>;

const double kAlphas[][2] = {{1.0, 0.0}, {0.7, -0.05}, {2.5, 0.4}, {19.0 / 20.0, -1.0 / 20.0}};

ManifoldPoint point_with_spectrum(Eigen::Index p, const RVec& s, Rng& rng) {
  const Eigen::Index k = s.size();
  const CMat o = random_unitary(k, rng);
  return {thin_qr(complex_gaussian(p, k, rng)).Q, herm(CMat(o * s.cast<cd>().asDiagonal() * o.adjoint()))};
}

RVec random_spectrum(Eigen::Index k, Rng& rng) {
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  RVec s(k);
  for (Eigen::Index i = 0; i < k; ++i) s(i) = std::exp(u(rng));
  return s;
}

}  // namespace

TEST(Divergence, Examples) {
  Rng rng(1);
  for (const auto& ab : kAlphas) {
    const MetricParams params{7, 3, ab[0], ab[1]};
    const ManifoldPoint x = random_point(params, rng);
    EXPECT_NEAR(divergence(params, x, x), 0.0, 1e-14);
    const ManifoldPoint y{x.U, std::exp(1.0) * x.Sigma};
    EXPECT_NEAR(divergence(params, x, y), params.alpha * 3 + params.beta * 9, 1e-12);
  }
}

TEST(Divergence, GaugeInvariantSymmetricNonnegative) {
  Rng rng(2);
  for (int t = 0; t < 40; ++t) {
    const auto& ab = kAlphas[t % 4];
    const MetricParams params{6, 2, ab[0], ab[1]};
    const ManifoldPoint x = random_point(params, rng);
    const ManifoldPoint y = retract(params, x, 0.8 * random_tangent(params, x, rng, false));
    const double d = divergence(params, x, y);
    EXPECT_GE(d, 0.0);
    const double dg =
        divergence(params, gauge_transport(x, Gauge::random(2, rng)), gauge_transport(y, Gauge::random(2, rng)));
    EXPECT_LT(std::abs(d - dg), 1e-9 * std::max(1.0, d));
    EXPECT_LT(std::abs(d - divergence(params, y, x)), 1e-9 * std::max(1.0, d));
    if (params.beta >= 0.0) { EXPECT_LE(subspace_error(x.U, y.U), d + 1e-12); }
  }
}

TEST(Divergence, ZeroOnlyOnSameClass) {
  Rng rng(3);
  const MetricParams params{6, 2, 1.0, 0.0};
  const ManifoldPoint x = random_point(params, rng);
  EXPECT_LT(divergence(params, x, gauge_transport(x, Gauge::random(2, rng))), 1e-12);
  const ManifoldPoint y = retract(params, x, 1e-3 * random_tangent(params, x, rng, true));
  EXPECT_GT(divergence(params, x, y), 1e-8);
}

TEST(Divergence, RejectsOrthogonalSubspaces) {
  const MetricParams params{2, 1, 1.0, 0.0};
  ManifoldPoint a{CMat::Zero(2, 1), CMat::Identity(1, 1)}, b = a;
  a.U(0, 0) = 1.0;
  b.U(1, 0) = 1.0;
  EXPECT_THROW(divergence(params, a, b), AlignmentError);
}

TEST(SubspaceError, Examples) {
  Rng rng(4);
  const CMat u = thin_qr(complex_gaussian(6, 3, rng)).Q;
  EXPECT_LT(subspace_error(u, CMat(u * random_unitary(3, rng))), 1e-12);
  CMat a = CMat::Zero(2, 1), b = CMat::Zero(2, 1);
  a(0, 0) = 1.0;
  b(1, 0) = 1.0;
  EXPECT_NEAR(subspace_error(a, b), M_PI * M_PI / 4, 1e-14);
  for (int t = 0; t < 10; ++t) {
    const CMat v = thin_qr(complex_gaussian(6, 3, rng)).Q;
    Eigen::BDCSVD<CMat> svd(CMat(u.adjoint() * v));
    double expect = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) expect += std::pow(std::acos(std::min(1.0, svd.singularValues()(i))), 2);
    const double e = subspace_error(u, v);
    EXPECT_NEAR(e, expect, 1e-12);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 3 * M_PI * M_PI / 4);
  }
}

TEST(AlphaPp, Mapping) {
  EXPECT_DOUBLE_EQ(alpha_pp_for(16, 3.0), 19.0 / 20.0);
  EXPECT_DOUBLE_EQ(alpha_pp_for(16, 100.0), 116.0 / 117.0);
  EXPECT_DOUBLE_EQ(alpha_pp_for(16, kGaussianDof), 1.0);
  EXPECT_THROW(alpha_pp_for(16, 0.0), std::invalid_argument);
}

TEST(TangentBasis, CountAndGram) {
  Rng rng(5);
  for (const auto& ab : kAlphas) {
    for (const Shape& pk : {Shape{5, 2}, Shape{6, 4}, Shape{4, 1}}) {
      const Eigen::Index p = pk[0], k = pk[1];
      const MetricParams params{p, k, ab[0], ab[1]};
      const ManifoldPoint x = random_point(params, rng);
      const TangentBasis b = tangent_basis(params, x);
      ASSERT_EQ(static_cast<Eigen::Index>(b.vectors.size()), 2 * p * k);
      EXPECT_EQ(b.n_uperp, 2 * (p - k) * k);
      EXPECT_EQ(b.n_u, k * k);
      EXPECT_EQ(b.n_sigma, k * k);
      RMat gram(2 * p * k, 2 * p * k);
      for (std::size_t i = 0; i < b.vectors.size(); ++i)
        for (std::size_t j = 0; j < b.vectors.size(); ++j)
          gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              inner(params, x, b.vectors[i], b.vectors[j]);
      EXPECT_LT((gram - RMat::Identity(2 * p * k, 2 * p * k)).cwiseAbs().maxCoeff(), 1e-9);
      for (const TangentVector& v : b.vectors) EXPECT_LT(herm(CMat(x.U.adjoint() * v.xiU)).norm(), 1e-12);
    }
  }
}

TEST(TangentBasis, ScalarSigmaElement) {
  const double a = 1.7, be = 0.3, s = 2.5;
  const MetricParams params{2, 1, a, be};
  ManifoldPoint x{CMat::Zero(2, 1), s * CMat::Identity(1, 1)};
  x.U(0, 0) = 1.0;
  const TangentBasis b = tangent_basis(params, x);
  const TangentVector& e = b.vectors.back();
  EXPECT_NEAR(e.xiSigma(0, 0).real(), s / std::sqrt(a + be), 1e-14);
  EXPECT_NEAR(inner(params, x, e, e), 1.0, 1e-14);
}

TEST(FisherInner, Examples) {
  const FisherSpec spec{100.0, 1.0};
  EXPECT_NEAR(fisher_inner_hpd(spec, CMat::Identity(4, 4), CMat::Identity(4, 4), CMat::Identity(4, 4)), 400.0, 1e-10);
  Rng rng(6);
  const CMat r = random_hpd(4, rng);
  CMat xi = random_hermitian(4, rng);
  xi -= (xi.trace() / 4.0) * CMat::Identity(4, 4);
  const CMat eta = random_hermitian(4, rng);
  const CMat ri = r.inverse();
  EXPECT_NEAR(fisher_inner_hpd(spec, r, xi, eta), 100.0 * (ri * xi * ri * eta).trace().real(), 1e-9);
}

TEST(FisherInner, SymmetricBilinear) {
  Rng rng(7);
  const FisherSpec spec{50.0, 0.9};
  const CMat r = random_hpd(5, rng);
  for (int t = 0; t < 10; ++t) {
    const CMat a = random_hermitian(5, rng), b = random_hermitian(5, rng), c = random_hermitian(5, rng);
    const double ab = fisher_inner_hpd(spec, r, a, b);
    EXPECT_NEAR(ab, fisher_inner_hpd(spec, r, b, a), 1e-10 * std::max(1.0, std::abs(ab)));
    const double lin = fisher_inner_hpd(spec, r, CMat(2.0 * a + c), b);
    EXPECT_NEAR(lin, 2.0 * ab + fisher_inner_hpd(spec, r, c, b), 1e-10 * std::max(1.0, std::abs(lin)));
    EXPECT_GT(fisher_inner_hpd(spec, r, a, a), 0.0);
  }
  EXPECT_THROW(fisher_inner_hpd(FisherSpec{0.5, 1.0}, r, r, r), std::invalid_argument);
  EXPECT_THROW(fisher_inner_hpd(FisherSpec{10.0, 0.0}, r, r, r), std::invalid_argument);
}

TEST(FisherInnerProduct, ZeroGaugeAndVerticalKernel) {
  Rng rng(8);
  const MetricParams params{6, 2, 1.0, 0.0};
  const FisherSpec spec{100.0, 0.95};
  for (int t = 0; t < 10; ++t) {
    const ManifoldPoint x = random_point(params, rng);
    const TangentVector xi = random_tangent(params, x, rng, false);
    const TangentVector eta = random_tangent(params, x, rng, false);
    EXPECT_EQ(fisher_inner_product(spec, x, TangentVector::zero(x), eta), 0.0);
    const Gauge g = Gauge::random(2, rng);
    const double a = fisher_inner_product(spec, x, xi, eta);
    const double b = fisher_inner_product(spec, gauge_transport(x, g), gauge_transport(xi, g), gauge_transport(eta, g));
    EXPECT_LT(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(a)));
    const TangentVector v = vertical_vector(x, skewh(complex_gaussian(2, 2, rng)));
    EXPECT_LT(std::abs(fisher_inner_product(spec, x, v, eta)), 1e-10);
  }
}

TEST(AssembleFim, RankStructureAndEntries) {
  Rng rng(9);
  int idx = 0;
  for (const Shape& pk : {Shape{6, 2}, Shape{5, 3}, Shape{8, 1}}) {
    const auto& ab = kAlphas[idx++ % 4];
    const Eigen::Index p = pk[0], k = pk[1];
    const MetricParams params{p, k, ab[0], ab[1]};
    const FisherSpec spec{100.0, 0.9};
    const ManifoldPoint x = point_with_spectrum(p, random_spectrum(k, rng), rng);
    const FimBundle b = assemble_fim(spec, params, x);
    EXPECT_EQ(b.rank, 2 * p * k - k * k);
    EXPECT_LT((b.F - b.F.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::Index nu = b.n_uperp, rest = 2 * p * k - nu;
    EXPECT_LT(b.F.topRightCorner(nu, rest).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(b.F.bottomLeftCorner(rest, nu).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(b.F_Uperp, b.F.topLeftCorner(nu, nu));
    EXPECT_EQ(b.F_Sigma, b.F.bottomRightCorner(k * k, k * k));
    // Independent re-evaluation of individual entries.
    const TangentBasis basis = tangent_basis(params, x);
    for (int s = 0; s < 20; ++s) {
      const auto q = static_cast<std::size_t>(rng() % basis.vectors.size());
      const auto l = static_cast<std::size_t>(rng() % basis.vectors.size());
      const double e = fisher_inner_product(spec, x, basis.vectors[q], basis.vectors[l]);
      EXPECT_NEAR(b.F(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(l)), e, 1e-9 * std::max(1.0, std::abs(e)));
    }
  }
}

TEST(AssembleFim, DiagonalSigmaGivesDiagonalUperpBlock) {
  Rng rng(10);
  const Eigen::Index p = 7, k = 3;
  const RVec s = random_spectrum(k, rng);
  const ManifoldPoint x{thin_qr(complex_gaussian(p, k, rng)).Q, s.cast<cd>().asDiagonal()};
  const FisherSpec spec{80.0, 0.9};
  const FimBundle b = assemble_fim(spec, MetricParams{p, k, 1.0, 0.0}, x);
  // Basis order within the block: for each complement index i, for each
  // column j, the real then imaginary direction.
  RVec expect(b.n_uperp);
  Eigen::Index q = 0;
  for (Eigen::Index i = 0; i < p - k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      for (int part = 0; part < 2; ++part) expect(q++) = 2 * spec.n * spec.alpha_pp * s(j) * s(j) / (1 + s(j));
  EXPECT_LT((RMat(b.F_Uperp) - RMat(expect.asDiagonal())).cwiseAbs().maxCoeff(), 1e-9 * expect.maxCoeff());
}

TEST(Bounds, ClosedFormIsotropicExample) {
  const FisherSpec spec{100.0, 1.0};
  EXPECT_NEAR(bound_subspace_closed(spec, 16, 4, RVec::Ones(4)), 0.96, 1e-15);
  Rng rng(11);
  const ManifoldPoint x = point_with_spectrum(16, RVec::Ones(4), rng);
  const FimBundle b = assemble_fim(spec, MetricParams{16, 4, 1.0, 0.0}, x);
  EXPECT_NEAR(bound_subspace(b), 0.96, 1e-10);
  EXPECT_LT(bound_subspace_closed(spec, 16, 4, RVec::Constant(4, 1e6)),
            bound_subspace_closed(spec, 16, 4, RVec::Constant(4, 1e3)));
  EXPECT_THROW(bound_subspace_closed(spec, 16, 4, RVec::Ones(3)), DimensionError);
  EXPECT_THROW(bound_subspace_closed(spec, 16, 4, RVec::Zero(4)), DomainError);
}

TEST(Bounds, ClosedFormMatchesAssembly) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index p = k + 1 + static_cast<Eigen::Index>(rng() % (16 - k));
    const RVec s = random_spectrum(k, rng);
    const FisherSpec spec{t % 2 ? 50.0 : 100.0, t % 3 ? 1.0 : 0.95};
    const auto& ab = kAlphas[t % 4];
    const FimBundle b = assemble_fim(spec, MetricParams{p, k, ab[0], ab[1]}, point_with_spectrum(p, s, rng));
    EXPECT_LT(rel_err(bound_subspace(b), bound_subspace_closed(spec, p, k, s)), 1e-8) << "p=" << p << " k=" << k;
  }
}

TEST(Bounds, HomogeneityOrderingAndAdditivity) {
  Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    const auto& ab = kAlphas[t % 4];
    const MetricParams params{6, 2, ab[0], ab[1]};
    const ManifoldPoint x = point_with_spectrum(6, random_spectrum(2, rng), rng);
    const FimBundle b1 = assemble_fim(FisherSpec{50.0, 0.9}, params, x);
    const FimBundle b2 = assemble_fim(FisherSpec{100.0, 0.9}, params, x);
    EXPECT_LT(rel_err(bound_total(b2), 0.5 * bound_total(b1)), 1e-10);
    EXPECT_LT(rel_err(bound_total_tilde(b2), 0.5 * bound_total_tilde(b1)), 1e-10);
    EXPECT_LT(rel_err(bound_subspace(b2), 0.5 * bound_subspace(b1)), 1e-10);
    EXPECT_LE(bound_total(b1), bound_total_tilde(b1) * (1 + 1e-12));
    const RMat ft_inv = b1.F_tilde.inverse();
    EXPECT_LT(rel_err(bound_total_tilde(b1), ft_inv.trace()), 1e-10);
    EXPECT_LT(rel_err(bound_total_tilde(b1), b1.F_Uperp.inverse().trace() + b1.F_Sigma.inverse().trace()), 1e-10);
  }
}

TEST(Bounds, GaugeInvariant) {
  Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    const auto& ab = kAlphas[t % 4];
    const MetricParams params{7, 3, ab[0], ab[1]};
    const FisherSpec spec{100.0, 0.95};
    const ManifoldPoint x = point_with_spectrum(7, random_spectrum(3, rng), rng);
    const auto a = bound_rows(spec, params, x);
    const auto b = bound_rows(spec, params, gauge_transport(x, Gauge::random(3, rng)));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(rel_err(b[i].value, a[i].value), 1e-9) << a[i].name;
  }
}

TEST(Bounds, CsvSchema) {
  Rng rng(15);
  const MetricParams params{5, 2, 1.0, 0.0};
  const auto rows = bound_rows(FisherSpec{100.0, 1.0}, params, random_point(params, rng));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].name, std::string("tr_Ftilde_inv_conjectured"));
  std::ostringstream os;
  write_bounds_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "p,k,n,alpha_pp,bound_name,value");
  int count = 0;
  while (std::getline(is, line)) ++count;
  EXPECT_EQ(count, 4);
}
