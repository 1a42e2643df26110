#include "gspnp/diagnostics.h"

#include <cmath>

#include "gmm_oracle.h"
#include "gspnp/gmm.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace gspnp {
namespace {

TEST(DiagnosticsTest, QuadraticHessianNormIsAlpha) {
  const QuadraticPrior prior(0.7, Image(8, 8, 1, 0.5));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image x = testing::RandomImage(8, 8, 1, seed);
    EXPECT_NEAR(EstimateHessianSpectralNorm(prior, x, 10, seed), 0.7, 1e-6);
  }
}

TEST(DiagnosticsTest, MatchesDenseHessianOfOneDimensionalGmm) {
  // In one dimension the Hessian is the derivative of the gradient.
  auto mixture = std::make_shared<GaussianMixture>(GaussianMixture(
      {{0.4, 0.01, Image(1, 1, 1, 0.1)}, {0.6, 0.02, Image(1, 1, 1, 0.8)}}));
  const GmmPrior prior(mixture, 0.1);
  for (double v : {0.0, 0.4, 0.45, 1.2}) {
    const Image x(1, 1, 1, v);
    const double h = 1e-5;
    const double second = (prior.Gradient(Image(1, 1, 1, v + h))[0] -
                           prior.Gradient(Image(1, 1, 1, v - h))[0]) /
                          (2 * h);
    EXPECT_NEAR(EstimateHessianSpectralNorm(prior, x, 5), std::abs(second), 1e-5);
  }
}

TEST(DiagnosticsTest, PowerIterationFindsTheTopEigenvalueOfADenseGmmHessian) {
  auto mixture = std::make_shared<GaussianMixture>(testing::RandomMixture(3, 3, 2, 3));
  const GmmPrior prior(mixture, 0.08);
  const Image x = testing::RandomImage(3, 2, 1, 4);
  // Dense Hessian by centred differences of the exact gradient.
  const int n = 6;
  Eigen::MatrixXd hess(n, n);
  for (int j = 0; j < n; ++j) {
    Image up = x, down = x;
    up[j] += 1e-5;
    down[j] -= 1e-5;
    const Image col = (1.0 / 2e-5) * (prior.Gradient(up) - prior.Gradient(down));
    for (int i = 0; i < n; ++i) hess(i, j) = col[i];
  }
  const Eigen::MatrixXd sym = 0.5 * (hess + hess.transpose());
  const double expected =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().cwiseAbs().maxCoeff();
  EXPECT_NEAR(EstimateHessianSpectralNorm(prior, x, 200, 5), expected,
              1e-4 * expected);
}

TEST(DiagnosticsTest, ExpansivenessOfQuadraticDenoiser) {
  const QuadraticPrior prior(0.25, Image(4, 4, 1, 0.0));
  const Image a = testing::RandomImage(4, 4, 1, 6);
  const Image b = testing::RandomImage(4, 4, 1, 7);
  EXPECT_NEAR(ExpansivenessRatio(prior, a, b), 0.75, 1e-14);
  const QuadraticPrior steep(2.5, Image(4, 4, 1, 0.0));
  EXPECT_NEAR(ExpansivenessRatio(steep, a, b), 1.5, 1e-14);
  EXPECT_THROW(ExpansivenessRatio(prior, a, a), std::invalid_argument);
}

TEST(DiagnosticsTest, RejectsZeroIterations) {
  const QuadraticPrior prior(1.0, Image(2, 2, 1));
  EXPECT_THROW(EstimateHessianSpectralNorm(prior, Image(2, 2, 1, 1.0), 0),
               std::invalid_argument);
}

}  // namespace
}  // namespace gspnp
