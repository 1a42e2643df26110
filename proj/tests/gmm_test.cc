#include "gspnp/gmm.h"

#include <cmath>
#include <numbers>

#include "gmm_oracle.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace gspnp {
namespace {

using testing::FromVector;
using testing::GmmOracle;
using testing::RandomImage;
using testing::RandomMixture;
using testing::ToVector;

TEST(GmmTest, LogDensityMatchesDenseGaussians) {
  const GaussianMixture p = RandomMixture(3, 4, 4, 1);
  for (double sigma : {0.0, 0.02, 0.2}) {
    const Image x = RandomImage(4, 4, 1, 2);
    EXPECT_NEAR(p.LogDensity(sigma, x), GmmOracle::LogDensity(p, sigma, ToVector(x)),
                1e-9);
  }
}

TEST(GmmTest, LogDensityMatchesQuadratureInOneDimension) {
  // p_sigma(x) = integral p(z) N(x - z; 0, sigma^2) dz on a fine grid.
  const GaussianMixture p(
      {{0.3, 0.01, Image(1, 1, 1, 0.2)}, {0.7, 0.04, Image(1, 1, 1, 0.7)}});
  const double sigma = 0.1;
  auto normal = [](double t, double var) {
    return std::exp(-0.5 * t * t / var) / std::sqrt(2.0 * std::numbers::pi * var);
  };
  for (double x : {-0.3, 0.25, 0.6, 1.4}) {
    const int n = 40000;
    const double lo = -3.0, hi = 4.0, h = (hi - lo) / n;
    double integral = 0.0, first_moment = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = lo + i * h;
      const double weight = (i == 0 || i == n) ? 0.5 : 1.0;
      const double prior = 0.3 * normal(z - 0.2, 0.01) + 0.7 * normal(z - 0.7, 0.04);
      const double f = weight * prior * normal(x - z, sigma * sigma);
      integral += f * h;
      first_moment += z * f * h;
    }
    const Image xi(1, 1, 1, x);
    EXPECT_NEAR(p.LogDensity(sigma, xi), std::log(integral), 1e-8) << x;
    EXPECT_NEAR(GmmDenoise(p, sigma, xi)[0], first_moment / integral, 1e-8) << x;
  }
}

TEST(GmmTest, DenoiserIsPosteriorMeanAndTweedie) {
  const GaussianMixture p = RandomMixture(4, 3, 3, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double sigma = 0.02 + 0.02 * seed;
    const Image x = RandomImage(3, 3, 1, 100 + seed, -0.2, 1.2);
    const Image d = GmmDenoise(p, sigma, x);
    const Image posterior =
        FromVector(GmmOracle::PosteriorMean(p, sigma, ToVector(x)), 3, 3, 1);
    EXPECT_LE(testing::MaxAbsDiff(d, posterior), 1e-10);
    const Image tweedie = FromVector(
        ToVector(x) + sigma * sigma * GmmOracle::Score(p, sigma, ToVector(x)), 3, 3, 1);
    EXPECT_LE(testing::MaxAbsDiff(d, tweedie), 1e-10);
  }
}

TEST(GmmTest, GradientMatchesFiniteDifferences) {
  const GaussianMixture p = RandomMixture(3, 4, 2, 4);
  const double sigma = 0.1;
  const Image x = RandomImage(4, 2, 1, 5);
  const Image numeric = testing::NumericGradient(
      [&](const Image& v) { return GmmEnergy(p, sigma, v); }, x, 1e-6);
  EXPECT_LE(testing::RelativeError(GmmGradient(p, sigma, x), numeric), 1e-7);
}

TEST(GmmTest, ResponsibilitiesSumToOneFarFromTheData) {
  const GaussianMixture p = RandomMixture(3, 2, 2, 6);
  const Image far(2, 2, 1, 50.0);
  const auto r = p.Responsibilities(0.01, far);
  double total = 0.0;
  for (double v : r) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(p.LogDensity(0.01, far)));
  EXPECT_TRUE(GmmGradient(p, 0.01, far).AllFinite());
}

TEST(GmmTest, SamplesHaveMixtureMoments) {
  const GaussianMixture p(
      {{0.25, 0.01, Image(1, 1, 1, -1.0)}, {0.75, 0.09, Image(1, 1, 1, 1.0)}});
  NormalSampler rng(9);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = p.Sample(rng)[0];
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
  // E[z^2] = 0.25 (0.01 + 1) + 0.75 (0.09 + 1)
  EXPECT_NEAR(sq / n, 1.07, 0.01);
  EXPECT_NEAR(p.MixtureMean()[0], 0.5, 1e-15);
}

TEST(GmmTest, ValidatesParameters) {
  EXPECT_THROW(GaussianMixture({}), std::invalid_argument);
  EXPECT_THROW(GaussianMixture({{0.5, 0.1, Image(1, 1, 1)}}), std::invalid_argument);
  EXPECT_THROW(GaussianMixture({{1.0, 0.0, Image(1, 1, 1)}}), std::invalid_argument);
  EXPECT_THROW(GaussianMixture({{0.5, 0.1, Image(1, 1, 1)},
                                {0.5, 0.1, Image(2, 1, 1)}}),
               std::invalid_argument);
}

TEST(GmmTest, FileRoundTripAndReshape) {
  const auto dir = testing::ScratchDir("gmm");
  const GaussianMixture p = RandomMixture(2, 3, 2, 7);
  SaveGmm(p, (dir / "p.txt").string());
  const GaussianMixture back = LoadGmm((dir / "p.txt").string());
  ASSERT_EQ(back.components().size(), 2u);
  EXPECT_EQ(back.dimension(), 6u);
  const GaussianMixture grid = back.Reshaped(3, 2, 1);
  const Image x = RandomImage(3, 2, 1, 8);
  EXPECT_NEAR(grid.LogDensity(0.1, x), p.LogDensity(0.1, x), 1e-12);
  EXPECT_THROW(back.Reshaped(4, 2, 1), std::invalid_argument);
}

TEST(GmmPriorTest, WrapsClosedForms) {
  auto p = std::make_shared<GaussianMixture>(RandomMixture(2, 2, 2, 10));
  const GmmPrior prior(p, 0.15);
  const Image x = RandomImage(2, 2, 1, 11);
  EXPECT_NEAR(prior.Energy(x), -0.15 * 0.15 * p->LogDensity(0.15, x), 1e-14);
  EXPECT_EQ(prior.Denoise(x), x - GmmGradient(*p, 0.15, x));
  EXPECT_EQ(prior.WithSigma(0.3)->sigma(), 0.3);
}

}  // namespace
}  // namespace gspnp
