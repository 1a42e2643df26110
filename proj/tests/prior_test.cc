#include "gspnp/prior.h"

#include <memory>

#include "gtest/gtest.h"
#include "test_util.h"

namespace gspnp {
namespace {

using testing::NumericGradient;
using testing::RandomImage;
using testing::RelativeError;

TEST(QuadraticPriorTest, EnergyGradientAndDenoiser) {
  const Image center(4, 4, 1, 0.5);
  const QuadraticPrior prior(0.7, center);
  const Image x = RandomImage(4, 4, 1, 1);
  EXPECT_NEAR(prior.Energy(x), 0.35 * SquaredDistance(x, center), 1e-15);
  const Image numeric = NumericGradient(
      [&](const Image& v) { return prior.Energy(v); }, x, 1e-5);
  EXPECT_LE(RelativeError(prior.Gradient(x), numeric), 1e-9);
  const Image d = prior.Denoise(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(d[i], 0.3 * x[i] + 0.7 * 0.5, 1e-15);
  }
  EXPECT_THROW(QuadraticPrior(-1.0, center), std::invalid_argument);
}

TEST(QuadraticPriorTest, WithSigmaKeepsShape) {
  const QuadraticPrior prior(0.3, Image(2, 2, 1, 0.1), 0.05);
  const auto other = prior.WithSigma(0.2);
  EXPECT_EQ(other->sigma(), 0.2);
  const Image x = RandomImage(2, 2, 1, 2);
  EXPECT_EQ(other->Energy(x), prior.Energy(x));
}

TEST(BoxAugmentedPriorTest, InsideTheBoxItIsTheBasePrior) {
  auto base = std::make_shared<QuadraticPrior>(0.4, Image(3, 3, 1, 0.2));
  const BoxAugmentedPrior boxed(base);
  const Image x = RandomImage(3, 3, 1, 3, -0.9, 1.9);
  EXPECT_EQ(boxed.Energy(x), base->Energy(x));
  EXPECT_EQ(boxed.Gradient(x), base->Gradient(x));
  EXPECT_FALSE(BoxAugmentedPrior::Active(x));
}

TEST(BoxAugmentedPriorTest, GradientPointsBackIntoTheBox) {
  auto base = std::make_shared<QuadraticPrior>(0.4, Image(3, 3, 1, 0.2));
  const BoxAugmentedPrior boxed(base);
  Image x = RandomImage(3, 3, 1, 4, -3.0, 4.0);
  x[0] = 3.0;
  x[1] = -2.0;
  ASSERT_TRUE(BoxAugmentedPrior::Active(x));
  const Image numeric = NumericGradient(
      [&](const Image& v) { return boxed.Energy(v); }, x, 1e-6);
  EXPECT_LE(RelativeError(boxed.Gradient(x), numeric), 1e-8);
  const Image box = BoxAugmentedPrior::BoxGradient(x);
  EXPECT_EQ(box[0], 1.0);
  EXPECT_EQ(box[1], -1.0);
  // A small gradient step on the box term moves outliers toward C.
  const Image stepped = AddScaled(x, -0.5, box);
  EXPECT_LT(stepped[0], x[0]);
  EXPECT_GT(stepped[1], x[1]);
  const auto evaluation = boxed.Evaluate(x);
  EXPECT_EQ(evaluation.energy, boxed.Energy(x));
  EXPECT_EQ(evaluation.gradient, boxed.Gradient(x));
}

TEST(BoxProjectTest, Clamps) {
  Image x(3, 1, 1, std::vector<double>{-5.0, 0.5, 9.0});
  const Image p = BoxProject(x);
  EXPECT_EQ(p[0], -1.0);
  EXPECT_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 2.0);
}

}  // namespace
}  // namespace gspnp
