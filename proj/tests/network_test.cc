#include "gspnp/network.h"

#include <cmath>
#include <memory>

#include "gtest/gtest.h"
#include "test_util.h"

namespace gspnp {
namespace {

using testing::Mod;
using testing::NumericGradient;
using testing::RandomImage;
using testing::RelativeError;

// Straightforward reimplementation of the forward pass with explicit
// modular indexing, used as the reference.
Image NaiveForward(const GsNetwork& net, const Image& x, double sigma) {
  const int h = x.height(), w = x.width();
  std::vector<std::vector<double>> act;
  for (int c = 0; c < x.channels(); ++c) {
    act.emplace_back(x.plane(c).begin(), x.plane(c).end());
  }
  act.emplace_back(h * w, sigma);
  for (int l = 0; l < net.depth(); ++l) {
    const LayerShape& s = net.shapes()[l];
    const auto wts = net.weights(l);
    const auto bias = net.biases(l);
    std::vector<std::vector<double>> next(s.out_channels,
                                          std::vector<double>(h * w));
    for (int o = 0; o < s.out_channels; ++o) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          double acc = bias[o];
          for (int c = 0; c < s.in_channels; ++c) {
            for (int a = 0; a < s.kernel_height; ++a) {
              for (int b = 0; b < s.kernel_width; ++b) {
                const double wt =
                    wts[((o * s.in_channels + c) * s.kernel_height + a) *
                            s.kernel_width + b];
                acc += wt * act[c][Mod(i + a - s.kernel_height / 2, h) * w +
                                   Mod(j + b - s.kernel_width / 2, w)];
              }
            }
          }
          const bool last = l + 1 == net.depth();
          next[o][i * w + j] = last ? acc : (acc > 0 ? acc : std::expm1(acc));
        }
      }
    }
    act = std::move(next);
  }
  Image out(w, h, x.channels());
  for (int c = 0; c < x.channels(); ++c) {
    std::copy(act[c].begin(), act[c].end(), out.plane(c).begin());
  }
  return out;
}

GsNetwork SmallNet(int channels, std::uint64_t seed) {
  GsNetwork net = GsNetwork::Random(channels, 5, 3, 3, seed);
  // Nonzero biases exercise the bias path.
  NormalSampler rng(seed + 99);
  for (int l = 0; l < net.depth(); ++l) {
    for (std::size_t i = 0; i < net.biases(l).size(); ++i) {
      net.parameters()[net.bias_offset(l) + i] = 0.1 * rng.Next();
    }
  }
  return net;
}

TEST(NetworkTest, ForwardMatchesNaiveImplementation) {
  for (int channels : {1, 3}) {
    const GsNetwork net = SmallNet(channels, 1);
    const Image x = RandomImage(6, 5, channels, 2);
    EXPECT_LE(testing::MaxAbsDiff(NetworkForward(net, x, 0.1),
                                  NaiveForward(net, x, 0.1)),
              1e-12);
  }
}

TEST(NetworkTest, NonSquareKernelsAndOddSizes) {
  GsNetwork net({{2, 3, 3, 1}, {3, 1, 1, 5}}, std::vector<double>(2 * 3 * 3 + 3 + 3 * 5 + 1));
  NormalSampler rng(3);
  for (double& p : net.parameters()) p = rng.Next();
  const Image x = RandomImage(7, 3, 1, 4);
  EXPECT_LE(testing::MaxAbsDiff(NetworkForward(net, x, 0.3),
                                NaiveForward(net, x, 0.3)),
            1e-12);
}

TEST(NetworkTest, VjpMatchesFiniteDifferenceJacobian) {
  const GsNetwork net = SmallNet(1, 5);
  const Image x = RandomImage(4, 4, 1, 6);
  const Image u = RandomImage(4, 4, 1, 7, -1.0, 1.0);
  const Image numeric = NumericGradient(
      [&](const Image& v) { return Dot(NetworkForward(net, v, 0.2), u); }, x, 1e-6);
  EXPECT_LE(RelativeError(NetworkVjp(net, x, 0.2, u), numeric), 1e-8);
}

TEST(NetworkTest, CachedVjpEqualsFreshVjp) {
  const GsNetwork net = SmallNet(3, 8);
  const Image x = RandomImage(5, 5, 3, 9);
  const Image u = RandomImage(5, 5, 3, 10);
  ForwardCache cache;
  NetworkForward(net, x, 0.05, &cache);
  EXPECT_EQ(NetworkVjp(net, cache, u), NetworkVjp(net, x, 0.05, u));
}

TEST(NetworkTest, IdentityNetworkGivesZeroPrior) {
  auto net = std::make_shared<GsNetwork>(GsNetwork::Identity(1));
  const NetworkPrior prior(net, 0.1);
  const Image x = RandomImage(4, 4, 1, 11);
  EXPECT_EQ(NetworkForward(*net, x, 0.1), x);
  EXPECT_EQ(prior.Energy(x), 0.0);
  EXPECT_EQ(prior.Denoise(x), x);
}

TEST(NetworkPriorTest, GradientMatchesFiniteDifferences) {
  auto net = std::make_shared<GsNetwork>(SmallNet(1, 12));
  const NetworkPrior prior(net, 0.1);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Image x = RandomImage(5, 4, 1, 20 + seed);
    const Image numeric = NumericGradient(
        [&](const Image& v) { return prior.Energy(v); }, x, 1e-6);
    EXPECT_LE(RelativeError(prior.Gradient(x), numeric), 1e-7);
    const auto eval = prior.Evaluate(x);
    EXPECT_EQ(eval.energy, prior.Energy(x));
    EXPECT_EQ(eval.gradient, prior.Gradient(x));
  }
}

TEST(NetworkPriorTest, SigmaChannelConditionsTheOutput) {
  auto net = std::make_shared<GsNetwork>(SmallNet(1, 13));
  const NetworkPrior prior(net, 0.1);
  const Image x = RandomImage(4, 4, 1, 14);
  EXPECT_NE(prior.Gradient(x), prior.WithSigma(0.3)->Gradient(x));
}

TEST(LayersTest, TransposeIsAdjoint) {
  const LayerShape shape{3, 2, 3, 5};
  std::vector<double> w(shape.weight_count());
  NormalSampler rng(15);
  for (double& v : w) v = rng.Next();
  Tensor in(3, 4, 6), out_grad(2, 4, 6);
  for (double& v : in.data) v = rng.Next();
  for (double& v : out_grad.data) v = rng.Next();
  Tensor out, in_grad;
  layers::Convolve(shape, w, {}, in, out);
  layers::ConvolveTranspose(shape, w, out_grad, in_grad);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) lhs += out.data[i] * out_grad.data[i];
  for (std::size_t i = 0; i < in.data.size(); ++i) rhs += in.data[i] * in_grad.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(LayersTest, WeightGradientMatchesFiniteDifferences) {
  const LayerShape shape{2, 2, 3, 3};
  std::vector<double> w(shape.weight_count()), bias(2);
  NormalSampler rng(16);
  for (double& v : w) v = rng.Next();
  for (double& v : bias) v = rng.Next();
  Tensor in(2, 4, 5), out_grad(2, 4, 5);
  for (double& v : in.data) v = rng.Next();
  for (double& v : out_grad.data) v = rng.Next();
  auto objective = [&](const std::vector<double>& wt, const std::vector<double>& b) {
    Tensor out;
    layers::Convolve(shape, wt, b, in, out);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * out_grad.data[i];
    return acc;
  };
  std::vector<double> wg(w.size(), 0.0), bg(2, 0.0);
  layers::AccumulateWeightGradient(shape, in, out_grad, wg, bg);
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto up = w, down = w;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(wg[i], (objective(up, bias) - objective(down, bias)) / 2e-6, 1e-6);
  }
  for (int o = 0; o < 2; ++o) {
    auto up = bias, down = bias;
    up[o] += 1e-6;
    down[o] -= 1e-6;
    EXPECT_NEAR(bg[o], (objective(w, up) - objective(w, down)) / 2e-6, 1e-6);
  }
}

TEST(LayersTest, EluDerivatives) {
  for (double z : {-2.0, -0.3, 0.4, 1.5}) {
    const double h = 1e-6;
    EXPECT_NEAR(layers::EluDerivative(z),
                (layers::Elu(z + h) - layers::Elu(z - h)) / (2 * h), 1e-8);
    EXPECT_NEAR(layers::EluSecondDerivative(z),
                (layers::EluDerivative(z + h) - layers::EluDerivative(z - h)) / (2 * h),
                1e-6);
  }
}

TEST(NetworkTest, FileRoundTripIsExact) {
  const auto dir = testing::ScratchDir("network");
  const GsNetwork net = SmallNet(3, 17);
  SaveNetwork(net, (dir / "w.gsw").string());
  const GsNetwork back = LoadNetwork((dir / "w.gsw").string());
  ASSERT_EQ(back.depth(), net.depth());
  EXPECT_TRUE(std::equal(net.parameters().begin(), net.parameters().end(),
                         back.parameters().begin(), back.parameters().end()));
}

TEST(NetworkTest, RejectsInconsistentShapes) {
  EXPECT_THROW(GsNetwork({{2, 4, 3, 3}, {5, 1, 3, 3}}, {}), std::invalid_argument);
  // Input must be image channels + 1.
  EXPECT_THROW(GsNetwork({{1, 1, 1, 1}}, std::vector<double>(2)),
               std::invalid_argument);
}

}  // namespace
}  // namespace gspnp
