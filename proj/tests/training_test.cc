#include "gspnp/training.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gmm_oracle.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace gspnp {
namespace {

TrainConfig SmallConfig() {
  TrainConfig cfg;
  cfg.data_source = SyntheticImages{6, 5, 1};
  cfg.batch_size = 3;
  cfg.steps = 5;
  cfg.learning_rate = 1e-2;
  cfg.seed = 4;
  return cfg;
}

GsNetwork SmallNet(std::uint64_t seed) {
  GsNetwork net = GsNetwork::Random(1, 4, 3, 3, seed);
  NormalSampler rng(seed + 1);
  for (int l = 0; l < net.depth(); ++l) {
    for (std::size_t i = 0; i < net.biases(l).size(); ++i) {
      net.parameters()[net.bias_offset(l) + i] = 0.2 * rng.Next();
    }
  }
  return net;
}

TEST(TrainingTest, LossFormsAgree) {
  const GsNetwork net = SmallNet(1);
  NormalSampler rng(2);
  for (const auto& sample : SampleTrainingBatch(SmallConfig(), rng)) {
    const double a = DenoiserSampleLoss(net, sample);
    const double b = ScoreSampleLoss(net, sample);
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, a));
  }
}

TEST(TrainingTest, ParameterGradientMatchesFiniteDifferences) {
  GsNetwork net = SmallNet(3);
  NormalSampler rng(5);
  const auto batch = SampleTrainingBatch(SmallConfig(), rng);
  const LossAndGradient lg = DenoiserLoss(net, batch);
  auto mean_loss = [&](const GsNetwork& n) {
    double total = 0.0;
    for (const auto& s : batch) total += DenoiserSampleLoss(n, s);
    return total / batch.size();
  };
  EXPECT_NEAR(lg.loss, mean_loss(net), 1e-12);
  double err = 0.0, ref = 0.0;
  for (std::size_t j = 0; j < lg.gradient.size(); ++j) {
    const double keep = net.parameters()[j];
    const double h = 1e-6;
    net.parameters()[j] = keep + h;
    const double up = mean_loss(net);
    net.parameters()[j] = keep - h;
    const double down = mean_loss(net);
    net.parameters()[j] = keep;
    const double numeric = (up - down) / (2 * h);
    err += (lg.gradient[j] - numeric) * (lg.gradient[j] - numeric);
    ref += numeric * numeric;
  }
  EXPECT_LT(std::sqrt(err / ref), 1e-6);
}

TEST(TrainingTest, GradientDoesNotDependOnThreads) {
  const GsNetwork net = SmallNet(6);
  NormalSampler rng(7);
  TrainConfig cfg = SmallConfig();
  cfg.batch_size = 5;
  const auto batch = SampleTrainingBatch(cfg, rng);
  const LossAndGradient one = DenoiserLoss(net, batch, 1);
  const LossAndGradient many = DenoiserLoss(net, batch, 3);
  EXPECT_EQ(one.loss, many.loss);
  EXPECT_EQ(one.gradient, many.gradient);
}

TEST(TrainingTest, TrainingIsDeterministic) {
  const TrainConfig cfg = SmallConfig();
  const TrainResult a = Train(SmallNet(8), cfg);
  const TrainResult b = Train(SmallNet(8), cfg);
  ASSERT_EQ(a.history.size(), 5u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  }
  EXPECT_TRUE(std::equal(a.net.parameters().begin(), a.net.parameters().end(),
                         b.net.parameters().begin()));
}

TEST(TrainingTest, ZeroLearningRateLeavesParameters) {
  TrainConfig cfg = SmallConfig();
  cfg.learning_rate = 0.0;
  const GsNetwork start = SmallNet(9);
  const TrainResult r = Train(start, cfg);
  EXPECT_TRUE(std::equal(start.parameters().begin(), start.parameters().end(),
                         r.net.parameters().begin()));
}

TEST(TrainingTest, LossDecreasesOnAFixedBatchProblem) {
  auto mixture = std::make_shared<GaussianMixture>(
      testing::RandomMixture(2, 4, 4, 10));
  TrainConfig cfg;
  cfg.data_source = GmmSamples{mixture};
  cfg.batch_size = 8;
  cfg.steps = 150;
  cfg.learning_rate = 3e-3;
  cfg.sigma_max = 0.2;
  cfg.seed = 11;
  const TrainResult r = Train(GsNetwork::Random(1, 8, 3, 3, 12), cfg);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 20; ++i) {
    early += r.history[i].loss;
    late += r.history[r.history.size() - 1 - i].loss;
  }
  EXPECT_LT(late, early);
}

TEST(TrainingTest, CallbackSeesEveryStep) {
  int calls = 0;
  Train(SmallNet(13), SmallConfig(), [&](int step, const GsNetwork&) {
    EXPECT_EQ(step, ++calls);
  });
  EXPECT_EQ(calls, 5);
}

TEST(TrainingTest, SyntheticImagesStayInRange) {
  NormalSampler rng(14);
  for (int i = 0; i < 20; ++i) {
    const Image x = SyntheticImage(SyntheticImages{16, 12, 3}, rng);
    EXPECT_EQ(x.width(), 16);
    EXPECT_EQ(x.channels(), 3);
    for (double v : x.samples()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(TrainingTest, HistoryCsvHasHeaderAndRows) {
  const auto dir = testing::ScratchDir("training_csv");
  WriteLossHistoryCsv({{1, 0.5, 0.1, 2.0}, {2, 0.25, 0.1, 1.0}},
                      (dir / "loss.csv").string());
  std::ifstream in(dir / "loss.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,loss,sigma_mean,grad_norm");
  EXPECT_EQ(row, "1,0.5,0.10000000000000001,2");
}

TEST(TrainingTest, RejectsBadConfigs) {
  TrainConfig cfg = SmallConfig();
  cfg.steps = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = SmallConfig();
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = SmallConfig();
  cfg.data_source = GmmSamples{};
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace gspnp
