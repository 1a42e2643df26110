#ifndef GSPNP_TRAINING_H_
#define GSPNP_TRAINING_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gspnp/gmm.h"
#include "gspnp/image.h"
#include "gspnp/network.h"

namespace gspnp {

struct GmmSamples {
  std::shared_ptr<const GaussianMixture> mixture;
};

// Random piecewise-constant rasters (rectangles over a smooth ramp).
struct SyntheticImages {
  int width = 16;
  int height = 16;
  int channels = 1;
};

using DataSource = std::variant<GmmSamples, SyntheticImages>;

struct TrainConfig {
  double sigma_max = 50.0 / 255.0;
  int batch_size = 16;
  int steps = 1000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  DataSource data_source = SyntheticImages{};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Workers for per-sample gradients. Results do not depend on it.
  int threads = 1;

  void Validate() const;
};

struct TrainingSample {
  Image clean;
  Image noisy;
  double sigma;
};

Image SyntheticImage(const SyntheticImages& spec, NormalSampler& rng);

// clean from the data source, sigma ~ U(0, sigma_max), noisy = clean + noise.
std::vector<TrainingSample> SampleTrainingBatch(const TrainConfig& cfg,
                                                NormalSampler& rng);

// |D(noisy) - clean|^2 with D = N + J_N^T (x - N).
double DenoiserSampleLoss(const GsNetwork& net, const TrainingSample& sample);
// |grad g(noisy) - (noisy - clean)|^2, the score-matching form of the same loss.
double ScoreSampleLoss(const GsNetwork& net, const TrainingSample& sample);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as GsNetwork::parameters()
};

// Mean per-sample loss and its exact parameter gradient. The transpose-
// Jacobian term inside D is differentiated too, by reversing the VJP pass.
LossAndGradient DenoiserLoss(const GsNetwork& net,
                             std::span<const TrainingSample> batch,
                             int threads = 1);

struct TrainRecord {
  int step;
  double loss;
  double sigma_mean;
  double grad_norm;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<TrainRecord> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<TrainRecord>& history() const { return history_; }

 private:
  std::vector<TrainRecord> history_;
};

struct TrainResult {
  GsNetwork net;
  std::vector<TrainRecord> history;
};

// Adam on the denoiser loss. `on_step` runs after every update with the
// 1-based step index.
TrainResult Train(GsNetwork net, const TrainConfig& cfg,
                  const std::function<void(int, const GsNetwork&)>& on_step = {});

// CSV: step,loss,sigma_mean,grad_norm
void WriteLossHistoryCsv(const std::vector<TrainRecord>& history,
                         const std::string& path);

}  // namespace gspnp

#endif  // GSPNP_TRAINING_H_
