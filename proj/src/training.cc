#include "gspnp/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <thread>

namespace gspnp {

namespace {

Tensor ImageAsTensor(const Image& x) {
  Tensor t(x.channels(), x.height(), x.width());
  std::copy(x.samples().begin(), x.samples().end(), t.data.begin());
  return t;
}

// Intermediate values of D(x) = N(x) + J^T (x - N(x)) that the parameter
// gradient needs.
struct DenoiserPass {
  ForwardCache forward;
  // vjp_input_grads[l]: J^T-pass gradient w.r.t. the input of layer l.
  std::vector<Tensor> vjp_input_grads;
  // vjp_deltas[l]: J^T-pass gradient w.r.t. the pre-activation of layer l.
  std::vector<Tensor> vjp_deltas;
  Image output;    // N(x)
  Image denoised;  // D(x)
};

DenoiserPass RunDenoiser(const GsNetwork& net, const Image& x, double sigma) {
  DenoiserPass pass;
  pass.output = NetworkForward(net, x, sigma, &pass.forward);
  const int depth = net.depth();
  pass.vjp_input_grads.resize(depth);
  pass.vjp_deltas.resize(depth);
  pass.vjp_deltas[depth - 1] = ImageAsTensor(x - pass.output);
  for (int l = depth - 1; l >= 0; --l) {
    Tensor grad;
    layers::ConvolveTranspose(net.shapes()[l], net.weights(l),
                              pass.vjp_deltas[l], grad);
    if (l > 0) {
      Tensor delta = grad;
      const Tensor& z = pass.forward.pre[l - 1];
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        delta.data[i] *= layers::EluDerivative(z.data[i]);
      }
      pass.vjp_deltas[l - 1] = std::move(delta);
    }
    pass.vjp_input_grads[l] = std::move(grad);
  }
  pass.denoised = pass.output;
  const Tensor& g0 = pass.vjp_input_grads[0];
  for (std::size_t i = 0; i < pass.denoised.size(); ++i) {
    pass.denoised[i] += g0.data[i];
  }
  return pass;
}

// Accumulates d|D(x) - clean|^2 / d(params) into `grad`; returns the loss.
double SampleLossGradient(const GsNetwork& net, const TrainingSample& sample,
                          std::span<double> grad) {
  const DenoiserPass pass = RunDenoiser(net, sample.noisy, sample.sigma);
  const int depth = net.depth();
  const auto& shapes = net.shapes();
  const auto& pre = pass.forward.pre;

  Image diff = pass.denoised - sample.clean;
  const double loss = SquaredNorm(diff);

  auto weight_grad = [&](int l) {
    return grad.subspan(net.weight_offset(l), shapes[l].weight_count());
  };
  auto bias_grad = [&](int l) {
    return grad.subspan(net.bias_offset(l), shapes[l].out_channels);
  };

  std::vector<Tensor> pre_bar(depth);
  for (int l = 0; l < depth; ++l) {
    pre_bar[l] = Tensor(pre[l].channels, pre[l].height, pre[l].width);
  }

  // Reverse the transpose-Jacobian pass, from its output (the gradient at the
  // network input) back to its seed x - N(x).
  Tensor in_grad_bar(shapes[0].in_channels, diff.height(), diff.width());
  for (std::size_t i = 0; i < diff.size(); ++i) in_grad_bar.data[i] = 2.0 * diff[i];
  Tensor output_bar = ImageAsTensor(2.0 * diff);  // D = N + ..., direct path
  for (int l = 0; l < depth; ++l) {
    // vjp_input_grads[l] = conv_l^T(vjp_deltas[l]): linear in delta and W.
    Tensor delta_bar;
    layers::Convolve(shapes[l], net.weights(l), {}, in_grad_bar, delta_bar);
    layers::AccumulateWeightGradient(shapes[l], in_grad_bar,
                                     pass.vjp_deltas[l], weight_grad(l), {});
    if (l + 1 < depth) {
      // vjp_deltas[l] = vjp_input_grads[l + 1] * elu'(pre[l])
      const Tensor& g = pass.vjp_input_grads[l + 1];
      Tensor next_bar(g.channels, g.height, g.width);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const double z = pre[l].data[i];
        next_bar.data[i] = delta_bar.data[i] * layers::EluDerivative(z);
        pre_bar[l].data[i] +=
            delta_bar.data[i] * g.data[i] * layers::EluSecondDerivative(z);
      }
      in_grad_bar = std::move(next_bar);
    } else {
      // The seed is x - N(x).
      for (std::size_t i = 0; i < output_bar.data.size(); ++i) {
        output_bar.data[i] -= delta_bar.data[i];
      }
    }
  }

  // Reverse the forward pass.
  for (std::size_t i = 0; i < output_bar.data.size(); ++i) {
    pre_bar[depth - 1].data[i] += output_bar.data[i];
  }
  for (int l = depth - 1; l >= 0; --l) {
    layers::AccumulateWeightGradient(shapes[l], pass.forward.inputs[l],
                                     pre_bar[l], weight_grad(l), bias_grad(l));
    if (l > 0) {
      Tensor input_bar;
      layers::ConvolveTranspose(shapes[l], net.weights(l), pre_bar[l],
                                input_bar);
      for (std::size_t i = 0; i < input_bar.data.size(); ++i) {
        pre_bar[l - 1].data[i] +=
            input_bar.data[i] * layers::EluDerivative(pre[l - 1].data[i]);
      }
    }
  }
  return loss;
}

Image RampBackground(const SyntheticImages& spec, NormalSampler& rng) {
  Image img(spec.width, spec.height, spec.channels);
  for (int c = 0; c < spec.channels; ++c) {
    const double base = 0.2 + 0.6 * rng.Uniform();
    const double gx = 0.4 * (rng.Uniform() - 0.5);
    const double gy = 0.4 * (rng.Uniform() - 0.5);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        img.at(c, y, x) = base + gx * (x - spec.width / 2.0) / spec.width +
                          gy * (y - spec.height / 2.0) / spec.height;
      }
    }
  }
  return img;
}

int UniformInt(NormalSampler& rng, int lo, int hi) {  // [lo, hi]
  return lo + static_cast<int>(rng.Uniform() * (hi - lo + 1));
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(sigma_max > 0.0)) throw std::invalid_argument("sigma_max must be > 0");
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("learning_rate must be >= 0");
  }
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (const auto* g = std::get_if<GmmSamples>(&data_source); g && !g->mixture) {
    throw std::invalid_argument("GMM data source without a mixture");
  }
}

Image SyntheticImage(const SyntheticImages& spec, NormalSampler& rng) {
  Image img = RampBackground(spec, rng);
  const int rects = UniformInt(rng, 2, 6);
  for (int r = 0; r < rects; ++r) {
    const int w = UniformInt(rng, 2, std::max(2, spec.width / 2));
    const int h = UniformInt(rng, 2, std::max(2, spec.height / 2));
    const int x0 = UniformInt(rng, 0, spec.width - 1);
    const int y0 = UniformInt(rng, 0, spec.height - 1);
    for (int c = 0; c < spec.channels; ++c) {
      const double value = rng.Uniform();
      for (int y = y0; y < std::min(spec.height, y0 + h); ++y) {
        for (int x = x0; x < std::min(spec.width, x0 + w); ++x) {
          img.at(c, y, x) = value;
        }
      }
    }
  }
  for (double& v : img.samples()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<TrainingSample> SampleTrainingBatch(const TrainConfig& cfg,
                                                NormalSampler& rng) {
  std::vector<TrainingSample> batch;
  batch.reserve(cfg.batch_size);
  for (int i = 0; i < cfg.batch_size; ++i) {
    Image clean = std::visit(
        [&](const auto& source) -> Image {
          using T = std::decay_t<decltype(source)>;
          if constexpr (std::is_same_v<T, GmmSamples>) {
            return source.mixture->Sample(rng);
          } else {
            return SyntheticImage(source, rng);
          }
        },
        cfg.data_source);
    const double sigma = cfg.sigma_max * rng.Uniform();
    Image noisy = clean;
    for (double& v : noisy.samples()) v += sigma * rng.Next();
    batch.push_back({std::move(clean), std::move(noisy), sigma});
  }
  return batch;
}

double DenoiserSampleLoss(const GsNetwork& net, const TrainingSample& sample) {
  const Image d = NetworkPrior(std::make_shared<GsNetwork>(net), sample.sigma)
                      .Denoise(sample.noisy);
  return SquaredDistance(d, sample.clean);
}

double ScoreSampleLoss(const GsNetwork& net, const TrainingSample& sample) {
  const Image grad =
      NetworkPrior(std::make_shared<GsNetwork>(net), sample.sigma)
          .Gradient(sample.noisy);
  return SquaredDistance(grad, sample.noisy - sample.clean);
}

LossAndGradient DenoiserLoss(const GsNetwork& net,
                             std::span<const TrainingSample> batch,
                             int threads) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const std::size_t n = batch.size();
  const std::size_t p = net.parameters().size();
  std::vector<std::vector<double>> grads(n, std::vector<double>(p, 0.0));
  std::vector<double> losses(n, 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      losses[i] = SampleLossGradient(net, batch[i], grads[i]);
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    for (auto& th : pool) th.join();
  }
  // Ordered reduction keeps the result independent of the worker count.
  LossAndGradient out;
  out.gradient.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += losses[i];
    for (std::size_t j = 0; j < p; ++j) out.gradient[j] += grads[i][j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (double& g : out.gradient) g *= inv;
  if (!std::isfinite(out.loss)) throw std::runtime_error("non-finite loss");
  return out;
}

TrainResult Train(GsNetwork net, const TrainConfig& cfg,
                  const std::function<void(int, const GsNetwork&)>& on_step) {
  cfg.Validate();
  NormalSampler rng(cfg.seed);
  const std::size_t p = net.parameters().size();
  std::vector<double> m(p, 0.0), v(p, 0.0);
  std::vector<TrainRecord> history;
  history.reserve(cfg.steps);
  double beta1_pow = 1.0, beta2_pow = 1.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto batch = SampleTrainingBatch(cfg, rng);
    double sigma_mean = 0.0;
    for (const auto& s : batch) sigma_mean += s.sigma;
    sigma_mean /= static_cast<double>(batch.size());

    LossAndGradient lg;
    try {
      lg = DenoiserLoss(net, batch, cfg.threads);
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(e.what(), std::move(history));
    }
    double grad_norm = 0.0;
    for (double g : lg.gradient) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);
    history.push_back({step, lg.loss, sigma_mean, grad_norm});
    if (!std::isfinite(grad_norm)) {
      throw TrainingDiverged("non-finite gradient", std::move(history));
    }

    beta1_pow *= cfg.beta1;
    beta2_pow *= cfg.beta2;
    auto params = net.parameters();
    for (std::size_t j = 0; j < p; ++j) {
      const double g = lg.gradient[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / (1.0 - beta1_pow);
      const double v_hat = v[j] / (1.0 - beta2_pow);
      params[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
    if (on_step) on_step(step, net);
  }
  return {std::move(net), std::move(history)};
}

void WriteLossHistoryCsv(const std::vector<TrainRecord>& history,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,loss,sigma_mean,grad_norm\n" << std::setprecision(17);
  for (const auto& r : history) {
    out << r.step << "," << r.loss << "," << r.sigma_mean << "," << r.grad_norm
        << "\n";
  }
}

}  // namespace gspnp
