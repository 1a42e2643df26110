#ifndef GSPNP_NETWORK_H_
#define GSPNP_NETWORK_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gspnp/image.h"
#include "gspnp/prior.h"

namespace gspnp {

// Feature map: channel-planar row-major doubles.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {}

  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  double* plane(int c) { return data.data() + c * plane_size(); }
  const double* plane(int c) const { return data.data() + c * plane_size(); }
};

struct LayerShape {
  int in_channels;
  int out_channels;
  int kernel_height;
  int kernel_width;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in_channels) * out_channels *
           kernel_height * kernel_width;
  }
};

// Fully convolutional network N_sigma: circular-padded convolutions with ELU
// between layers and a linear last layer. The noise level enters as one extra
// constant input channel, so a network for C-channel images has C + 1 inputs
// and C outputs. All parameters live in one flat vector, layer by layer,
// weights [out][in][kh][kw] followed by biases [out].
class GsNetwork {
 public:
  GsNetwork(std::vector<LayerShape> shapes, std::vector<double> parameters);

  // depth layers of kernel_size x kernel_size taps with `hidden` channels,
  // weights drawn from N(0, scale^2 / fan_in), zero biases.
  static GsNetwork Random(int image_channels, int hidden, int depth,
                          int kernel_size, std::uint64_t seed,
                          double scale = 1.0);
  // Single 1x1 layer copying the image channels: N(x) = x.
  static GsNetwork Identity(int image_channels);

  const std::vector<LayerShape>& shapes() const { return shapes_; }
  int depth() const { return static_cast<int>(shapes_.size()); }
  int image_channels() const { return shapes_.back().out_channels; }

  std::span<double> parameters() { return parameters_; }
  std::span<const double> parameters() const { return parameters_; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + shapes_[layer].weight_count();
  }
  std::span<const double> weights(int layer) const;
  std::span<const double> biases(int layer) const;

 private:
  std::vector<LayerShape> shapes_;
  std::vector<double> parameters_;
  std::vector<std::size_t> offsets_;
};

// Activations kept from a forward pass so that transpose-Jacobian products
// can reuse them. inputs[l] feeds layer l; pre[l] is its affine output.
struct ForwardCache {
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre;
};

// Network input: the image channels followed by a constant sigma channel.
Tensor NetworkInput(const GsNetwork& net, const Image& x, double sigma);

Image NetworkForward(const GsNetwork& net, const Image& x, double sigma,
                     ForwardCache* cache = nullptr);
// J_N(x)^T u, restricted to the image channels.
Image NetworkVjp(const GsNetwork& net, const Image& x, double sigma,
                 const Image& u);
// Same, reusing a cache filled by NetworkForward at x.
Image NetworkVjp(const GsNetwork& net, const ForwardCache& cache,
                 const Image& u);

// Low-level layer primitives, exposed for tests.
namespace layers {
// out = conv(in) + bias (bias may be empty), cross-correlation with taps
// centred at (kh/2, kw/2) and circular wrap.
void Convolve(const LayerShape& shape, std::span<const double> weights,
              std::span<const double> bias, const Tensor& in, Tensor& out);
// in_grad += conv^T(out_grad)
void ConvolveTranspose(const LayerShape& shape, std::span<const double> weights,
                       const Tensor& out_grad, Tensor& in_grad);
// weight_grad += d<out_grad, conv(in)>/dW ; bias_grad += sums of out_grad.
void AccumulateWeightGradient(const LayerShape& shape, const Tensor& in,
                              const Tensor& out_grad,
                              std::span<double> weight_grad,
                              std::span<double> bias_grad);
double Elu(double z);
double EluDerivative(double z);
double EluSecondDerivative(double z);
}  // namespace layers

// g(x) = 0.5 |x - N(x)|^2, grad g(x) = (x - N(x)) - J_N(x)^T (x - N(x)).
class NetworkPrior final : public GradientPrior {
 public:
  NetworkPrior(std::shared_ptr<const GsNetwork> net, double sigma);

  const GsNetwork& network() const { return *net_; }

  double sigma() const override { return sigma_; }
  double Energy(const Image& x) const override;
  Image Gradient(const Image& x) const override;
  Evaluation Evaluate(const Image& x) const override;
  std::unique_ptr<GradientPrior> WithSigma(double sigma) const override;

 private:
  std::shared_ptr<const GsNetwork> net_;
  double sigma_;
};

// GSW1 container: magic, u32 layer count, then per layer four u32
// (in_ch, out_ch, kh, kw) followed by little-endian f64 weights and biases.
GsNetwork LoadNetwork(const std::string& path);
void SaveNetwork(const GsNetwork& net, const std::string& path);

}  // namespace gspnp

#endif  // GSPNP_NETWORK_H_
