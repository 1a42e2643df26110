#include "gspnp/network.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gspnp {

namespace {

int Wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

// dst[j] += w * src[(j + shift) mod n]
void AddShiftedRow(double* dst, const double* src, double w, int shift, int n) {
  const int s = Wrap(shift, n);
  const int head = n - s;
  for (int j = 0; j < head; ++j) dst[j] += w * src[j + s];
  for (int j = head; j < n; ++j) dst[j] += w * src[j - head];
}

// sum_j a[j] * b[(j + shift) mod n]
double DotShiftedRow(const double* a, const double* b, int shift, int n) {
  const int s = Wrap(shift, n);
  const int head = n - s;
  double sum = 0.0;
  for (int j = 0; j < head; ++j) sum += a[j] * b[j + s];
  for (int j = head; j < n; ++j) sum += a[j] * b[j - head];
  return sum;
}

std::size_t WeightIndex(const LayerShape& s, int o, int c, int a, int b) {
  return ((static_cast<std::size_t>(o) * s.in_channels + c) * s.kernel_height +
          a) * s.kernel_width + b;
}

void CheckTensor(const Tensor& t, int channels, const char* what) {
  if (t.channels != channels) {
    throw std::invalid_argument(std::string(what) + ": channel mismatch");
  }
}

Image TensorToImage(const Tensor& t) {
  return Image(t.width, t.height, t.channels, t.data);
}

Tensor ImageToTensor(const Image& x) {
  Tensor t(x.channels(), x.height(), x.width());
  std::copy(x.samples().begin(), x.samples().end(), t.data.begin());
  return t;
}

void PutU32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t GetU32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("truncated GSW1 file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void PutF64(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double GetF64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("truncated GSW1 file");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

namespace layers {

double Elu(double z) { return z > 0.0 ? z : std::expm1(z); }
double EluDerivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }
double EluSecondDerivative(double z) { return z > 0.0 ? 0.0 : std::exp(z); }

void Convolve(const LayerShape& shape, std::span<const double> weights,
              std::span<const double> bias, const Tensor& in, Tensor& out) {
  CheckTensor(in, shape.in_channels, "Convolve");
  const int h = in.height, w = in.width;
  out = Tensor(shape.out_channels, h, w);
  const int ch = shape.kernel_height / 2, cw = shape.kernel_width / 2;
  for (int o = 0; o < shape.out_channels; ++o) {
    double* dst = out.plane(o);
    if (!bias.empty()) std::fill(dst, dst + out.plane_size(), bias[o]);
    for (int c = 0; c < shape.in_channels; ++c) {
      const double* src = in.plane(c);
      for (int a = 0; a < shape.kernel_height; ++a) {
        for (int b = 0; b < shape.kernel_width; ++b) {
          const double wt = weights[WeightIndex(shape, o, c, a, b)];
          for (int i = 0; i < h; ++i) {
            AddShiftedRow(dst + i * w, src + Wrap(i + a - ch, h) * w, wt,
                          b - cw, w);
          }
        }
      }
    }
  }
}

void ConvolveTranspose(const LayerShape& shape, std::span<const double> weights,
                       const Tensor& out_grad, Tensor& in_grad) {
  CheckTensor(out_grad, shape.out_channels, "ConvolveTranspose");
  const int h = out_grad.height, w = out_grad.width;
  if (in_grad.data.empty()) in_grad = Tensor(shape.in_channels, h, w);
  CheckTensor(in_grad, shape.in_channels, "ConvolveTranspose");
  const int ch = shape.kernel_height / 2, cw = shape.kernel_width / 2;
  for (int c = 0; c < shape.in_channels; ++c) {
    double* dst = in_grad.plane(c);
    for (int o = 0; o < shape.out_channels; ++o) {
      const double* src = out_grad.plane(o);
      for (int a = 0; a < shape.kernel_height; ++a) {
        for (int b = 0; b < shape.kernel_width; ++b) {
          const double wt = weights[WeightIndex(shape, o, c, a, b)];
          for (int i = 0; i < h; ++i) {
            AddShiftedRow(dst + i * w, src + Wrap(i - a + ch, h) * w, wt,
                          cw - b, w);
          }
        }
      }
    }
  }
}

void AccumulateWeightGradient(const LayerShape& shape, const Tensor& in,
                              const Tensor& out_grad,
                              std::span<double> weight_grad,
                              std::span<double> bias_grad) {
  CheckTensor(in, shape.in_channels, "AccumulateWeightGradient");
  CheckTensor(out_grad, shape.out_channels, "AccumulateWeightGradient");
  const int h = in.height, w = in.width;
  const int ch = shape.kernel_height / 2, cw = shape.kernel_width / 2;
  for (int o = 0; o < shape.out_channels; ++o) {
    const double* g = out_grad.plane(o);
    if (!bias_grad.empty()) {
      double sum = 0.0;
      for (std::size_t i = 0; i < out_grad.plane_size(); ++i) sum += g[i];
      bias_grad[o] += sum;
    }
    for (int c = 0; c < shape.in_channels; ++c) {
      const double* src = in.plane(c);
      for (int a = 0; a < shape.kernel_height; ++a) {
        for (int b = 0; b < shape.kernel_width; ++b) {
          double sum = 0.0;
          for (int i = 0; i < h; ++i) {
            sum += DotShiftedRow(g + i * w, src + Wrap(i + a - ch, h) * w,
                                 b - cw, w);
          }
          weight_grad[WeightIndex(shape, o, c, a, b)] += sum;
        }
      }
    }
  }
}

}  // namespace layers

GsNetwork::GsNetwork(std::vector<LayerShape> shapes,
                     std::vector<double> parameters)
    : shapes_(std::move(shapes)), parameters_(std::move(parameters)) {
  if (shapes_.empty()) throw std::invalid_argument("network has no layers");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const auto& s = shapes_[l];
    if (s.in_channels < 1 || s.out_channels < 1 || s.kernel_height < 1 ||
        s.kernel_width < 1) {
      throw std::invalid_argument("invalid layer shape");
    }
    if (l > 0 && s.in_channels != shapes_[l - 1].out_channels) {
      throw std::invalid_argument("layer channel counts do not chain");
    }
    offsets_.push_back(offset);
    offset += s.weight_count() + s.out_channels;
  }
  if (shapes_.front().in_channels != shapes_.back().out_channels + 1) {
    throw std::invalid_argument(
        "network must map C image channels plus sigma to C channels");
  }
  if (parameters_.size() != offset) {
    throw std::invalid_argument("parameter count does not match layers");
  }
}

GsNetwork GsNetwork::Random(int image_channels, int hidden, int depth,
                            int kernel_size, std::uint64_t seed, double scale) {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  std::vector<LayerShape> shapes;
  for (int l = 0; l < depth; ++l) {
    const int in = l == 0 ? image_channels + 1 : hidden;
    const int out = l == depth - 1 ? image_channels : hidden;
    shapes.push_back({in, out, kernel_size, kernel_size});
  }
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.weight_count() + s.out_channels;
  std::vector<double> params(total, 0.0);
  NormalSampler rng(seed);
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    const double fan_in = s.in_channels * s.kernel_height * s.kernel_width;
    const double sd = scale / std::sqrt(fan_in);
    for (std::size_t i = 0; i < s.weight_count(); ++i) {
      params[offset + i] = sd * rng.Next();
    }
    offset += s.weight_count() + s.out_channels;
  }
  return GsNetwork(std::move(shapes), std::move(params));
}

GsNetwork GsNetwork::Identity(int image_channels) {
  const LayerShape shape{image_channels + 1, image_channels, 1, 1};
  std::vector<double> params(shape.weight_count() + image_channels, 0.0);
  for (int c = 0; c < image_channels; ++c) {
    params[WeightIndex(shape, c, c, 0, 0)] = 1.0;
  }
  return GsNetwork({shape}, std::move(params));
}

std::span<const double> GsNetwork::weights(int layer) const {
  return std::span<const double>(parameters_)
      .subspan(weight_offset(layer), shapes_[layer].weight_count());
}

std::span<const double> GsNetwork::biases(int layer) const {
  return std::span<const double>(parameters_)
      .subspan(bias_offset(layer), shapes_[layer].out_channels);
}

Tensor NetworkInput(const GsNetwork& net, const Image& x, double sigma) {
  if (x.channels() != net.image_channels()) {
    throw std::invalid_argument("image channels do not match network");
  }
  Tensor t(x.channels() + 1, x.height(), x.width());
  std::copy(x.samples().begin(), x.samples().end(), t.data.begin());
  std::fill(t.plane(x.channels()), t.plane(x.channels()) + t.plane_size(),
            sigma);
  return t;
}

Image NetworkForward(const GsNetwork& net, const Image& x, double sigma,
                     ForwardCache* cache) {
  Tensor act = NetworkInput(net, x, sigma);
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (int l = 0; l < net.depth(); ++l) {
    Tensor pre;
    layers::Convolve(net.shapes()[l], net.weights(l), net.biases(l), act, pre);
    if (cache != nullptr) cache->inputs.push_back(std::move(act));
    if (l + 1 == net.depth()) {
      if (cache != nullptr) cache->pre.push_back(pre);
      return TensorToImage(pre);
    }
    act = pre;
    for (double& v : act.data) v = layers::Elu(v);
    if (cache != nullptr) cache->pre.push_back(std::move(pre));
  }
  return x;  // unreachable
}

Image NetworkVjp(const GsNetwork& net, const ForwardCache& cache,
                 const Image& u) {
  if (static_cast<int>(cache.pre.size()) != net.depth()) {
    throw std::invalid_argument("forward cache does not match network");
  }
  const Tensor& last = cache.pre.back();
  if (u.channels() != last.channels || u.height() != last.height ||
      u.width() != last.width) {
    throw std::invalid_argument("NetworkVjp: u does not match N(x)");
  }
  Tensor delta = ImageToTensor(u);
  for (int l = net.depth() - 1; l >= 0; --l) {
    Tensor grad;
    layers::ConvolveTranspose(net.shapes()[l], net.weights(l), delta, grad);
    if (l == 0) {
      grad.channels -= 1;  // drop the sigma channel
      grad.data.resize(grad.channels * grad.plane_size());
      return TensorToImage(grad);
    }
    const Tensor& z = cache.pre[l - 1];
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      grad.data[i] *= layers::EluDerivative(z.data[i]);
    }
    delta = std::move(grad);
  }
  return u;  // unreachable
}

Image NetworkVjp(const GsNetwork& net, const Image& x, double sigma,
                 const Image& u) {
  ForwardCache cache;
  NetworkForward(net, x, sigma, &cache);
  return NetworkVjp(net, cache, u);
}

NetworkPrior::NetworkPrior(std::shared_ptr<const GsNetwork> net, double sigma)
    : net_(std::move(net)), sigma_(sigma) {
  if (!net_) throw std::invalid_argument("NetworkPrior: null network");
}

GradientPrior::Evaluation NetworkPrior::Evaluate(const Image& x) const {
  ForwardCache cache;
  const Image n = NetworkForward(*net_, x, sigma_, &cache);
  Image residual = x - n;
  const double energy = 0.5 * SquaredNorm(residual);
  Image grad = residual - NetworkVjp(*net_, cache, residual);
  return {energy, std::move(grad)};
}

double NetworkPrior::Energy(const Image& x) const {
  return 0.5 * SquaredDistance(x, NetworkForward(*net_, x, sigma_));
}

Image NetworkPrior::Gradient(const Image& x) const {
  return Evaluate(x).gradient;
}

std::unique_ptr<GradientPrior> NetworkPrior::WithSigma(double sigma) const {
  return std::make_unique<NetworkPrior>(net_, sigma);
}

GsNetwork LoadNetwork(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "GSW1", 4) != 0) {
    throw std::runtime_error("not a GSW1 file: " + path);
  }
  const std::uint32_t count = GetU32(in);
  if (count == 0 || count > 1024) throw std::runtime_error("bad layer count");
  std::vector<LayerShape> shapes;
  std::vector<double> params;
  for (std::uint32_t l = 0; l < count; ++l) {
    LayerShape s;
    s.in_channels = static_cast<int>(GetU32(in));
    s.out_channels = static_cast<int>(GetU32(in));
    s.kernel_height = static_cast<int>(GetU32(in));
    s.kernel_width = static_cast<int>(GetU32(in));
    if (s.in_channels < 1 || s.out_channels < 1 || s.kernel_height < 1 ||
        s.kernel_width < 1 || s.weight_count() > (1u << 26)) {
      throw std::runtime_error("bad layer shape in " + path);
    }
    for (std::size_t i = 0; i < s.weight_count() + s.out_channels; ++i) {
      params.push_back(GetF64(in));
    }
    shapes.push_back(s);
  }
  return GsNetwork(std::move(shapes), std::move(params));
}

void SaveNetwork(const GsNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("GSW1", 4);
  PutU32(out, static_cast<std::uint32_t>(net.depth()));
  for (int l = 0; l < net.depth(); ++l) {
    const auto& s = net.shapes()[l];
    PutU32(out, static_cast<std::uint32_t>(s.in_channels));
    PutU32(out, static_cast<std::uint32_t>(s.out_channels));
    PutU32(out, static_cast<std::uint32_t>(s.kernel_height));
    PutU32(out, static_cast<std::uint32_t>(s.kernel_width));
    for (double v : net.weights(l)) PutF64(out, v);
    for (double v : net.biases(l)) PutF64(out, v);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gspnp
