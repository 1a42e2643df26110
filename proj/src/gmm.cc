#include "gspnp/gmm.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace gspnp {

GaussianMixture::GaussianMixture(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("empty mixture");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0)) throw std::invalid_argument("weights must be > 0");
    if (!(c.variance > 0.0)) {
      throw std::invalid_argument("variances must be > 0");
    }
    RequireSameShape(c.mean, components_.front().mean, "GaussianMixture");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture weights must sum to 1");
  }
}

GaussianMixture GaussianMixture::Reshaped(int width, int height,
                                          int channels) const {
  std::vector<Component> out;
  for (const auto& c : components_) {
    std::vector<double> data(c.mean.samples().begin(), c.mean.samples().end());
    out.push_back({c.weight, c.variance,
                   Image(width, height, channels, std::move(data))});
  }
  return GaussianMixture(std::move(out));
}

void GaussianMixture::CheckInput(const Image& x) const {
  RequireSameShape(x, components_.front().mean, "GaussianMixture input");
}

std::vector<double> GaussianMixture::LogTerms(double sigma,
                                              const Image& x) const {
  CheckInput(x);
  const double n = static_cast<double>(x.size());
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    const double var = c.variance + sigma * sigma;
    terms.push_back(std::log(c.weight) -
                    0.5 * SquaredDistance(x, c.mean) / var -
                    0.5 * n * std::log(2.0 * std::numbers::pi * var));
  }
  return terms;
}

double GaussianMixture::LogDensity(double sigma, const Image& x) const {
  const auto terms = LogTerms(sigma, x);
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return top + std::log(sum);
}

std::vector<double> GaussianMixture::Responsibilities(double sigma,
                                                      const Image& x) const {
  auto terms = LogTerms(sigma, x);
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double& t : terms) {
    t = std::exp(t - top);
    sum += t;
  }
  for (double& t : terms) t /= sum;
  return terms;
}

Image GaussianMixture::Sample(NormalSampler& rng) const {
  const double u = rng.Uniform();
  std::size_t pick = components_.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    acc += components_[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  const auto& c = components_[pick];
  Image x = c.mean;
  const double sd = std::sqrt(c.variance);
  for (double& v : x.samples()) v += sd * rng.Next();
  return x;
}

Image GaussianMixture::MixtureMean() const {
  Image m = Image::Like(components_.front().mean);
  for (const auto& c : components_) m = AddScaled(m, c.weight, c.mean);
  return m;
}

GaussianMixture LoadGmm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gmm file " + path);
  int count = 0, dim = 0;
  if (!(in >> count >> dim) || count < 1 || dim < 1) {
    throw std::runtime_error("malformed gmm header in " + path);
  }
  std::vector<GaussianMixture::Component> comps;
  for (int i = 0; i < count; ++i) {
    double w, v;
    if (!(in >> w >> v)) throw std::runtime_error("truncated gmm file " + path);
    std::vector<double> mean(dim);
    for (double& m : mean) {
      if (!(in >> m)) throw std::runtime_error("truncated gmm file " + path);
    }
    comps.push_back({w, v, Image(dim, 1, 1, std::move(mean))});
  }
  return GaussianMixture(std::move(comps));
}

void SaveGmm(const GaussianMixture& gmm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << gmm.components().size() << " " << gmm.dimension() << "\n";
  for (const auto& c : gmm.components()) {
    out << c.weight << " " << c.variance;
    for (double m : c.mean.samples()) out << " " << m;
    out << "\n";
  }
}

double GmmEnergy(const GaussianMixture& p, double sigma, const Image& x) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  return -sigma * sigma * p.LogDensity(sigma, x);
}

Image GmmGradient(const GaussianMixture& p, double sigma, const Image& x) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  const auto resp = p.Responsibilities(sigma, x);
  Image grad = Image::Like(x);
  if (sigma == 0.0) return grad;
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < resp.size(); ++i) {
    const auto& c = p.components()[i];
    const double coef = s2 * resp[i] / (c.variance + s2);
    for (std::size_t j = 0; j < x.size(); ++j) {
      grad[j] += coef * (x[j] - c.mean[j]);
    }
  }
  return grad;
}

Image GmmDenoise(const GaussianMixture& p, double sigma, const Image& x) {
  return x - GmmGradient(p, sigma, x);
}

GmmPrior::GmmPrior(std::shared_ptr<const GaussianMixture> mixture, double sigma)
    : mixture_(std::move(mixture)), sigma_(sigma) {
  if (!mixture_) throw std::invalid_argument("GmmPrior: null mixture");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
}

double GmmPrior::Energy(const Image& x) const {
  return GmmEnergy(*mixture_, sigma_, x);
}

Image GmmPrior::Gradient(const Image& x) const {
  return GmmGradient(*mixture_, sigma_, x);
}

std::unique_ptr<GradientPrior> GmmPrior::WithSigma(double sigma) const {
  return std::make_unique<GmmPrior>(mixture_, sigma);
}

}  // namespace gspnp
