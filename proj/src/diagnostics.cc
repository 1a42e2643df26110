#include "gspnp/diagnostics.h"

#include <cmath>
#include <stdexcept>

namespace gspnp {

namespace {

Image HessianVectorProduct(const GradientPrior& prior, const Image& x,
                           const Image& u) {
  const double x_norm = Norm(x);
  const double eps = 1e-4 * (x_norm > 0.0 ? x_norm : 1.0) / Norm(u);
  Image plus = prior.Gradient(AddScaled(x, eps, u));
  const Image minus = prior.Gradient(AddScaled(x, -eps, u));
  if (!plus.AllFinite() || !minus.AllFinite()) {
    throw std::runtime_error("prior gradient returned non-finite values");
  }
  plus -= minus;
  plus *= 1.0 / (2.0 * eps);
  return plus;
}

}  // namespace

double EstimateHessianSpectralNorm(const GradientPrior& prior, const Image& x,
                                   int iterations, std::uint64_t seed) {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  NormalSampler rng(seed);
  Image v = Image::Like(x);
  for (double& s : v.samples()) s = rng.Next();
  v *= 1.0 / Norm(v);
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Image hv = HessianVectorProduct(prior, x, v);
    estimate = Norm(hv);
    if (estimate == 0.0) return 0.0;
    hv *= 1.0 / estimate;
    v = std::move(hv);
  }
  return estimate;
}

double ExpansivenessRatio(const GradientPrior& prior, const Image& x1,
                          const Image& x2) {
  const double dx = std::sqrt(SquaredDistance(x1, x2));
  if (dx == 0.0) {
    throw std::invalid_argument("expansiveness ratio needs distinct inputs");
  }
  return std::sqrt(SquaredDistance(prior.Denoise(x1), prior.Denoise(x2))) / dx;
}

}  // namespace gspnp
