#include "gspnp/prior.h"

#include <algorithm>
#include <stdexcept>

namespace gspnp {

namespace {
constexpr double kBoxLow = -1.0;
constexpr double kBoxHigh = 2.0;
}  // namespace

QuadraticPrior::QuadraticPrior(double alpha, Image center, double sigma)
    : alpha_(alpha), center_(std::move(center)), sigma_(sigma) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
}

double QuadraticPrior::Energy(const Image& x) const {
  return 0.5 * alpha_ * SquaredDistance(x, center_);
}

Image QuadraticPrior::Gradient(const Image& x) const {
  RequireSameShape(x, center_, "QuadraticPrior");
  Image g = x - center_;
  g *= alpha_;
  return g;
}

std::unique_ptr<GradientPrior> QuadraticPrior::WithSigma(double sigma) const {
  return std::make_unique<QuadraticPrior>(alpha_, center_, sigma);
}

Image BoxProject(const Image& x) {
  Image out = x;
  for (double& v : out.samples()) v = std::clamp(v, kBoxLow, kBoxHigh);
  return out;
}

BoxAugmentedPrior::BoxAugmentedPrior(std::shared_ptr<const GradientPrior> base)
    : base_(std::move(base)) {
  if (!base_) throw std::invalid_argument("BoxAugmentedPrior: null prior");
}

Image BoxAugmentedPrior::BoxGradient(const Image& x) { return x - BoxProject(x); }

bool BoxAugmentedPrior::Active(const Image& x) {
  return std::any_of(x.samples().begin(), x.samples().end(),
                     [](double v) { return v < kBoxLow || v > kBoxHigh; });
}

double BoxAugmentedPrior::Energy(const Image& x) const {
  return base_->Energy(x) + 0.5 * SquaredNorm(BoxGradient(x));
}

Image BoxAugmentedPrior::Gradient(const Image& x) const {
  return base_->Gradient(x) + BoxGradient(x);
}

GradientPrior::Evaluation BoxAugmentedPrior::Evaluate(const Image& x) const {
  Evaluation e = base_->Evaluate(x);
  const Image box = BoxGradient(x);
  e.energy += 0.5 * SquaredNorm(box);
  e.gradient += box;
  return e;
}

std::unique_ptr<GradientPrior> BoxAugmentedPrior::WithSigma(double sigma) const {
  return std::make_unique<BoxAugmentedPrior>(
      std::shared_ptr<const GradientPrior>(base_->WithSigma(sigma)));
}

}  // namespace gspnp
