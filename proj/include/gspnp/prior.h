#ifndef GSPNP_PRIOR_H_
#define GSPNP_PRIOR_H_

#include <memory>

#include "gspnp/image.h"

namespace gspnp {

// A regularizer g_sigma together with its exact gradient. The induced
// denoiser is the gradient step D_sigma = Id - grad g_sigma.
class GradientPrior {
 public:
  struct Evaluation {
    double energy;
    Image gradient;
  };

  virtual ~GradientPrior() = default;

  virtual double sigma() const = 0;
  virtual double Energy(const Image& x) const = 0;
  virtual Image Gradient(const Image& x) const = 0;
  // Energy and gradient together; implementations that share work override it.
  virtual Evaluation Evaluate(const Image& x) const {
    return {Energy(x), Gradient(x)};
  }
  // Same prior family conditioned on another noise level.
  virtual std::unique_ptr<GradientPrior> WithSigma(double sigma) const = 0;

  Image Denoise(const Image& x) const { return x - Gradient(x); }
};

// g(x) = (alpha / 2) |x - m|^2. grad g is exactly alpha-Lipschitz and the
// denoiser shrinks toward m. Independent of sigma.
class QuadraticPrior final : public GradientPrior {
 public:
  QuadraticPrior(double alpha, Image center, double sigma = 0.0);

  double alpha() const { return alpha_; }
  const Image& center() const { return center_; }

  double sigma() const override { return sigma_; }
  double Energy(const Image& x) const override;
  Image Gradient(const Image& x) const override;
  std::unique_ptr<GradientPrior> WithSigma(double sigma) const override;

 private:
  double alpha_;
  Image center_;
  double sigma_;
};

// Clamp every sample to the box C = [-1, 2].
Image BoxProject(const Image& x);

// g(x) + 0.5 |x - P_C(x)|^2 with C = [-1, 2]^n. Keeps the iterates bounded;
// for x inside C it coincides with the wrapped prior.
class BoxAugmentedPrior final : public GradientPrior {
 public:
  explicit BoxAugmentedPrior(std::shared_ptr<const GradientPrior> base);

  double sigma() const override { return base_->sigma(); }
  double Energy(const Image& x) const override;
  Image Gradient(const Image& x) const override;
  Evaluation Evaluate(const Image& x) const override;
  std::unique_ptr<GradientPrior> WithSigma(double sigma) const override;

  // x - P_C(x), the contribution of the box term to the gradient.
  static Image BoxGradient(const Image& x);
  static bool Active(const Image& x);

 private:
  std::shared_ptr<const GradientPrior> base_;
};

}  // namespace gspnp

#endif  // GSPNP_PRIOR_H_
