#ifndef GSPNP_GMM_H_
#define GSPNP_GMM_H_

#include <memory>
#include <string>
#include <vector>

#include "gspnp/image.h"
#include "gspnp/prior.h"

namespace gspnp {

// Isotropic Gaussian mixture over a fixed small image grid. Smoothing by
// N(0, sigma^2 I) keeps it a mixture (variances become v + sigma^2), so the
// smoothed log-density, its gradient and the MMSE denoiser are closed-form.
class GaussianMixture {
 public:
  struct Component {
    double weight;
    double variance;
    Image mean;
  };

  explicit GaussianMixture(std::vector<Component> components);

  const std::vector<Component>& components() const { return components_; }
  std::size_t dimension() const { return components_.front().mean.size(); }
  const Image& shape_template() const { return components_.front().mean; }

  // Same parameters laid out on another grid with the same sample count.
  GaussianMixture Reshaped(int width, int height, int channels) const;

  // log p_sigma(x), evaluated with log-sum-exp.
  double LogDensity(double sigma, const Image& x) const;
  // Posterior component probabilities given x observed with noise sigma.
  std::vector<double> Responsibilities(double sigma, const Image& x) const;
  Image Sample(NormalSampler& rng) const;
  Image MixtureMean() const;

 private:
  void CheckInput(const Image& x) const;
  // log(w_i) + log N(x; mu_i, (v_i + sigma^2) I) for every component.
  std::vector<double> LogTerms(double sigma, const Image& x) const;

  std::vector<Component> components_;
};

// Text format: "n_components dim", then one line per component:
// "weight variance mean_0 ... mean_{dim-1}". The grid is dim x 1 x 1.
GaussianMixture LoadGmm(const std::string& path);
void SaveGmm(const GaussianMixture& gmm, const std::string& path);

// g = -sigma^2 log p_sigma(x).
double GmmEnergy(const GaussianMixture& p, double sigma, const Image& x);
// grad g = sigma^2 * sum_i r_i (x - mu_i) / (v_i + sigma^2).
Image GmmGradient(const GaussianMixture& p, double sigma, const Image& x);
// Exact MMSE denoiser x - grad g.
Image GmmDenoise(const GaussianMixture& p, double sigma, const Image& x);

class GmmPrior final : public GradientPrior {
 public:
  GmmPrior(std::shared_ptr<const GaussianMixture> mixture, double sigma);

  const GaussianMixture& mixture() const { return *mixture_; }

  double sigma() const override { return sigma_; }
  double Energy(const Image& x) const override;
  Image Gradient(const Image& x) const override;
  std::unique_ptr<GradientPrior> WithSigma(double sigma) const override;

 private:
  std::shared_ptr<const GaussianMixture> mixture_;
  double sigma_;
};

}  // namespace gspnp

#endif  // GSPNP_GMM_H_
