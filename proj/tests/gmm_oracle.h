#ifndef GSPNP_TESTS_GMM_ORACLE_H_
#define GSPNP_TESTS_GMM_ORACLE_H_

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "gspnp/gmm.h"
#include "test_util.h"

namespace gspnp::testing {

// Bayesian reference for x = z + N(0, sigma^2 I), z ~ mixture, written with
// dense covariance matrices and Cholesky factors.
struct GmmOracle {
  struct Parts {
    std::vector<double> log_evidence;       // log w_i + log N(x; mu_i, C_i)
    std::vector<Eigen::VectorXd> post_mean; // E[z | x, component i]
    std::vector<Eigen::VectorXd> score;     // grad_x log N(x; mu_i, C_i)
  };

  static Parts Evaluate(const GaussianMixture& p, double sigma,
                        const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Parts out;
    for (const auto& c : p.components()) {
      const Eigen::VectorXd mu = ToVector(c.mean);
      const Eigen::MatrixXd prior_cov = c.variance * Eigen::MatrixXd::Identity(n, n);
      const Eigen::MatrixXd cov =
          prior_cov + sigma * sigma * Eigen::MatrixXd::Identity(n, n);
      const Eigen::LLT<Eigen::MatrixXd> llt(cov);
      const Eigen::MatrixXd l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      const Eigen::VectorXd diff = x - mu;
      const Eigen::VectorXd solved = llt.solve(diff);
      out.log_evidence.push_back(std::log(c.weight) - 0.5 * diff.dot(solved) -
                                 0.5 * log_det -
                                 0.5 * n * std::log(2.0 * std::numbers::pi));
      out.post_mean.push_back(mu + prior_cov * solved);
      out.score.push_back(-solved);
    }
    return out;
  }

  static std::vector<double> Weights(const std::vector<double>& log_terms) {
    const double m = *std::max_element(log_terms.begin(), log_terms.end());
    std::vector<double> w;
    double total = 0.0;
    for (double t : log_terms) total += std::exp(t - m);
    for (double t : log_terms) w.push_back(std::exp(t - m) / total);
    return w;
  }

  static double LogDensity(const GaussianMixture& p, double sigma,
                           const Eigen::VectorXd& x) {
    const Parts parts = Evaluate(p, sigma, x);
    const double m =
        *std::max_element(parts.log_evidence.begin(), parts.log_evidence.end());
    double total = 0.0;
    for (double t : parts.log_evidence) total += std::exp(t - m);
    return m + std::log(total);
  }

  // E[z | x], summed over components.
  static Eigen::VectorXd PosteriorMean(const GaussianMixture& p, double sigma,
                                       const Eigen::VectorXd& x) {
    const Parts parts = Evaluate(p, sigma, x);
    const std::vector<double> w = Weights(parts.log_evidence);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i] * parts.post_mean[i];
    return mean;
  }

  // grad_x log p_sigma(x).
  static Eigen::VectorXd Score(const GaussianMixture& p, double sigma,
                               const Eigen::VectorXd& x) {
    const Parts parts = Evaluate(p, sigma, x);
    const std::vector<double> w = Weights(parts.log_evidence);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * parts.score[i];
    return s;
  }
};

// Random mixture with `components` isotropic Gaussians on a w x h grid.
inline GaussianMixture RandomMixture(int components, int width, int height,
                                     std::uint64_t seed) {
  NormalSampler rng(seed);
  std::vector<double> raw;
  double total = 0.0;
  for (int i = 0; i < components; ++i) {
    raw.push_back(0.2 + rng.Uniform());
    total += raw.back();
  }
  std::vector<GaussianMixture::Component> parts;
  for (int i = 0; i < components; ++i) {
    parts.push_back({raw[i] / total, 0.005 + 0.05 * rng.Uniform(),
                     RandomImage(width, height, 1, seed * 31 + i)});
  }
  // Renormalize exactly so the weights pass validation.
  double sum = 0.0;
  for (const auto& c : parts) sum += c.weight;
  for (auto& c : parts) c.weight /= sum;
  return GaussianMixture(std::move(parts));
}

}  // namespace gspnp::testing

#endif  // GSPNP_TESTS_GMM_ORACLE_H_
