#ifndef GSPNP_SOLVER_H_
#define GSPNP_SOLVER_H_

#include <stdexcept>
#include <string>
#include <vector>

#include "gspnp/image.h"
#include "gspnp/linear_ops.h"
#include "gspnp/prior.h"

namespace gspnp {

// Parameters of the GS-PnP iteration x <- Prox_{tau f}(x - tau lambda grad g).
// In the scaled formulation `lambda` is lambda_nu = nu^2 lambda and the
// default stepsize is tau0 = 1 / lambda_nu.
struct SolverConfig {
  double lambda = 1.0;
  double tau0 = 1.0;
  double eta = 0.9;    // backtracking shrink factor, in (0, 1)
  double gamma = 0.1;  // sufficient-decrease factor, in (0, 1/2)
  double epsilon = 1e-5;
  int max_iterations = 400;
  bool backtracking = true;
  bool box_projection = false;
  bool final_gradient_step = true;
  // When false the run only stops at max_iterations.
  bool stop_on_objective = true;
  int max_backtracks = 200;

  void Validate() const;
};

struct TraceRecord {
  int k;              // index of the accepted iterate x_k, starting at 1
  double objective;   // F(x_k)
  double fidelity;    // f(x_k)
  double regularizer; // g(x_k)
  double tau;         // stepsize that produced x_k
  double residual_sq; // |x_k - x_{k-1}|^2
  double gamma_k;     // min residual_sq so far, divided by |x_0|^2
  int backtracks;     // shrinks spent on this step
  double psnr;        // NaN without ground truth
  double expansiveness;
  double objective_change; // (F(x_{k-1}) - F(x_k)) / F(x_0)
};

struct SolverTrace {
  std::vector<TraceRecord> records;
  double initial_objective = 0.0;  // F(x_0), x_0 = Prox(z_0)
  double initial_norm_sq = 0.0;    // |x_0|^2
  double path_length = 0.0;        // sum of |x_k - x_{k-1}|
  bool box_activated = false;
};

enum class StopReason { kConverged, kIterationCap, kDiverged };

const char* StopReasonName(StopReason reason);

struct SolverResult {
  Image restored;      // after the optional final gradient step
  Image last_iterate;  // x_K
  SolverTrace trace;
  StopReason stop = StopReason::kIterationCap;
  double final_tau = 0.0;
};

struct RunOptions {
  const Image* ground_truth = nullptr;
  // Prior used for the first `warmup_iterations` steps instead of `prior`.
  const GradientPrior* warmup_prior = nullptr;
  int warmup_iterations = 0;
};

// F(x) = f(x) + lambda g(x).
double Objective(const Image& x, const Degradation& d, const Image& y,
                 const GradientPrior& prior, double lambda);

// Prox_{tau f}(x - tau lambda grad g(x)).
Image GsPnpStep(const Image& x, double tau, double lambda,
                const GradientPrior& prior, const Degradation& d,
                const Image& y);

struct BacktrackResult {
  Image next;
  double tau;
  double objective;
  GradientPrior::Evaluation next_eval;  // prior evaluated at `next`
  int shrinks;
};

class BacktrackingFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shrinks tau by eta until F(x) - F(next) >= (gamma / tau) |next - x|^2,
// up to a roundoff allowance of 8 ulps of |F(x)|.
// `x_eval` is the prior evaluated at x. Throws BacktrackingFailed after
// cfg.max_backtracks shrinks.
BacktrackResult Backtrack(const Image& x, double x_objective,
                          const GradientPrior::Evaluation& x_eval, double tau,
                          const GradientPrior& prior, const Degradation& d,
                          const Image& y, const SolverConfig& cfg);

// Full restoration run started from Prox_{tau0 f}(z0). A non-finite
// objective ends the run with StopReason::kDiverged and a partial trace.
SolverResult Run(const Image& y, const Degradation& d,
                 const GradientPrior& prior, const SolverConfig& cfg,
                 const Image& z0, const RunOptions& options = {});

// |grad f(x) + lambda grad g(x)| for smooth fidelities. For inpainting the
// normal cone absorbs observed pixels, so only the unobserved part of
// lambda grad g(x) is measured.
double StationarityResidual(const Image& x, const Degradation& d,
                            const Image& y, const GradientPrior& prior,
                            double lambda);

struct RateBoundReport {
  bool holds = true;
  int first_violation = -1;  // trace index k, or -1
  std::vector<double> gammas;  // unnormalized min residual^2 up to k
  std::vector<double> bounds;  // (F(x_0) - F_final) / (k (1/(2 tau) - lambda L / 2))
};

// Checks min_{i<=k} |x_i - x_{i-1}|^2 against the O(1/k) bound at every k,
// with the last traced objective standing in for lim F(x_k).
// Requires lambda * tau * L < 1 and at least two records.
RateBoundReport RateBoundCheck(const SolverTrace& trace, double tau,
                               double lambda, double lipschitz);

// Columns: k,F,f,g,tau,residual_sq,gamma_k,backtracks,psnr,expansiveness
void WriteTraceCsv(const SolverTrace& trace, const std::string& path);
std::string TraceCsv(const SolverTrace& trace);

}  // namespace gspnp

#endif  // GSPNP_SOLVER_H_
