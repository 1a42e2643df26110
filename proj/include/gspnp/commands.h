#ifndef GSPNP_COMMANDS_H_
#define GSPNP_COMMANDS_H_

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gspnp/image.h"
#include "gspnp/linear_ops.h"
#include "gspnp/prior.h"
#include "gspnp/solver.h"

namespace gspnp {

// Everything a restoration run needs. Unset optionals take the per-task
// defaults documented in the README.
struct RunSpec {
  std::string task = "deblur";  // deblur | sr | inpaint | denoise-only
  std::string input;            // clean image, degraded synthetically
  std::string observation;      // or an already degraded image
  std::string kernel;
  std::string mask;
  std::string weights;
  std::string gmm;
  std::optional<double> quadratic_alpha;
  double quadratic_center = 0.5;

  double nu = 0.03;
  std::optional<double> lambda_nu;
  std::optional<double> sigma_d;      // absolute denoiser level
  std::optional<double> sigma_ratio;  // sigma_d / nu
  std::optional<double> tau0;
  double eta = 0.9;
  double gamma = 0.1;
  std::optional<double> eps;
  std::optional<int> max_iter;
  std::optional<bool> final_step;
  bool box_projection = false;
  std::string blur_type = "motion";  // motion | static
  int scale = 2;
  std::string sr_init = "zerofill";  // zerofill | bicubic
  double init_noise = 0.0;           // z0 = y + N(0, init_noise^2)

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;  // 0: hardware concurrency, capped by GSPNP_THREADS

  void Validate() const;
};

// Solver settings after applying the per-task defaults.
struct ResolvedRun {
  SolverConfig solver;
  double sigma = 0.0;
  double warmup_sigma = 0.0;
  int warmup_iterations = 0;
};

ResolvedRun ResolveDefaults(const RunSpec& spec);

// Prior selected by the spec (weights, then gmm, then quadratic), at level
// sigma, shaped for `like` where the prior needs a grid.
std::unique_ptr<GradientPrior> MakePrior(const RunSpec& spec, double sigma,
                                         const Image& like);

struct Problem {
  Degradation degradation;
  Image observation;
  std::optional<Image> ground_truth;
  Image initial;  // z0
};

Problem BuildProblem(const RunSpec& spec, const ResolvedRun& resolved,
                     const GradientPrior& prior);

struct RestoreOutcome {
  SolverResult solver;
  Problem problem;
  ResolvedRun resolved;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double observation_psnr = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int total_backtracks = 0;
};

// Runs one restoration without touching the filesystem except for inputs.
RestoreOutcome Restore(const RunSpec& spec);
std::string SummaryJson(const RunSpec& spec, const RestoreOutcome& outcome);

// Exit codes: 0 converged, 2 stopped at the iteration cap, 1 error.
int CmdRestore(const RunSpec& spec);

struct SweepSpec {
  RunSpec base;
  std::vector<double> lambda_nu;
  std::vector<double> sigma_ratio;
};
int CmdSweep(const SweepSpec& spec);

struct DiagnoseSpec {
  RunSpec base;
  int probes = 8;
  int power_iterations = 30;
  double probe_sigma = 0.05;
};
int CmdDiagnose(const DiagnoseSpec& spec);

struct InitRobustnessSpec {
  RunSpec base;
  std::vector<double> sigma_init;
};
int CmdInitRobustness(const InitRobustnessSpec& spec);

struct TrainSpec {
  std::string data = "synthetic";  // synthetic | gmm
  std::string gmm;
  int patch = 16;
  int channels = 1;
  int hidden = 16;
  int depth = 4;
  int kernel_size = 3;
  int steps = 1000;
  int batch = 8;
  double learning_rate = 1e-3;
  double sigma_max = 50.0 / 255.0;
  std::uint64_t seed = 0;
  std::string init_weights;
  std::string out_dir = "out";
  int threads = 0;
};
int CmdTrain(const TrainSpec& spec);

// Worker count: requested (or hardware concurrency), capped by GSPNP_THREADS.
int EffectiveThreads(int requested);

// Bicubic upsampling by an integer factor with circular boundaries.
Image BicubicUpsample(const Image& low, int scale);

}  // namespace gspnp

#endif  // GSPNP_COMMANDS_H_
