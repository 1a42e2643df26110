#include "gspnp/commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gspnp/diagnostics.h"
#include "gspnp/gmm.h"
#include "gspnp/network.h"
#include "gspnp/training.h"

namespace gspnp {

namespace fs = std::filesystem;

namespace {

constexpr double kInpaintSigma = 10.0 / 255.0;
constexpr double kInpaintWarmupSigma = 50.0 / 255.0;
constexpr int kInpaintWarmupIterations = 10;

bool IsTask(const std::string& t) {
  return t == "deblur" || t == "sr" || t == "inpaint" || t == "denoise-only";
}

std::string Fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// JSON has no inf/nan; null stands in for them.
nlohmann::json JsonNumber(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string ImageExtension(const Image& x) {
  return x.channels() == 3 ? ".ppm" : ".pgm";
}

Image LoadMask(const std::string& path) {
  Image m = LoadImage(path);
  for (double& v : m.samples()) v = v > 0.5 ? 1.0 : 0.0;
  return m;
}

double CubicWeight(double t) {
  // Keys kernel, a = -0.5.
  t = std::abs(t);
  if (t < 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

int Wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

template <typename Fn>
void ParallelFor(int count, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void RunSpec::Validate() const {
  if (!IsTask(task)) throw std::invalid_argument("unknown task: " + task);
  if (input.empty() && observation.empty()) {
    throw std::invalid_argument("need --input or --observation");
  }
  if ((task == "deblur" || task == "sr") && kernel.empty()) {
    throw std::invalid_argument(task + " requires --kernel");
  }
  if (task == "inpaint" && mask.empty()) {
    throw std::invalid_argument("inpaint requires --mask");
  }
  if (weights.empty() && gmm.empty() && !quadratic_alpha) {
    throw std::invalid_argument(
        "need a prior: --weights, --gmm or --quadratic-alpha");
  }
  if (!(nu >= 0.0)) throw std::invalid_argument("nu must be >= 0");
  if (lambda_nu && !(*lambda_nu > 0.0)) {
    throw std::invalid_argument("lambda-nu must be > 0");
  }
  if (sigma_d && !(*sigma_d >= 0.0)) throw std::invalid_argument("sigma-d must be >= 0");
  if (sigma_ratio && !(*sigma_ratio >= 0.0)) {
    throw std::invalid_argument("sigma-ratio must be >= 0");
  }
  if (tau0 && !(*tau0 > 0.0)) throw std::invalid_argument("tau0 must be > 0");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must be in (0,1)");
  if (!(gamma > 0.0 && gamma < 0.5)) {
    throw std::invalid_argument("gamma must be in (0,1/2)");
  }
  if (eps && !(*eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
  if (max_iter && *max_iter < 0) throw std::invalid_argument("max-iter must be >= 0");
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  if (blur_type != "motion" && blur_type != "static") {
    throw std::invalid_argument("blur-type must be motion or static");
  }
  if (sr_init != "zerofill" && sr_init != "bicubic") {
    throw std::invalid_argument("sr-init must be zerofill or bicubic");
  }
  if (!(init_noise >= 0.0)) throw std::invalid_argument("init-noise must be >= 0");
}

ResolvedRun ResolveDefaults(const RunSpec& spec) {
  spec.Validate();
  ResolvedRun r;
  SolverConfig& c = r.solver;
  c.eta = spec.eta;
  c.gamma = spec.gamma;
  c.box_projection = spec.box_projection;
  double lambda = 1.0;
  double ratio = 1.0;
  if (spec.task == "deblur") {
    lambda = spec.blur_type == "motion" ? 0.1 : 0.075;
    ratio = 1.8;
    c.epsilon = 1e-5;
    c.max_iterations = 400;
  } else if (spec.task == "sr") {
    lambda = 0.065;
    ratio = 2.0;
    c.epsilon = 1e-6;
    c.max_iterations = 400;
  } else if (spec.task == "inpaint") {
    // Fixed stepsize with lambda * tau = 1; stops on the iteration cap only.
    lambda = 1.0;
    c.max_iterations = 100;
    c.backtracking = false;
    c.final_gradient_step = false;
    c.stop_on_objective = false;
    r.warmup_sigma = kInpaintWarmupSigma;
    r.warmup_iterations = kInpaintWarmupIterations;
  } else {  // denoise-only
    c.max_iterations = 0;
  }
  c.lambda = spec.lambda_nu.value_or(lambda);
  c.tau0 = spec.tau0.value_or(1.0 / c.lambda);
  if (spec.eps) c.epsilon = *spec.eps;
  if (spec.max_iter) c.max_iterations = *spec.max_iter;
  if (spec.final_step) c.final_gradient_step = *spec.final_step;
  if (spec.sigma_d) {
    r.sigma = *spec.sigma_d;
  } else if (spec.task == "inpaint" && !spec.sigma_ratio) {
    r.sigma = kInpaintSigma;
  } else {
    r.sigma = spec.sigma_ratio.value_or(ratio) * spec.nu;
  }
  if (spec.task == "inpaint" && spec.sigma_d && !spec.sigma_ratio) {
    // An explicit level disables the warm-up schedule only if it is lower.
    r.warmup_iterations = r.sigma < kInpaintWarmupSigma ? r.warmup_iterations : 0;
  }
  return r;
}

std::unique_ptr<GradientPrior> MakePrior(const RunSpec& spec, double sigma,
                                         const Image& like) {
  if (!spec.weights.empty()) {
    return std::make_unique<NetworkPrior>(
        std::make_shared<GsNetwork>(LoadNetwork(spec.weights)), sigma);
  }
  if (!spec.gmm.empty()) {
    GaussianMixture mixture = LoadGmm(spec.gmm);
    if (mixture.dimension() != like.size()) {
      throw std::invalid_argument("gmm dimension does not match image size");
    }
    return std::make_unique<GmmPrior>(
        std::make_shared<GaussianMixture>(
            mixture.Reshaped(like.width(), like.height(), like.channels())),
        sigma);
  }
  if (spec.quadratic_alpha) {
    return std::make_unique<QuadraticPrior>(
        *spec.quadratic_alpha, Image::Like(like, spec.quadratic_center), sigma);
  }
  throw std::invalid_argument("no prior configured");
}

Image BicubicUpsample(const Image& low, int scale) {
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  Image out(low.width() * scale, low.height() * scale, low.channels());
  // Output pixel (i, j) sits at low-res coordinate (i / s, j / s), matching
  // the decimation grid that keeps sample (s i, s j).
  for (int c = 0; c < low.channels(); ++c) {
    for (int i = 0; i < out.height(); ++i) {
      const double sy = static_cast<double>(i) / scale;
      const int y0 = static_cast<int>(std::floor(sy));
      for (int j = 0; j < out.width(); ++j) {
        const double sx = static_cast<double>(j) / scale;
        const int x0 = static_cast<int>(std::floor(sx));
        double acc = 0.0;
        for (int dy = -1; dy <= 2; ++dy) {
          const double wy = CubicWeight(sy - (y0 + dy));
          for (int dx = -1; dx <= 2; ++dx) {
            acc += wy * CubicWeight(sx - (x0 + dx)) *
                   low.at(c, Wrap(y0 + dy, low.height()),
                          Wrap(x0 + dx, low.width()));
          }
        }
        out.at(c, i, j) = acc;
      }
    }
  }
  return out;
}

Problem BuildProblem(const RunSpec& spec, const ResolvedRun& resolved,
                     const GradientPrior& prior) {
  std::optional<Image> truth;
  if (!spec.input.empty()) truth = LoadImage(spec.input);

  auto grid_of = [&]() -> std::pair<int, int> {
    if (truth) return {truth->width(), truth->height()};
    const Image obs = LoadImage(spec.observation);
    if (spec.task == "sr") {
      return {obs.width() * spec.scale, obs.height() * spec.scale};
    }
    return {obs.width(), obs.height()};
  };
  const auto [width, height] = grid_of();

  std::optional<Degradation> degradation;
  if (spec.task == "deblur") {
    degradation = Degradation::Deblur(LoadKernel(spec.kernel), width, height);
  } else if (spec.task == "sr") {
    degradation = Degradation::SuperResolve(LoadKernel(spec.kernel), spec.scale,
                                            width, height);
  } else if (spec.task == "inpaint") {
    degradation = Degradation::Inpaint(LoadMask(spec.mask));
  } else {
    degradation = Degradation::Deblur(BlurKernel::Delta(), width, height);
  }

  Image y;
  if (!spec.observation.empty()) {
    y = LoadImage(spec.observation);
  } else if (spec.task == "inpaint") {
    y = degradation->Apply(*truth);  // noiseless
  } else {
    y = AddGaussianNoise(degradation->Apply(*truth), spec.nu, spec.seed);
  }

  Image z0;
  if (spec.task == "sr") {
    if (spec.sr_init == "bicubic") {
      z0 = BicubicUpsample(y, spec.scale);
    } else {
      Image up = DecimateAdjoint(y, spec.scale);
      up *= static_cast<double>(spec.scale) * spec.scale;
      z0 = prior.Denoise(up);
    }
  } else if (spec.task == "inpaint") {
    const Image& m = degradation->mask();
    z0 = y;
    const std::size_t n = z0.plane_size();
    for (int c = 0; c < z0.channels(); ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double mi = m[(m.channels() == 1 ? 0 : c) * n + i];
        z0[c * n + i] = mi * y[c * n + i] + (1.0 - mi) * 0.5;
      }
    }
  } else {
    z0 = y;
  }
  if (spec.init_noise > 0.0) {
    z0 = AddGaussianNoise(z0, spec.init_noise, spec.seed + 0x9e3779b97f4a7c15ULL);
  }
  (void)resolved;
  return Problem{std::move(*degradation), std::move(y), std::move(truth),
                 std::move(z0)};
}

RestoreOutcome Restore(const RunSpec& spec) {
  const ResolvedRun resolved = ResolveDefaults(spec);
  // The prior needs the high-resolution grid.
  Image like;
  if (!spec.input.empty()) {
    like = LoadImage(spec.input);
  } else {
    const Image obs = LoadImage(spec.observation);
    const int s = spec.task == "sr" ? spec.scale : 1;
    like = Image(obs.width() * s, obs.height() * s, obs.channels());
  }
  const auto prior = MakePrior(spec, resolved.sigma, like);
  std::unique_ptr<GradientPrior> warmup;
  if (resolved.warmup_iterations > 0) {
    warmup = prior->WithSigma(resolved.warmup_sigma);
  }

  Problem problem = BuildProblem(spec, resolved, *prior);
  RestoreOutcome outcome{{}, std::move(problem), resolved};
  const Problem& p = outcome.problem;

  if (spec.task == "denoise-only") {
    outcome.solver.restored = prior->Denoise(p.observation);
    outcome.solver.last_iterate = outcome.solver.restored;
    outcome.solver.stop = StopReason::kConverged;
  } else {
    RunOptions options;
    options.ground_truth = p.ground_truth ? &*p.ground_truth : nullptr;
    options.warmup_prior = warmup.get();
    options.warmup_iterations = resolved.warmup_iterations;
    outcome.solver =
        Run(p.observation, p.degradation, *prior, resolved.solver, p.initial,
            options);
  }
  outcome.iterations = static_cast<int>(outcome.solver.trace.records.size());
  for (const auto& r : outcome.solver.trace.records) {
    outcome.total_backtracks += r.backtracks;
  }
  if (p.ground_truth) {
    outcome.psnr = Psnr(*p.ground_truth, outcome.solver.restored);
    if (p.ground_truth->SameShape(p.observation)) {
      outcome.observation_psnr = Psnr(*p.ground_truth, p.observation);
    }
  }
  return outcome;
}

std::string SummaryJson(const RunSpec& spec, const RestoreOutcome& outcome) {
  const auto& trace = outcome.solver.trace;
  nlohmann::ordered_json j;
  j["task"] = spec.task;
  j["stop_reason"] = StopReasonName(outcome.solver.stop);
  j["iterations"] = outcome.iterations;
  j["total_backtracks"] = outcome.total_backtracks;
  j["psnr"] = JsonNumber(outcome.psnr);
  j["observation_psnr"] = JsonNumber(outcome.observation_psnr);
  j["final_objective"] = JsonNumber(
      trace.records.empty() ? trace.initial_objective : trace.records.back().objective);
  j["initial_objective"] = JsonNumber(trace.initial_objective);
  j["final_tau"] = JsonNumber(outcome.solver.final_tau);
  j["lambda_nu"] = outcome.resolved.solver.lambda;
  j["sigma"] = outcome.resolved.sigma;
  j["nu"] = spec.nu;
  j["path_length"] = JsonNumber(trace.path_length);
  j["box_activated"] = trace.box_activated;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

int CmdRestore(const RunSpec& spec) {
  try {
    const RestoreOutcome outcome = Restore(spec);
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);
    const Image& restored = outcome.solver.restored;
    SaveImage(restored, (dir / "restored.gsf").string());
    SaveImage(restored, (dir / ("restored" + ImageExtension(restored))).string());
    SaveImage(outcome.problem.observation, (dir / "observation.gsf").string());
    WriteTraceCsv(outcome.solver.trace, (dir / "trace.csv").string());
    WriteText(dir / "summary.json", SummaryJson(spec, outcome));
    switch (outcome.solver.stop) {
      case StopReason::kConverged:
        return 0;
      case StopReason::kIterationCap:
        return 2;
      case StopReason::kDiverged:
        std::cerr << "restore: objective became non-finite\n";
        return 1;
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "restore: " << e.what() << "\n";
    return 1;
  }
}

int EffectiveThreads(int requested) {
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("GSPNP_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1) n = std::min(n, c);
  }
  return n;
}

int CmdSweep(const SweepSpec& spec) {
  try {
    if (spec.lambda_nu.empty() || spec.sigma_ratio.empty()) {
      throw std::invalid_argument("sweep grid is empty");
    }
    struct Cell {
      double lambda_nu;
      double sigma_ratio;
      double psnr = std::numeric_limits<double>::quiet_NaN();
      int iterations = 0;
      std::string status = "error";
    };
    std::vector<Cell> cells;
    for (double l : spec.lambda_nu) {
      for (double r : spec.sigma_ratio) cells.push_back({l, r});
    }
    const fs::path dir(spec.base.out_dir);
    fs::create_directories(dir);
    ParallelFor(static_cast<int>(cells.size()), EffectiveThreads(spec.base.threads),
                [&](int i) {
                  Cell& cell = cells[i];
                  RunSpec run = spec.base;
                  run.lambda_nu = cell.lambda_nu;
                  run.sigma_ratio = cell.sigma_ratio;
                  run.sigma_d.reset();
                  run.tau0.reset();
                  run.out_dir = (dir / ("cell_" + std::to_string(i))).string();
                  try {
                    const RestoreOutcome o = Restore(run);
                    fs::create_directories(run.out_dir);
                    WriteTraceCsv(o.solver.trace,
                                  (fs::path(run.out_dir) / "trace.csv").string());
                    WriteText(fs::path(run.out_dir) / "summary.json",
                              SummaryJson(run, o));
                    cell.psnr = o.psnr;
                    cell.iterations = o.iterations;
                    cell.status = StopReasonName(o.solver.stop);
                  } catch (const std::exception& e) {
                    cell.status = "error";
                  }
                });
    std::ostringstream csv;
    csv << "lambda_nu,sigma_ratio,psnr,iterations,status\n";
    for (const auto& c : cells) {
      csv << Fmt(c.lambda_nu) << "," << Fmt(c.sigma_ratio) << "," << Fmt(c.psnr)
          << "," << c.iterations << "," << c.status << "\n";
    }
    WriteText(dir / "sweep.csv", csv.str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "sweep: " << e.what() << "\n";
    return 1;
  }
}

int CmdDiagnose(const DiagnoseSpec& spec) {
  try {
    if (spec.probes < 1) throw std::invalid_argument("probes must be >= 1");
    const RunSpec& base = spec.base;
    const ResolvedRun resolved = ResolveDefaults(base);
    const RestoreOutcome outcome = Restore(base);
    const Problem& p = outcome.problem;
    const Image& reference = p.ground_truth ? *p.ground_truth : outcome.solver.last_iterate;
    const auto prior = MakePrior(base, resolved.sigma, reference);

    const fs::path dir(base.out_dir);
    fs::create_directories(dir);

    // Lipschitz constant of grad g at noisy probes around the reference.
    std::vector<double> estimates(spec.probes);
    ParallelFor(spec.probes, EffectiveThreads(base.threads), [&](int i) {
      const Image probe =
          AddGaussianNoise(reference, spec.probe_sigma, base.seed + 1000 + i);
      estimates[i] = EstimateHessianSpectralNorm(*prior, probe,
                                                 spec.power_iterations,
                                                 base.seed + i);
    });
    std::ostringstream lip;
    lip << "probe,lipschitz\n";
    for (int i = 0; i < spec.probes; ++i) lip << i << "," << Fmt(estimates[i]) << "\n";
    WriteText(dir / "lipschitz.csv", lip.str());

    std::ostringstream exp;
    exp << "k,expansiveness\n";
    for (const auto& r : outcome.solver.trace.records) {
      exp << r.k << "," << Fmt(r.expansiveness) << "\n";
    }
    WriteText(dir / "expansiveness.csv", exp.str());

    double lipschitz = *std::max_element(estimates.begin(), estimates.end());
    if (!outcome.solver.trace.records.empty()) {
      lipschitz = std::max(lipschitz, EstimateHessianSpectralNorm(
                                          *prior, outcome.solver.last_iterate,
                                          spec.power_iterations, base.seed));
    }
    const double tau = outcome.solver.final_tau;
    const double lambda = resolved.solver.lambda;
    nlohmann::ordered_json report;
    report["lipschitz"] = lipschitz;
    report["tau"] = tau;
    report["lambda_nu"] = lambda;
    report["iterations"] = outcome.iterations;
    std::ostringstream rate;
    rate << "k,gamma,bound\n";
    if (outcome.solver.trace.records.size() >= 2 && lambda * tau * lipschitz < 1.0) {
      const RateBoundReport r =
          RateBoundCheck(outcome.solver.trace, tau, lambda, lipschitz);
      report["applicable"] = true;
      report["holds"] = r.holds;
      report["first_violation"] = r.first_violation;
      int violations = 0;
      for (std::size_t i = 0; i < r.gammas.size(); ++i) {
        rate << outcome.solver.trace.records[i].k << "," << Fmt(r.gammas[i]) << ","
             << Fmt(r.bounds[i]) << "\n";
        if (r.gammas[i] > r.bounds[i] + 1e-12 * std::max(r.bounds[i], r.gammas[i])) {
          ++violations;
        }
      }
      report["violations"] = violations;
    } else {
      report["applicable"] = false;
    }
    WriteText(dir / "rate_bound.csv", rate.str());
    WriteText(dir / "rate_bound.json", report.dump(2) + "\n");
    WriteTraceCsv(outcome.solver.trace, (dir / "trace.csv").string());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "diagnose: " << e.what() << "\n";
    return 1;
  }
}

int CmdInitRobustness(const InitRobustnessSpec& spec) {
  try {
    if (spec.sigma_init.empty()) throw std::invalid_argument("empty sigma-init list");
    struct Row {
      double sigma_init;
      double psnr = std::numeric_limits<double>::quiet_NaN();
      int iterations = 0;
      std::string status = "error";
    };
    std::vector<Row> rows;
    for (double s : spec.sigma_init) rows.push_back({s});
    const fs::path dir(spec.base.out_dir);
    fs::create_directories(dir);
    ParallelFor(static_cast<int>(rows.size()), EffectiveThreads(spec.base.threads),
                [&](int i) {
                  RunSpec run = spec.base;
                  run.init_noise = rows[i].sigma_init;
                  try {
                    const RestoreOutcome o = Restore(run);
                    rows[i].psnr = o.psnr;
                    rows[i].iterations = o.iterations;
                    rows[i].status = StopReasonName(o.solver.stop);
                  } catch (const std::exception&) {
                    rows[i].status = "error";
                  }
                });
    std::ostringstream csv;
    csv << "sigma_init,psnr,iterations,status\n";
    for (const auto& r : rows) {
      csv << Fmt(r.sigma_init) << "," << Fmt(r.psnr) << "," << r.iterations << ","
          << r.status << "\n";
    }
    WriteText(dir / "init_robustness.csv", csv.str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "init-robustness: " << e.what() << "\n";
    return 1;
  }
}

int CmdTrain(const TrainSpec& spec) {
  try {
    TrainConfig cfg;
    cfg.sigma_max = spec.sigma_max;
    cfg.batch_size = spec.batch;
    cfg.steps = spec.steps;
    cfg.learning_rate = spec.learning_rate;
    cfg.seed = spec.seed;
    cfg.threads = EffectiveThreads(spec.threads);
    int channels = spec.channels;
    if (spec.data == "gmm") {
      if (spec.gmm.empty()) throw std::invalid_argument("gmm data needs --gmm");
      auto mixture = std::make_shared<GaussianMixture>(LoadGmm(spec.gmm));
      channels = 1;
      cfg.data_source = GmmSamples{mixture};
    } else if (spec.data == "synthetic") {
      cfg.data_source = SyntheticImages{spec.patch, spec.patch, spec.channels};
    } else {
      throw std::invalid_argument("data must be synthetic or gmm");
    }
    GsNetwork net = spec.init_weights.empty()
                        ? GsNetwork::Random(channels, spec.hidden, spec.depth,
                                            spec.kernel_size, spec.seed + 1)
                        : LoadNetwork(spec.init_weights);
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);
    try {
      TrainResult result = Train(std::move(net), cfg);
      SaveNetwork(result.net, (dir / "weights.gsw").string());
      WriteLossHistoryCsv(result.history, (dir / "loss.csv").string());
    } catch (const TrainingDiverged& e) {
      WriteLossHistoryCsv(e.history(), (dir / "loss.csv").string());
      throw;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gspnp
