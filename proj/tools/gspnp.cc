// Command-line front end: restore, train, sweep, diagnose, init-robustness.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gspnp/commands.h"

namespace {

using gspnp::RunSpec;

template <typename T>
void AddOptional(CLI::App* app, const std::string& name, std::optional<T>& target,
                 const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void AddRunFlags(CLI::App* app, RunSpec& spec) {
  app->add_option("--task", spec.task, "deblur | sr | inpaint | denoise-only")
      ->capture_default_str();
  app->add_option("--input", spec.input, "clean image; degraded synthetically");
  app->add_option("--observation", spec.observation, "already degraded image");
  app->add_option("--kernel", spec.kernel, "blur kernel file");
  app->add_option("--mask", spec.mask, "inpainting mask image (1 = observed)");
  app->add_option("--weights", spec.weights, "network weights (.gsw)");
  app->add_option("--gmm", spec.gmm, "Gaussian mixture prior file");
  AddOptional(app, "--quadratic-alpha", spec.quadratic_alpha,
              "quadratic prior curvature");
  app->add_option("--quadratic-center", spec.quadratic_center,
                  "quadratic prior center value")
      ->capture_default_str();
  app->add_option("--nu", spec.nu, "observation noise level")->capture_default_str();
  AddOptional(app, "--lambda-nu", spec.lambda_nu, "regularization weight");
  AddOptional(app, "--sigma-d", spec.sigma_d, "denoiser noise level");
  AddOptional(app, "--sigma-ratio", spec.sigma_ratio, "denoiser level / nu");
  AddOptional(app, "--tau0", spec.tau0, "initial stepsize (default 1/lambda-nu)");
  app->add_option("--eta", spec.eta, "backtracking shrink factor")
      ->capture_default_str();
  app->add_option("--gamma", spec.gamma, "sufficient-decrease factor")
      ->capture_default_str();
  AddOptional(app, "--eps", spec.eps, "relative objective-change tolerance");
  AddOptional(app, "--max-iter", spec.max_iter, "iteration cap");
  AddOptional(app, "--final-step", spec.final_step,
              "apply the final gradient step (true/false)");
  app->add_flag("--box", spec.box_projection, "add the box penalty to the prior");
  app->add_option("--blur-type", spec.blur_type, "motion | static")
      ->capture_default_str();
  app->add_option("--scale", spec.scale, "super-resolution factor")
      ->capture_default_str();
  app->add_option("--sr-init", spec.sr_init, "zerofill | bicubic")
      ->capture_default_str();
  app->add_option("--init-noise", spec.init_noise,
                  "standard deviation of noise added to z0")
      ->capture_default_str();
  app->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  app->add_option("--out-dir", spec.out_dir, "output directory")
      ->capture_default_str();
  app->add_option("--threads", spec.threads, "worker threads (0: all cores)")
      ->capture_default_str();
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Expands `--config FILE` (flat key = value lines, '#' comments) into flags.
// Keys already given on the command line are skipped, so flags override the
// file. A value of true/false for a switch such as `box` toggles the switch.
std::vector<std::string> ExpandConfig(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::string config;
  std::set<std::string> given;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      continue;
    }
    if (args[i].rfind("--", 0) == 0) {
      given.insert(args[i].substr(2, args[i].find('=') - 2));
    }
    out.push_back(args[i]);
  }
  if (config.empty()) return out;
  std::ifstream in(config);
  if (!in) throw std::runtime_error("cannot read config " + config);
  std::vector<std::string> extra;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(config + ":" + std::to_string(number) +
                               ": expected key = value");
    }
    std::string key = Trim(line.substr(0, eq));
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    const std::string value = Trim(line.substr(eq + 1));
    if (given.count(key)) continue;
    if (key == "box") {
      if (value == "true" || value == "1") extra.push_back("--box");
      continue;
    }
    extra.push_back("--" + key);
    extra.push_back(value);
  }
  // Subcommand name first, then file values, then the command line.
  if (!out.empty()) {
    out.insert(out.begin() + 1, extra.begin(), extra.end());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-step plug-and-play image restoration"};
  app.require_subcommand(1);

  RunSpec restore_spec;
  CLI::App* restore = app.add_subcommand("restore", "restore one image");
  AddRunFlags(restore, restore_spec);

  gspnp::SweepSpec sweep_spec;
  CLI::App* sweep = app.add_subcommand("sweep", "grid over lambda-nu and sigma/nu");
  AddRunFlags(sweep, sweep_spec.base);
  sweep->add_option("--lambda-grid", sweep_spec.lambda_nu, "lambda-nu values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--ratio-grid", sweep_spec.sigma_ratio, "sigma/nu values")
      ->required()
      ->delimiter(',');

  gspnp::DiagnoseSpec diagnose_spec;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "Lipschitz, expansiveness and rate report");
  AddRunFlags(diagnose, diagnose_spec.base);
  diagnose->add_option("--probes", diagnose_spec.probes, "noisy probe inputs")
      ->capture_default_str();
  diagnose->add_option("--power-iterations", diagnose_spec.power_iterations,
                       "power iterations per probe")
      ->capture_default_str();
  diagnose->add_option("--probe-sigma", diagnose_spec.probe_sigma,
                       "noise level of the probes")
      ->capture_default_str();

  gspnp::InitRobustnessSpec init_spec;
  CLI::App* init =
      app.add_subcommand("init-robustness", "restore from perturbed z0");
  AddRunFlags(init, init_spec.base);
  init->add_option("--sigma-init", init_spec.sigma_init, "perturbation levels")
      ->required()
      ->delimiter(',');

  gspnp::TrainSpec train_spec;
  CLI::App* train = app.add_subcommand("train", "train a gradient-step denoiser");
  train->add_option("--data", train_spec.data, "synthetic | gmm")
      ->capture_default_str();
  train->add_option("--gmm", train_spec.gmm, "mixture to sample when data=gmm");
  train->add_option("--patch", train_spec.patch, "synthetic patch size")
      ->capture_default_str();
  train->add_option("--channels", train_spec.channels, "image channels")
      ->capture_default_str();
  train->add_option("--hidden", train_spec.hidden, "hidden channels")
      ->capture_default_str();
  train->add_option("--depth", train_spec.depth, "convolution layers")
      ->capture_default_str();
  train->add_option("--kernel-size", train_spec.kernel_size, "convolution size")
      ->capture_default_str();
  train->add_option("--steps", train_spec.steps, "Adam steps")->capture_default_str();
  train->add_option("--batch", train_spec.batch, "batch size")->capture_default_str();
  train->add_option("--learning-rate", train_spec.learning_rate, "Adam step size")
      ->capture_default_str();
  train->add_option("--sigma-max", train_spec.sigma_max, "largest training noise")
      ->capture_default_str();
  train->add_option("--seed", train_spec.seed, "random seed")->capture_default_str();
  train->add_option("--init-weights", train_spec.init_weights,
                    "start from these weights");
  train->add_option("--out-dir", train_spec.out_dir, "output directory")
      ->capture_default_str();
  train->add_option("--threads", train_spec.threads, "worker threads")
      ->capture_default_str();

  for (CLI::App* sub : {restore, sweep, diagnose, init, train}) {
    sub->add_option("--config", "flat key = value file; flags override it");
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = ExpandConfig(args);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (restore->parsed()) return gspnp::CmdRestore(restore_spec);
  if (sweep->parsed()) return gspnp::CmdSweep(sweep_spec);
  if (diagnose->parsed()) return gspnp::CmdDiagnose(diagnose_spec);
  if (init->parsed()) return gspnp::CmdInitRobustness(init_spec);
  if (train->parsed()) return gspnp::CmdTrain(train_spec);
  return 1;
}
