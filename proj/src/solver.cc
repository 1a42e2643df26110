#include "gspnp/solver.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace gspnp {

namespace {

constexpr double kEpsilon = std::numeric_limits<double>::epsilon();
constexpr double kRoundoffUlps = 8.0;

double Fidelity(const Degradation& d, const Image& x, const Image& y) {
  return d.Fidelity(x, y);
}

// Non-owning shared_ptr so a caller's prior can be wrapped.
std::shared_ptr<const GradientPrior> Borrow(const GradientPrior& prior) {
  return std::shared_ptr<const GradientPrior>(std::shared_ptr<void>(), &prior);
}

std::string FormatDouble(double v) {
  std::ostringstream s;
  s.precision(17);
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  s << v;
  return s.str();
}

}  // namespace

void SolverConfig::Validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must be in (0,1)");
  if (!(gamma > 0.0 && gamma < 0.5)) {
    throw std::invalid_argument("gamma must be in (0,1/2)");
  }
  if (!(tau0 > 0.0)) throw std::invalid_argument("tau0 must be > 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (max_iterations < 0) throw std::invalid_argument("max_iterations must be >= 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (max_backtracks < 0) throw std::invalid_argument("max_backtracks must be >= 0");
}

const char* StopReasonName(StopReason reason) {
  switch (reason) {
    case StopReason::kConverged:
      return "converged";
    case StopReason::kIterationCap:
      return "iteration_cap";
    case StopReason::kDiverged:
      return "diverged";
  }
  return "unknown";
}

double Objective(const Image& x, const Degradation& d, const Image& y,
                 const GradientPrior& prior, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  const double f = Fidelity(d, x, y);
  if (lambda == 0.0) return f;
  return f + lambda * prior.Energy(x);
}

Image GsPnpStep(const Image& x, double tau, double lambda,
                const GradientPrior& prior, const Degradation& d,
                const Image& y) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  return d.Prox(AddScaled(x, -tau * lambda, prior.Gradient(x)), y, tau);
}

BacktrackResult Backtrack(const Image& x, double x_objective,
                          const GradientPrior::Evaluation& x_eval, double tau,
                          const GradientPrior& prior, const Degradation& d,
                          const Image& y, const SolverConfig& cfg) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  for (int shrinks = 0;; ++shrinks) {
    Image next = d.Prox(AddScaled(x, -tau * cfg.lambda, x_eval.gradient), y, tau);
    GradientPrior::Evaluation eval = prior.Evaluate(next);
    const double objective = Fidelity(d, next, y) + cfg.lambda * eval.energy;
    const double decrease = x_objective - objective;
    const double required = cfg.gamma / tau * SquaredDistance(next, x);
    // Near a stationary point both sides fall below the resolution of F;
    // shrinking tau cannot fix roundoff, so allow a few ulps of |F(x)|.
    const double slack = kRoundoffUlps * kEpsilon * std::abs(x_objective);
    if (std::isfinite(objective) && decrease >= required - slack) {
      return {std::move(next), tau, objective, std::move(eval), shrinks};
    }
    if (shrinks >= cfg.max_backtracks) {
      std::ostringstream msg;
      msg << "backtracking exceeded " << cfg.max_backtracks
          << " shrinks (tau = " << tau << ")";
      throw BacktrackingFailed(msg.str());
    }
    tau *= cfg.eta;
  }
}

SolverResult Run(const Image& y, const Degradation& d,
                 const GradientPrior& prior_in, const SolverConfig& cfg,
                 const Image& z0, const RunOptions& options) {
  cfg.Validate();
  std::unique_ptr<GradientPrior> boxed_main, boxed_warmup;
  const GradientPrior* main_prior = &prior_in;
  const GradientPrior* warmup_prior = options.warmup_prior;
  if (cfg.box_projection) {
    boxed_main = std::make_unique<BoxAugmentedPrior>(Borrow(prior_in));
    main_prior = boxed_main.get();
    if (warmup_prior != nullptr) {
      boxed_warmup = std::make_unique<BoxAugmentedPrior>(Borrow(*warmup_prior));
      warmup_prior = boxed_warmup.get();
    }
  }
  auto prior_for = [&](int k) -> const GradientPrior& {
    return (warmup_prior != nullptr && k < options.warmup_iterations)
               ? *warmup_prior
               : *main_prior;
  };

  SolverResult result;
  SolverTrace& trace = result.trace;
  double tau = cfg.tau0;
  Image x = d.Prox(z0, y, tau);
  const GradientPrior* active = &prior_for(0);
  GradientPrior::Evaluation eval = active->Evaluate(x);
  double objective = Fidelity(d, x, y) + cfg.lambda * eval.energy;
  trace.initial_objective = objective;
  trace.initial_norm_sq = SquaredNorm(x);
  trace.box_activated = cfg.box_projection && BoxAugmentedPrior::Active(x);
  const double norm0 = trace.initial_norm_sq > 0.0 ? trace.initial_norm_sq : 1.0;
  const double scale0 = objective != 0.0 ? std::abs(objective) : 1.0;
  double gamma_min = std::numeric_limits<double>::infinity();

  result.stop = StopReason::kIterationCap;
  if (!std::isfinite(objective)) result.stop = StopReason::kDiverged;

  for (int k = 0; k < cfg.max_iterations && result.stop != StopReason::kDiverged;
       ++k) {
    const GradientPrior& step_prior = prior_for(k);
    if (&step_prior != active) {
      active = &step_prior;
      eval = active->Evaluate(x);
      objective = Fidelity(d, x, y) + cfg.lambda * eval.energy;
    }

    Image next;
    GradientPrior::Evaluation next_eval;
    double next_objective;
    int shrinks = 0;
    if (cfg.backtracking) {
      BacktrackResult bt = Backtrack(x, objective, eval, tau, *active, d, y, cfg);
      next = std::move(bt.next);
      next_eval = std::move(bt.next_eval);
      next_objective = bt.objective;
      tau = bt.tau;
      shrinks = bt.shrinks;
    } else {
      next = d.Prox(AddScaled(x, -tau * cfg.lambda, eval.gradient), y, tau);
      next_eval = active->Evaluate(next);
      next_objective = Fidelity(d, next, y) + cfg.lambda * next_eval.energy;
    }

    TraceRecord rec{};
    rec.k = k + 1;
    rec.objective = next_objective;
    rec.fidelity = Fidelity(d, next, y);
    rec.regularizer = next_eval.energy;
    rec.tau = tau;
    rec.residual_sq = SquaredDistance(next, x);
    gamma_min = std::min(gamma_min, rec.residual_sq);
    rec.gamma_k = gamma_min / norm0;
    rec.backtracks = shrinks;
    rec.psnr = options.ground_truth != nullptr
                   ? Psnr(*options.ground_truth, next)
                   : std::numeric_limits<double>::quiet_NaN();
    // D = Id - grad g, from the evaluations already at hand.
    if (rec.residual_sq > 0.0) {
      const Image d_next = next - next_eval.gradient;
      const Image d_prev = x - eval.gradient;
      rec.expansiveness =
          std::sqrt(SquaredDistance(d_next, d_prev) / rec.residual_sq);
    } else {
      rec.expansiveness = std::numeric_limits<double>::quiet_NaN();
    }
    rec.objective_change = (objective - next_objective) / scale0;
    trace.records.push_back(rec);
    trace.path_length += std::sqrt(rec.residual_sq);
    if (cfg.box_projection && BoxAugmentedPrior::Active(next)) {
      trace.box_activated = true;
    }

    x = std::move(next);
    eval = std::move(next_eval);
    objective = next_objective;
    if (!std::isfinite(objective) || !x.AllFinite()) {
      result.stop = StopReason::kDiverged;
      break;
    }
    if (cfg.stop_on_objective && rec.objective_change < cfg.epsilon) {
      result.stop = StopReason::kConverged;
      break;
    }
  }

  result.final_tau = tau;
  result.last_iterate = x;
  if (cfg.final_gradient_step && cfg.max_iterations > 0 &&
      result.stop != StopReason::kDiverged) {
    const Image& grad =
        active == main_prior ? eval.gradient : main_prior->Gradient(x);
    result.restored = AddScaled(x, -cfg.lambda * tau, grad);
  } else {
    result.restored = x;
  }
  return result;
}

double StationarityResidual(const Image& x, const Degradation& d,
                            const Image& y, const GradientPrior& prior,
                            double lambda) {
  Image reg = prior.Gradient(x);
  reg *= lambda;
  if (d.smooth()) return Norm(d.FidelityGradient(x, y) + reg);
  // Keep only the unobserved entries: (I - A) lambda grad g.
  return Norm(reg - d.Apply(reg));
}

RateBoundReport RateBoundCheck(const SolverTrace& trace, double tau,
                               double lambda, double lipschitz) {
  if (trace.records.size() < 2) {
    throw std::invalid_argument("rate bound needs at least two iterations");
  }
  if (!(lambda * tau * lipschitz < 1.0)) {
    throw std::invalid_argument("rate bound requires lambda * tau * L < 1");
  }
  const double denom = 1.0 / (2.0 * tau) - lambda * lipschitz / 2.0;
  const double total =
      trace.initial_objective - trace.records.back().objective;
  const double norm0 = trace.initial_norm_sq > 0.0 ? trace.initial_norm_sq : 1.0;
  RateBoundReport report;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    const double gamma = trace.records[i].gamma_k * norm0;
    const double bound = total / (k * denom);
    report.gammas.push_back(gamma);
    report.bounds.push_back(bound);
    // Relative slack for the roundoff in the normalization above.
    if (report.holds && gamma > bound + 1e-12 * std::max(std::abs(bound), gamma)) {
      report.holds = false;
      report.first_violation = trace.records[i].k;
    }
  }
  return report;
}

std::string TraceCsv(const SolverTrace& trace) {
  std::ostringstream out;
  out << "k,F,f,g,tau,residual_sq,gamma_k,backtracks,psnr,expansiveness\n";
  for (const auto& r : trace.records) {
    out << r.k << "," << FormatDouble(r.objective) << ","
        << FormatDouble(r.fidelity) << "," << FormatDouble(r.regularizer) << ","
        << FormatDouble(r.tau) << "," << FormatDouble(r.residual_sq) << ","
        << FormatDouble(r.gamma_k) << "," << r.backtracks << ","
        << FormatDouble(r.psnr) << "," << FormatDouble(r.expansiveness) << "\n";
  }
  return out.str();
}

void WriteTraceCsv(const SolverTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << TraceCsv(trace);
}

}  // namespace gspnp
