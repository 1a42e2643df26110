#ifndef GSPNP_DIAGNOSTICS_H_
#define GSPNP_DIAGNOSTICS_H_

#include <cstdint>

#include "gspnp/image.h"
#include "gspnp/prior.h"

namespace gspnp {

// Power iteration for the spectral norm of the Hessian of g at x. Each
// Hessian-vector product is the centred difference
// [grad(x + e u) - grad(x - e u)] / (2 e) with e = 1e-4 |x| / |u|.
// Returns |H v| for the final unit iterate v, which is nonnegative.
double EstimateHessianSpectralNorm(const GradientPrior& prior, const Image& x,
                                   int iterations, std::uint64_t seed = 0);

// |D(x1) - D(x2)| / |x1 - x2| for the prior's denoiser.
double ExpansivenessRatio(const GradientPrior& prior, const Image& x1,
                          const Image& x2);

}  // namespace gspnp

#endif  // GSPNP_DIAGNOSTICS_H_
