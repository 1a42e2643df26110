#ifndef GSPNP_FFT_H_
#define GSPNP_FFT_H_

#include <complex>
#include <span>
#include <vector>

namespace gspnp {

using Spectrum = std::vector<std::complex<double>>;

// 2-D DFT of a height x width row-major plane. Forward is unnormalized, the
// inverse divides by height * width, so Inverse(Forward(x)) = x.
Spectrum Fft2(std::span<const double> plane, int height, int width);
Spectrum Fft2(std::span<const std::complex<double>> plane, int height,
              int width);
// Real part of the normalized inverse transform.
std::vector<double> InverseFft2Real(std::span<const std::complex<double>> spectrum,
                                    int height, int width);

}  // namespace gspnp

#endif  // GSPNP_FFT_H_
