#include "gspnp/fft.h"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace gspnp {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (height, width, sign) and kept for
// the lifetime of the process.
class PlanCache {
 public:
  fftw_plan Get(int height, int width, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(height, width, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(height) * width;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_2d(height, width, in, out, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (plan == nullptr) throw std::runtime_error("fftw planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& Plans() {
  static PlanCache* cache = new PlanCache();
  return *cache;
}

void Execute(int height, int width, int sign, Spectrum& in, Spectrum& out) {
  fftw_plan plan = Plans().Get(height, width, sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

void CheckSize(std::size_t size, int height, int width) {
  if (height < 1 || width < 1 ||
      size != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("fft: plane size does not match grid");
  }
}

}  // namespace

Spectrum Fft2(std::span<const double> plane, int height, int width) {
  CheckSize(plane.size(), height, width);
  Spectrum in(plane.begin(), plane.end());
  Spectrum out(in.size());
  Execute(height, width, FFTW_FORWARD, in, out);
  return out;
}

Spectrum Fft2(std::span<const std::complex<double>> plane, int height,
              int width) {
  CheckSize(plane.size(), height, width);
  Spectrum in(plane.begin(), plane.end());
  Spectrum out(in.size());
  Execute(height, width, FFTW_FORWARD, in, out);
  return out;
}

std::vector<double> InverseFft2Real(std::span<const std::complex<double>> spectrum,
                                    int height, int width) {
  CheckSize(spectrum.size(), height, width);
  Spectrum in(spectrum.begin(), spectrum.end());
  Spectrum out(in.size());
  Execute(height, width, FFTW_BACKWARD, in, out);
  const double scale = 1.0 / static_cast<double>(in.size());
  std::vector<double> real(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) real[i] = out[i].real() * scale;
  return real;
}

}  // namespace gspnp
