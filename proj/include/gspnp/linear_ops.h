#ifndef GSPNP_LINEAR_OPS_H_
#define GSPNP_LINEAR_OPS_H_

#include <string>
#include <vector>

#include "gspnp/fft.h"
#include "gspnp/image.h"

namespace gspnp {

// 2-D convolution taps. Tap (anchor_row, anchor_col) multiplies the pixel at
// the output location; tap (r, c) reads the input at offset
// (anchor_row - r, anchor_col - c), wrapped circularly.
struct BlurKernel {
  int rows = 1;
  int cols = 1;
  int anchor_row = 0;
  int anchor_col = 0;
  std::vector<double> taps{1.0};

  double tap(int r, int c) const { return taps[r * cols + c]; }

  static BlurKernel Delta() { return BlurKernel{}; }
  // Anchor defaults to the centre tap (rows/2, cols/2).
  static BlurKernel FromTaps(int rows, int cols, std::vector<double> taps);
  static BlurKernel FromTaps(int rows, int cols, int anchor_row, int anchor_col,
                             std::vector<double> taps);
  static BlurKernel Box(int size);
  static BlurKernel Gaussian(int size, double stddev);

  // Returns a copy scaled to unit sum. Throws if the sum is zero or not finite.
  BlurKernel Normalized() const;
};

// Text format: "rows cols anchor_row anchor_col" followed by rows*cols
// floats. The loaded kernel is normalized to sum 1.
BlurKernel LoadKernel(const std::string& path);
void SaveKernel(const BlurKernel& kernel, const std::string& path);

// Eigenvalues of the circular convolution matrix H in the DFT basis, so that
// H x = IFFT(values * FFT(x)) on a height x width plane.
struct FourierDiagonal {
  int height = 0;
  int width = 0;
  Spectrum values;
};

FourierDiagonal BuildFourierDiagonal(const BlurKernel& kernel, int width,
                                     int height);

// Circular convolution through the FFT. Each channel is filtered
// independently.
Image CircularConvolve(const Image& x, const BlurKernel& kernel);
// H x (or H^T x with adjoint = true) using a precomputed diagonal.
Image ApplyFourierDiagonal(const Image& x, const FourierDiagonal& diagonal,
                           bool adjoint = false);

// argmin_x 0.5 |x - z|^2 + (tau / 2) |H x - y|^2
Image ProxDeblur(const Image& z, const Image& y, double tau,
                 const FourierDiagonal& diagonal);

// Keeps samples (s*i, s*j).
Image Decimate(const Image& x, int scale);
// Zero-filled upsampling, the transpose of Decimate.
Image DecimateAdjoint(const Image& y, int scale);

// argmin_x 0.5 |x - z|^2 + (tau / 2) |S H x - y|^2, with `diagonal` built on
// the high-resolution grid and y on the low-resolution grid.
Image ProxSuperResolve(const Image& z, const Image& y, double tau,
                       const FourierDiagonal& diagonal, int scale);

// Projection onto {x : M x = M y}. The mask has one channel (broadcast) or as
// many channels as z, with entries in {0, 1}.
Image ProxInpaint(const Image& z, const Image& y, const Image& mask);

class Degradation {
 public:
  enum class Kind { kDeblur, kSuperResolve, kInpaint };

  // Operators are bound to the high-resolution grid they act on.
  static Degradation Deblur(const BlurKernel& kernel, int width, int height);
  static Degradation SuperResolve(const BlurKernel& kernel, int scale,
                                  int width, int height);
  static Degradation Inpaint(Image mask);

  Kind kind() const { return kind_; }
  int scale() const { return scale_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const BlurKernel& kernel() const { return kernel_; }
  const FourierDiagonal& diagonal() const { return diagonal_; }
  const Image& mask() const { return mask_; }
  bool smooth() const { return kind_ != Kind::kInpaint; }

  // A x and A^T y.
  Image Apply(const Image& x) const;
  Image ApplyAdjoint(const Image& y) const;
  // Prox of tau * f at z. The inpainting prox ignores tau.
  Image Prox(const Image& z, const Image& y, double tau) const;
  // f(x): 0.5 |A x - y|^2, or the indicator of {A x = y} for inpainting
  // (0 within 1e-9, +infinity otherwise).
  double Fidelity(const Image& x, const Image& y) const;
  // A^T (A x - y); only defined for smooth fidelities.
  Image FidelityGradient(const Image& x, const Image& y) const;

  // Grid check shared by every entry point.
  void CheckHighRes(const Image& x, const char* what) const;

 private:
  Degradation() = default;

  Kind kind_ = Kind::kDeblur;
  int scale_ = 1;
  int width_ = 0;
  int height_ = 0;
  BlurKernel kernel_;
  FourierDiagonal diagonal_;
  Image mask_;
};

inline double DataFidelity(const Image& x, const Image& y,
                           const Degradation& d) {
  return d.Fidelity(x, y);
}

}  // namespace gspnp

#endif  // GSPNP_LINEAR_OPS_H_
