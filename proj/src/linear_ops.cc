#include "gspnp/linear_ops.h"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gspnp {

namespace {

int Wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

void CheckScale(int width, int height, int scale) {
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  if (width % scale != 0 || height % scale != 0) {
    throw std::invalid_argument("image dimensions not divisible by scale");
  }
}

void CheckDiagonal(const Image& x, const FourierDiagonal& d, const char* what) {
  if (x.width() != d.width || x.height() != d.height) {
    throw std::invalid_argument(std::string(what) +
                                ": image grid does not match diagonal");
  }
}

// Pixel-wise mask lookup with single-channel broadcast.
double MaskAt(const Image& mask, int c, std::size_t i) {
  const int mc = mask.channels() == 1 ? 0 : c;
  return mask[static_cast<std::size_t>(mc) * mask.plane_size() + i];
}

void CheckMask(const Image& mask, const Image& z) {
  if (mask.width() != z.width() || mask.height() != z.height() ||
      (mask.channels() != 1 && mask.channels() != z.channels())) {
    throw std::invalid_argument("inpaint mask does not match image grid");
  }
  for (double m : mask.samples()) {
    if (m != 0.0 && m != 1.0) {
      throw std::invalid_argument("inpaint mask must be binary");
    }
  }
}

}  // namespace

BlurKernel BlurKernel::FromTaps(int rows, int cols, std::vector<double> taps) {
  return FromTaps(rows, cols, rows / 2, cols / 2, std::move(taps));
}

BlurKernel BlurKernel::FromTaps(int rows, int cols, int anchor_row,
                                int anchor_col, std::vector<double> taps) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("empty kernel");
  if (taps.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("kernel tap count does not match size");
  }
  if (anchor_row < 0 || anchor_row >= rows || anchor_col < 0 ||
      anchor_col >= cols) {
    throw std::invalid_argument("kernel anchor outside support");
  }
  BlurKernel k;
  k.rows = rows;
  k.cols = cols;
  k.anchor_row = anchor_row;
  k.anchor_col = anchor_col;
  k.taps = std::move(taps);
  return k;
}

BlurKernel BlurKernel::Box(int size) {
  return FromTaps(size, size,
                  std::vector<double>(static_cast<std::size_t>(size) * size,
                                      1.0 / (size * size)));
}

BlurKernel BlurKernel::Gaussian(int size, double stddev) {
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  for (int r = 0; r < size; ++r) {
    for (int q = 0; q < size; ++q) {
      const double dr = r - c, dq = q - c;
      taps[r * size + q] = std::exp(-(dr * dr + dq * dq) / (2 * stddev * stddev));
    }
  }
  return FromTaps(size, size, std::move(taps)).Normalized();
}

BlurKernel BlurKernel::Normalized() const {
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  if (!std::isfinite(sum) || sum == 0.0) {
    throw std::invalid_argument("kernel taps must have finite nonzero sum");
  }
  BlurKernel k = *this;
  for (double& t : k.taps) t /= sum;
  return k;
}

BlurKernel LoadKernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open kernel file " + path);
  int rows, cols, ar, ac;
  if (!(in >> rows >> cols >> ar >> ac)) {
    throw std::runtime_error("malformed kernel header in " + path);
  }
  if (rows < 1 || cols < 1 || rows > 4096 || cols > 4096) {
    throw std::runtime_error("bad kernel size in " + path);
  }
  std::vector<double> taps(static_cast<std::size_t>(rows) * cols);
  for (double& t : taps) {
    if (!(in >> t)) throw std::runtime_error("truncated kernel in " + path);
  }
  return BlurKernel::FromTaps(rows, cols, ar, ac, std::move(taps)).Normalized();
}

void SaveKernel(const BlurKernel& kernel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << kernel.rows << " " << kernel.cols << " " << kernel.anchor_row << " "
      << kernel.anchor_col << "\n";
  for (int r = 0; r < kernel.rows; ++r) {
    for (int c = 0; c < kernel.cols; ++c) {
      out << kernel.tap(r, c) << (c + 1 == kernel.cols ? "\n" : " ");
    }
  }
}

FourierDiagonal BuildFourierDiagonal(const BlurKernel& kernel, int width,
                                     int height) {
  if (kernel.rows > height || kernel.cols > width) {
    throw std::invalid_argument("kernel larger than image grid");
  }
  std::vector<double> embedded(static_cast<std::size_t>(width) * height, 0.0);
  for (int r = 0; r < kernel.rows; ++r) {
    for (int c = 0; c < kernel.cols; ++c) {
      const int y = Wrap(r - kernel.anchor_row, height);
      const int x = Wrap(c - kernel.anchor_col, width);
      embedded[y * width + x] += kernel.tap(r, c);
    }
  }
  return FourierDiagonal{height, width, Fft2(embedded, height, width)};
}

Image ApplyFourierDiagonal(const Image& x, const FourierDiagonal& diagonal,
                           bool adjoint) {
  CheckDiagonal(x, diagonal, "ApplyFourierDiagonal");
  Image out = Image::Like(x);
  for (int c = 0; c < x.channels(); ++c) {
    Spectrum spec = Fft2(x.plane(c), x.height(), x.width());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      spec[i] *= adjoint ? std::conj(diagonal.values[i]) : diagonal.values[i];
    }
    const auto plane = InverseFft2Real(spec, x.height(), x.width());
    std::copy(plane.begin(), plane.end(), out.plane(c).begin());
  }
  return out;
}

Image CircularConvolve(const Image& x, const BlurKernel& kernel) {
  return ApplyFourierDiagonal(
      x, BuildFourierDiagonal(kernel, x.width(), x.height()));
}

Image ProxDeblur(const Image& z, const Image& y, double tau,
                 const FourierDiagonal& diagonal) {
  RequireSameShape(z, y, "ProxDeblur");
  CheckDiagonal(z, diagonal, "ProxDeblur");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  if (tau == 0.0) return z;
  Image out = Image::Like(z);
  for (int c = 0; c < z.channels(); ++c) {
    Spectrum zf = Fft2(z.plane(c), z.height(), z.width());
    const Spectrum yf = Fft2(y.plane(c), y.height(), y.width());
    for (std::size_t i = 0; i < zf.size(); ++i) {
      const auto& lam = diagonal.values[i];
      zf[i] = (zf[i] + tau * std::conj(lam) * yf[i]) / (1.0 + tau * std::norm(lam));
    }
    const auto plane = InverseFft2Real(zf, z.height(), z.width());
    std::copy(plane.begin(), plane.end(), out.plane(c).begin());
  }
  return out;
}

Image Decimate(const Image& x, int scale) {
  CheckScale(x.width(), x.height(), scale);
  if (scale == 1) return x;
  Image out(x.width() / scale, x.height() / scale, x.channels());
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < out.height(); ++i) {
      for (int j = 0; j < out.width(); ++j) {
        out.at(c, i, j) = x.at(c, i * scale, j * scale);
      }
    }
  }
  return out;
}

Image DecimateAdjoint(const Image& y, int scale) {
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  if (scale == 1) return y;
  Image out(y.width() * scale, y.height() * scale, y.channels());
  for (int c = 0; c < y.channels(); ++c) {
    for (int i = 0; i < y.height(); ++i) {
      for (int j = 0; j < y.width(); ++j) {
        out.at(c, i * scale, j * scale) = y.at(c, i, j);
      }
    }
  }
  return out;
}

Image ProxSuperResolve(const Image& z, const Image& y, double tau,
                       const FourierDiagonal& diagonal, int scale) {
  CheckDiagonal(z, diagonal, "ProxSuperResolve");
  CheckScale(z.width(), z.height(), scale);
  if (y.width() * scale != z.width() || y.height() * scale != z.height() ||
      y.channels() != z.channels()) {
    throw std::invalid_argument("ProxSuperResolve: low-res grid mismatch");
  }
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  if (tau == 0.0) return z;

  const int h = z.height(), w = z.width();
  const int mh = h / scale, mw = w / scale;
  const double s2 = static_cast<double>(scale) * scale;
  const Image upsampled = DecimateAdjoint(y, scale);
  Image out = Image::Like(z);
  for (int c = 0; c < z.channels(); ++c) {
    // zhat = tau H^T S^T y + z, in the Fourier domain.
    Spectrum zhat = Fft2(z.plane(c), h, w);
    const Spectrum uf = Fft2(upsampled.plane(c), h, w);
    for (std::size_t i = 0; i < zhat.size(); ++i) {
      zhat[i] += tau * std::conj(diagonal.values[i]) * uf[i];
    }
    // Each low-res frequency (p, q) couples the s^2 high-res frequencies
    // congruent to it; the inner system is scalar per (p, q).
    Spectrum result = zhat;
    for (int p = 0; p < mh; ++p) {
      for (int q = 0; q < mw; ++q) {
        std::complex<double> mixed = 0.0;
        double energy = 0.0;
        for (int bi = 0; bi < scale; ++bi) {
          for (int bj = 0; bj < scale; ++bj) {
            const std::size_t idx =
                static_cast<std::size_t>(p + bi * mh) * w + (q + bj * mw);
            mixed += diagonal.values[idx] * zhat[idx];
            energy += std::norm(diagonal.values[idx]);
          }
        }
        const std::complex<double> r =
            (mixed / s2) / (1.0 + tau * energy / s2);
        for (int bi = 0; bi < scale; ++bi) {
          for (int bj = 0; bj < scale; ++bj) {
            const std::size_t idx =
                static_cast<std::size_t>(p + bi * mh) * w + (q + bj * mw);
            result[idx] -= tau * std::conj(diagonal.values[idx]) * r;
          }
        }
      }
    }
    const auto plane = InverseFft2Real(result, h, w);
    std::copy(plane.begin(), plane.end(), out.plane(c).begin());
  }
  return out;
}

Image ProxInpaint(const Image& z, const Image& y, const Image& mask) {
  RequireSameShape(z, y, "ProxInpaint");
  CheckMask(mask, z);
  Image out = z;
  const std::size_t n = z.plane_size();
  for (int c = 0; c < z.channels(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (MaskAt(mask, c, i) != 0.0) out[c * n + i] = y[c * n + i];
    }
  }
  return out;
}

Degradation Degradation::Deblur(const BlurKernel& kernel, int width,
                                int height) {
  Degradation d;
  d.kind_ = Kind::kDeblur;
  d.width_ = width;
  d.height_ = height;
  d.kernel_ = kernel;
  d.diagonal_ = BuildFourierDiagonal(kernel, width, height);
  return d;
}

Degradation Degradation::SuperResolve(const BlurKernel& kernel, int scale,
                                      int width, int height) {
  CheckScale(width, height, scale);
  Degradation d;
  d.kind_ = Kind::kSuperResolve;
  d.scale_ = scale;
  d.width_ = width;
  d.height_ = height;
  d.kernel_ = kernel;
  d.diagonal_ = BuildFourierDiagonal(kernel, width, height);
  return d;
}

Degradation Degradation::Inpaint(Image mask) {
  for (double m : mask.samples()) {
    if (m != 0.0 && m != 1.0) {
      throw std::invalid_argument("inpaint mask must be binary");
    }
  }
  Degradation d;
  d.kind_ = Kind::kInpaint;
  d.width_ = mask.width();
  d.height_ = mask.height();
  d.mask_ = std::move(mask);
  return d;
}

void Degradation::CheckHighRes(const Image& x, const char* what) const {
  if (x.width() != width_ || x.height() != height_) {
    throw std::invalid_argument(std::string(what) +
                                ": image grid does not match degradation");
  }
  if (kind_ == Kind::kInpaint && mask_.channels() != 1 &&
      mask_.channels() != x.channels()) {
    throw std::invalid_argument(std::string(what) +
                                ": mask channels do not match image");
  }
}

Image Degradation::Apply(const Image& x) const {
  CheckHighRes(x, "Degradation::Apply");
  switch (kind_) {
    case Kind::kDeblur:
      return ApplyFourierDiagonal(x, diagonal_);
    case Kind::kSuperResolve:
      return Decimate(ApplyFourierDiagonal(x, diagonal_), scale_);
    case Kind::kInpaint: {
      Image out = x;
      const std::size_t n = x.plane_size();
      for (int c = 0; c < x.channels(); ++c) {
        for (std::size_t i = 0; i < n; ++i) out[c * n + i] *= MaskAt(mask_, c, i);
      }
      return out;
    }
  }
  return x;
}

Image Degradation::ApplyAdjoint(const Image& y) const {
  switch (kind_) {
    case Kind::kDeblur:
      return ApplyFourierDiagonal(y, diagonal_, /*adjoint=*/true);
    case Kind::kSuperResolve:
      return ApplyFourierDiagonal(DecimateAdjoint(y, scale_), diagonal_,
                                  /*adjoint=*/true);
    case Kind::kInpaint:
      return Apply(y);  // diagonal projector is self-adjoint
  }
  return y;
}

Image Degradation::Prox(const Image& z, const Image& y, double tau) const {
  CheckHighRes(z, "Degradation::Prox");
  switch (kind_) {
    case Kind::kDeblur:
      return ProxDeblur(z, y, tau, diagonal_);
    case Kind::kSuperResolve:
      return ProxSuperResolve(z, y, tau, diagonal_, scale_);
    case Kind::kInpaint:
      return ProxInpaint(z, y, mask_);
  }
  return z;
}

double Degradation::Fidelity(const Image& x, const Image& y) const {
  const Image ax = Apply(x);
  if (kind_ == Kind::kInpaint) {
    const Image ay = Apply(y);
    RequireSameShape(ax, ay, "Fidelity");
    for (std::size_t i = 0; i < ax.size(); ++i) {
      if (std::abs(ax[i] - ay[i]) > 1e-9) {
        return std::numeric_limits<double>::infinity();
      }
    }
    return 0.0;
  }
  return 0.5 * SquaredDistance(ax, y);
}

Image Degradation::FidelityGradient(const Image& x, const Image& y) const {
  if (!smooth()) {
    throw std::logic_error("inpainting fidelity has no gradient");
  }
  return ApplyAdjoint(Apply(x) - y);
}

}  // namespace gspnp
