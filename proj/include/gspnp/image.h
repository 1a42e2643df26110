#ifndef GSPNP_IMAGE_H_
#define GSPNP_IMAGE_H_

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gspnp {

// Planar multichannel raster of doubles. Samples are stored channel-planar,
// row-major: index = (c * height + y) * width + x.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  static Image Like(const Image& other, double fill = 0.0) {
    return Image(other.width_, other.height_, other.channels_, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  int plane_size() const { return width_ * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> samples() { return data_; }
  std::span<const double> samples() const { return data_; }
  std::span<double> plane(int c) {
    return std::span<double>(data_).subspan(
        static_cast<std::size_t>(c) * plane_size(), plane_size());
  }
  std::span<const double> plane(int c) const {
    return std::span<const double>(data_).subspan(
        static_cast<std::size_t>(c) * plane_size(), plane_size());
  }

  bool SameShape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }
  bool AllFinite() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

// Throws std::invalid_argument naming `what` when shapes differ.
void RequireSameShape(const Image& a, const Image& b, const char* what);

double Dot(const Image& a, const Image& b);
double SquaredNorm(const Image& a);
double Norm(const Image& a);
double SquaredDistance(const Image& a, const Image& b);
// a + s * b
Image AddScaled(const Image& a, double s, const Image& b);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// Peak signal-to-noise ratio with peak value 1. Returns kInfinitePsnr when the
// images are identical.
double Psnr(const Image& reference, const Image& test);

// y = x + N(0, nu^2) i.i.d. The seed fully determines the noise.
Image AddGaussianNoise(const Image& x, double nu, std::uint64_t seed);

// Seeded standard normal generator (Box-Muller over a 64-bit Mersenne
// twister), portable across standard library implementations.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed);
  double Next();
  double Uniform();  // [0, 1)
  std::uint64_t NextBits();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// File I/O. Format chosen by extension: .gsf (raw float), .pgm, .ppm.
Image LoadImage(const std::string& path);
void SaveImage(const Image& image, const std::string& path);

Image LoadRawFloat(const std::string& path);
void SaveRawFloat(const Image& image, const std::string& path);
// P5 (1 channel) or P6 (3 channels), maxval 255.
Image LoadNetpbm(const std::string& path);
// Clamps to [0, 1] and rounds to the 1/255 grid.
void SaveNetpbm(const Image& image, const std::string& path);

}  // namespace gspnp

#endif  // GSPNP_IMAGE_H_
