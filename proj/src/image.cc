#include "gspnp/image.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gspnp {

namespace {

void CheckDims(int width, int height, int channels) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  if (channels < 1) {
    throw std::invalid_argument("image needs at least one channel");
  }
}

bool EndsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void PutU32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t GetU32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("truncated GSF1 header");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

// Skips whitespace and '#' comments in a netpbm header, then reads an int.
int ReadHeaderInt(std::istream& in) {
  int ch;
  while ((ch = in.peek()) != EOF) {
    if (std::isspace(ch)) {
      in.get();
    } else if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = -1;
  if (!(in >> value) || value < 0) {
    throw std::runtime_error("malformed netpbm header");
  }
  return value;
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  CheckDims(width, height, channels);
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels),
      data_(std::move(data)) {
  CheckDims(width, height, channels);
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("image data length does not match shape");
  }
}

bool Image::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Image& Image::operator+=(const Image& other) {
  RequireSameShape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  RequireSameShape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

void RequireSameShape(const Image& a, const Image& b, const char* what) {
  if (!a.SameShape(b)) {
    std::ostringstream msg;
    msg << what << ": shape mismatch " << a.width() << "x" << a.height() << "x"
        << a.channels() << " vs " << b.width() << "x" << b.height() << "x"
        << b.channels();
    throw std::invalid_argument(msg.str());
  }
}

double Dot(const Image& a, const Image& b) {
  RequireSameShape(a, b, "Dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double SquaredNorm(const Image& a) {
  double sum = 0.0;
  for (double v : a.samples()) sum += v * v;
  return sum;
}

double Norm(const Image& a) { return std::sqrt(SquaredNorm(a)); }

double SquaredDistance(const Image& a, const Image& b) {
  RequireSameShape(a, b, "SquaredDistance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

Image AddScaled(const Image& a, double s, const Image& b) {
  RequireSameShape(a, b, "AddScaled");
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

double Psnr(const Image& reference, const Image& test) {
  RequireSameShape(reference, test, "Psnr");
  const double mse =
      SquaredDistance(reference, test) / static_cast<double>(reference.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / mse);
}

NormalSampler::NormalSampler(std::uint64_t seed) : engine_(seed) {}

std::uint64_t NormalSampler::NextBits() { return engine_(); }

double NormalSampler::Uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NormalSampler::Next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Image AddGaussianNoise(const Image& x, double nu, std::uint64_t seed) {
  if (!(nu >= 0.0)) {
    throw std::invalid_argument("noise standard deviation must be >= 0");
  }
  Image y = x;
  if (nu == 0.0) return y;
  NormalSampler rng(seed);
  for (double& v : y.samples()) v += nu * rng.Next();
  return y;
}

Image LoadImage(const std::string& path) {
  if (EndsWith(path, ".gsf")) return LoadRawFloat(path);
  if (EndsWith(path, ".pgm") || EndsWith(path, ".ppm")) return LoadNetpbm(path);
  throw std::invalid_argument("unsupported image extension: " + path);
}

void SaveImage(const Image& image, const std::string& path) {
  if (EndsWith(path, ".gsf")) {
    SaveRawFloat(image, path);
  } else if (EndsWith(path, ".pgm") || EndsWith(path, ".ppm")) {
    SaveNetpbm(image, path);
  } else {
    throw std::invalid_argument("unsupported image extension: " + path);
  }
}

Image LoadRawFloat(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "GSF1", 4) != 0) {
    throw std::runtime_error("not a GSF1 file: " + path);
  }
  const std::uint32_t width = GetU32(in);
  const std::uint32_t height = GetU32(in);
  const std::uint32_t channels = GetU32(in);
  if (channels != 1 && channels != 3) {
    throw std::runtime_error("unsupported channel count in " + path);
  }
  if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
    throw std::runtime_error("bad GSF1 dimensions in " + path);
  }
  std::vector<double> data(static_cast<std::size_t>(width) * height * channels);
  for (double& v : data) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
      throw std::runtime_error("truncated GSF1 payload in " + path);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return Image(static_cast<int>(width), static_cast<int>(height),
               static_cast<int>(channels), std::move(data));
}

void SaveRawFloat(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("GSF1", 4);
  PutU32(out, static_cast<std::uint32_t>(image.width()));
  PutU32(out, static_cast<std::uint32_t>(image.height()));
  PutU32(out, static_cast<std::uint32_t>(image.channels()));
  for (double v : image.samples()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Image LoadNetpbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw std::runtime_error("only binary P5/P6 netpbm supported: " + path);
  }
  const int channels = kind == '5' ? 1 : 3;
  const int width = ReadHeaderInt(in);
  const int height = ReadHeaderInt(in);
  const int maxval = ReadHeaderInt(in);
  if (width < 1 || height < 1) throw std::runtime_error("bad netpbm size");
  if (maxval != 255) throw std::runtime_error("netpbm maxval must be 255");
  in.get();  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> raw(n * channels);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error("truncated netpbm raster: " + path);
  }
  Image image(width, height, channels);
  // Interleaved RGB on disk, planar in memory.
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      image[c * n + i] = raw[i * channels + c] / 255.0;
    }
  }
  return image;
}

void SaveNetpbm(const Image& image, const std::string& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw std::invalid_argument("netpbm supports 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << (image.channels() == 1 ? "P5" : "P6") << "\n"
      << image.width() << " " << image.height() << "\n255\n";
  const std::size_t n = image.plane_size();
  std::vector<unsigned char> raw(n * image.channels());
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < image.channels(); ++c) {
      const double v = std::clamp(image[c * n + i], 0.0, 1.0);
      raw[i * image.channels() + c] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gspnp
