#pragma once
// Grayscale images: PGM (P5) and PNG input/output, PSNR, synthetic noise.

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdls {

/// Row-major grayscale image with real-valued pixels (8-bit range on I/O).
struct Image {
  int height = 0, width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), pixels(std::size_t(h) * w, fill) {}

  double& operator()(int r, int c) { return pixels[std::size_t(r) * width + c]; }
  double operator()(int r, int c) const { return pixels[std::size_t(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }
};

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

inline Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        tok.push_back(ch);
        break;
      }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) tok.push_back(ch);
    return tok;
  };
  if (next_token() != "P5") throw std::runtime_error(path + ": not a binary PGM (P5)");
  const int w = std::stoi(next_token()), h = std::stoi(next_token()), maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw std::runtime_error(path + ": unsupported PGM header");
  std::vector<unsigned char> buf(std::size_t(w) * h);
  if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
    throw std::runtime_error(path + ": truncated PGM data");
  Image img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i];
  return img;
}

inline void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

/// Reads 8-bit PNG; color is converted to luminance by libpng.
inline Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) throw std::runtime_error("cannot read PNG " + path);
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error("cannot decode PNG " + path);
  }
  Image img(int(png.height), int(png.width));
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = buf[i];
  return img;
}

inline void write_png(const Image& img, const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = img.width;
  png.height = img.height;
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path);
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
}

inline Image read_image(const std::string& path) { return has_suffix(path, ".png") ? read_png(path) : read_pgm(path); }

inline void write_image(const Image& img, const std::string& path) {
  if (has_suffix(path, ".png")) write_png(img, path);
  else write_pgm(img, path);
}

/// 10 log10(255^2 / MSE); +infinity for identical images.
inline double psnr(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("psnr: size mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// Adds seeded white Gaussian noise rounded to integers. Values are not
/// clipped here; writing to an 8-bit file clips.
inline Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Image out = img;
  for (double& v : out.pixels) v = std::round(v + noise(rng));
  return out;
}

}  // namespace mdls
