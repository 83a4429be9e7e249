#include "mlvc/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mlvc {

namespace {

uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

int read_ppm_int(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comment lines between header fields
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("malformed PPM header in " + path);
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("not a binary PPM (P6) file: " + path);
  ImageU8 img;
  img.width = read_ppm_int(in, path);
  img.height = read_ppm_int(in, path);
  const int maxval = read_ppm_int(in, path);
  if (maxval != 255) throw IoError("unsupported PPM maxval in " + path);
  if (img.width <= 0 || img.height <= 0) throw IoError("degenerate PPM dimensions in " + path);
  const size_t n = static_cast<size_t>(3) * img.width * img.height;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw IoError("truncated PPM payload in " + path);
  return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  if (!img.valid()) throw IoError("refusing to write invalid image to " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("short write to " + path);
}

ImageU8 resize_bilinear(const ImageU8& img, int out_w, int out_h) {
  if (!img.valid()) throw IoError("resize of invalid image");
  if (out_w <= 0 || out_h <= 0) throw IoError("resize to non-positive size");
  ImageU8 out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(static_cast<size_t>(3) * out_w * out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - wx) + img.at(x1, y0, c) * wx;
        const double bot = img.at(x0, y1, c) * (1.0 - wx) + img.at(x1, y1, c) * wx;
        out.set(x, y, c, clamp_u8(top * (1.0 - wy) + bot * wy));
      }
    }
  }
  return out;
}

ImageU8 hflip(const ImageU8& img) {
  ImageU8 out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.set(x, y, c, img.at(img.width - 1 - x, y, c));
  return out;
}

ImageU8 gaussian_blur(const ImageU8& img, int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw IoError("gaussian_blur kernel size must be odd and positive");
  if (sigma <= 0.0) throw IoError("gaussian_blur sigma must be positive");
  const int half = kernel_size / 2;
  std::vector<double> k(static_cast<size_t>(kernel_size));
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    total += k[i + half];
  }
  for (double& v : k) v /= total;

  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };
  // separable passes, clamped borders
  std::vector<double> tmp(img.pixels.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i)
          acc += k[i + half] * img.at(clampi(x + i, img.width - 1), y, c);
        tmp[(static_cast<size_t>(y) * img.width + x) * 3 + c] = acc;
      }
  ImageU8 out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) {
          const int yy = clampi(y + i, img.height - 1);
          acc += k[i + half] * tmp[(static_cast<size_t>(yy) * img.width + x) * 3 + c];
        }
        out.set(x, y, c, clamp_u8(acc));
      }
  return out;
}

ImageU8 adjust_brightness(const ImageU8& img, double factor) {
  ImageU8 out = img;
  for (auto& p : out.pixels) p = clamp_u8(p * factor);
  return out;
}

ImageU8 adjust_contrast(const ImageU8& img, double factor) {
  double mean = 0.0;
  for (uint8_t p : img.pixels) mean += p;
  mean /= static_cast<double>(img.pixels.size());
  ImageU8 out = img;
  for (auto& p : out.pixels) p = clamp_u8(mean + (p - mean) * factor);
  return out;
}

ImageU8 posterize(const ImageU8& img, int bits) {
  const int keep = std::clamp(bits, 1, 8);
  const uint8_t mask = static_cast<uint8_t>(0xFF << (8 - keep));
  ImageU8 out = img;
  for (auto& p : out.pixels) p = p & mask;
  return out;
}

ImageU8 solarize(const ImageU8& img, int threshold) {
  ImageU8 out = img;
  for (auto& p : out.pixels)
    if (p >= threshold) p = static_cast<uint8_t>(255 - p);
  return out;
}

ImageU8 translate(const ImageU8& img, int dx, int dy) {
  ImageU8 out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x - dx, 0, img.width - 1);
      const int sy = std::clamp(y - dy, 0, img.height - 1);
      for (int c = 0; c < 3; ++c) out.set(x, y, c, img.at(sx, sy, c));
    }
  return out;
}

ImageU8 blend(const ImageU8& a, const ImageU8& b, double weight_a) {
  if (a.width != b.width || a.height != b.height) throw IoError("blend size mismatch");
  ImageU8 out = a;
  for (size_t i = 0; i < a.pixels.size(); ++i)
    out.pixels[i] = clamp_u8(weight_a * a.pixels[i] + (1.0 - weight_a) * b.pixels[i]);
  return out;
}

}  // namespace mlvc
