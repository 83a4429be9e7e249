#ifndef MLVC_IMAGE_HPP
#define MLVC_IMAGE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlvc {

// Interleaved 8-bit RGB, row-major.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // 3 * width * height

  bool valid() const {
    return width > 0 && height > 0 &&
           pixels.size() == static_cast<size_t>(3) * width * height;
  }
  uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  void set(int x, int y, int c, uint8_t v) {
    pixels[(static_cast<size_t>(y) * width + x) * 3 + c] = v;
  }
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Binary PPM (P6, maxval 255) is the one mandatory codec.
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Bilinear resample with half-pixel centers (align_corners = false).
ImageU8 resize_bilinear(const ImageU8& img, int out_w, int out_h);

ImageU8 hflip(const ImageU8& img);

// Gaussian blur with an odd kernel size and clamped borders.
ImageU8 gaussian_blur(const ImageU8& img, int kernel_size, double sigma);

// Label-preserving point/shift operations used by the mixing augmentation.
ImageU8 adjust_brightness(const ImageU8& img, double factor);
ImageU8 adjust_contrast(const ImageU8& img, double factor);
ImageU8 posterize(const ImageU8& img, int bits);
ImageU8 solarize(const ImageU8& img, int threshold);
ImageU8 translate(const ImageU8& img, int dx, int dy);  // edge pixels replicate

ImageU8 blend(const ImageU8& a, const ImageU8& b, double weight_a);

}  // namespace mlvc

#endif  // MLVC_IMAGE_HPP
