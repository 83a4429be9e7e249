#ifndef MLVC_QUALITY_HPP
#define MLVC_QUALITY_HPP

#include <vector>

#include "mlvc/image.hpp"

namespace mlvc {

// No-reference underwater image quality scores.
struct QualityScores {
  double uciqe = 0.0;
  double uiqm = 0.0;
  double uicm = 0.0;
  double uism = 0.0;
  double uiconm = 0.0;
};

struct Lab {
  double l, a, b;
};
struct Hsv {
  double h, s, v;  // h in degrees, s and v in [0,1]
};

// sRGB (D65) conversions; L in [0,100].
Lab rgb_to_lab(uint8_t r, uint8_t g, uint8_t b);
Hsv rgb_to_hsv(uint8_t r, uint8_t g, uint8_t b);

// Weighted sum of chroma spread, luminance contrast and mean saturation.
double uciqe(const ImageU8& img);

// Colorfulness + sharpness + contrast composite; also returns the components.
QualityScores uiqm(const ImageU8& img);

// uciqe and uiqm together for one frame.
QualityScores score_frame(const ImageU8& img);

std::vector<QualityScores> trace_quality(const std::vector<ImageU8>& frames);

}  // namespace mlvc

#endif  // MLVC_QUALITY_HPP
