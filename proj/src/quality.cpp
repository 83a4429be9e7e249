#include "mlvc/quality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mlvc {

namespace {

// Coefficient sets for the two composites. Values follow the metric
// definitions these scores are modeled on; the regression fixtures in the
// test suite pin the exact behavior.
constexpr double kUciqeChroma = 0.4680;
constexpr double kUciqeContrast = 0.2745;
constexpr double kUciqeSaturation = 0.2576;

constexpr double kUiqmColor = 0.0282;
constexpr double kUiqmSharpness = 0.2953;
constexpr double kUiqmContrast = 3.5753;

constexpr double kTrimAlpha = 0.1;  // both tails
constexpr int kBlock = 8;

constexpr double kUicmMu = -0.0268;
constexpr double kUicmSigma = 0.1586;

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

double srgb_to_linear(double u) {
  return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t)
                                   : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

// Linear-interpolated quantile of a sorted vector, p in [0,1].
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double rank = p * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

double trimmed_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t drop = static_cast<size_t>(kTrimAlpha * static_cast<double>(values.size()));
  double total = 0.0;
  size_t n = 0;
  for (size_t i = drop; i + drop < values.size(); ++i) {
    total += values[i];
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

// Per-block statistic accumulation over non-overlapping kBlock x kBlock
// tiles; trailing partial tiles are dropped.
template <typename Fn>
double over_blocks(const std::vector<double>& plane, int w, int h, Fn block_term) {
  const int bx = w / kBlock, by = h / kBlock;
  if (bx == 0 || by == 0) throw std::invalid_argument("image smaller than one 8x8 block");
  double total = 0.0;
  for (int j = 0; j < by; ++j)
    for (int i = 0; i < bx; ++i) {
      double mx = plane[static_cast<size_t>(j * kBlock) * w + i * kBlock];
      double mn = mx;
      for (int y = j * kBlock; y < (j + 1) * kBlock; ++y)
        for (int x = i * kBlock; x < (i + 1) * kBlock; ++x) {
          const double v = plane[static_cast<size_t>(y) * w + x];
          mx = std::max(mx, v);
          mn = std::min(mn, v);
        }
      total += block_term(mx, mn);
    }
  return total / static_cast<double>(bx * by);
}

std::vector<double> sobel_magnitude(const ImageU8& img, int channel) {
  // 3x3 Sobel with replicated borders
  std::vector<double> out(static_cast<size_t>(img.width) * img.height);
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, img.width - 1);
    y = std::clamp(y, 0, img.height - 1);
    return static_cast<double>(img.at(x, y, channel));
  };
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double gx = -px(x - 1, y - 1) - 2 * px(x - 1, y) - px(x - 1, y + 1) +
                        px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1);
      const double gy = -px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1) +
                        px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1);
      out[static_cast<size_t>(y) * img.width + x] = std::hypot(gx, gy);
    }
  return out;
}

}  // namespace

Lab rgb_to_lab(uint8_t r8, uint8_t g8, uint8_t b8) {
  const double r = srgb_to_linear(r8 / 255.0);
  const double g = srgb_to_linear(g8 / 255.0);
  const double b = srgb_to_linear(b8 / 255.0);
  // sRGB -> XYZ, D65 white point
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / 0.95047);
  const double fy = lab_f(y / 1.0);
  const double fz = lab_f(z / 1.08883);
  return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Hsv rgb_to_hsv(uint8_t r8, uint8_t g8, uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out{0.0, 0.0, mx};
  if (d > 0.0) {
    if (mx == r) out.h = 60.0 * std::fmod((g - b) / d, 6.0);
    else if (mx == g) out.h = 60.0 * ((b - r) / d + 2.0);
    else out.h = 60.0 * ((r - g) / d + 4.0);
    if (out.h < 0.0) out.h += 360.0;
  }
  if (mx > 0.0) out.s = d / mx;
  return out;
}

double uciqe(const ImageU8& img) {
  if (!img.valid()) throw std::invalid_argument("uciqe: empty or invalid image");
  const size_t n = static_cast<size_t>(img.width) * img.height;
  std::vector<double> luminance(n), chroma(n);
  double sat_sum = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint8_t r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
      const Lab lab = rgb_to_lab(r, g, b);
      const size_t i = static_cast<size_t>(y) * img.width + x;
      luminance[i] = lab.l;
      // chroma shares the L scale: divide by 100
      chroma[i] = std::hypot(lab.a, lab.b) / 100.0;
      sat_sum += rgb_to_hsv(r, g, b).s;
    }

  double mean_c = 0.0;
  for (double c : chroma) mean_c += c;
  mean_c /= static_cast<double>(n);
  double var_c = 0.0;
  for (double c : chroma) var_c += (c - mean_c) * (c - mean_c);
  const double sigma_chroma = std::sqrt(var_c / static_cast<double>(n));

  std::sort(luminance.begin(), luminance.end());
  const double con_l =
      (quantile_sorted(luminance, 0.99) - quantile_sorted(luminance, 0.01)) / 100.0;

  const double mean_sat = sat_sum / static_cast<double>(n);
  return kUciqeChroma * sigma_chroma + kUciqeContrast * con_l + kUciqeSaturation * mean_sat;
}

QualityScores uiqm(const ImageU8& img) {
  if (!img.valid()) throw std::invalid_argument("uiqm: empty or invalid image");
  if (img.width < kBlock || img.height < kBlock)
    throw std::invalid_argument("uiqm: image smaller than one 8x8 block");
  const size_t n = static_cast<size_t>(img.width) * img.height;

  // colorfulness over opponent channels
  std::vector<double> rg(n), yb(n);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
      const size_t i = static_cast<size_t>(y) * img.width + x;
      rg[i] = r - g;
      yb[i] = (r + g) / 2.0 - b;
    }
  const double mu_rg = trimmed_mean(rg);
  const double mu_yb = trimmed_mean(yb);
  double var_rg = 0.0, var_yb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    var_rg += (rg[i] - mu_rg) * (rg[i] - mu_rg);
    var_yb += (yb[i] - mu_yb) * (yb[i] - mu_yb);
  }
  var_rg /= static_cast<double>(n);
  var_yb /= static_cast<double>(n);
  const double uicm = kUicmMu * std::hypot(mu_rg, mu_yb) + kUicmSigma * std::sqrt(var_rg + var_yb);

  // sharpness: luminance-weighted EME of per-channel edge magnitudes
  auto eme_term = [](double mx, double mn) {
    // blocks with a zero or flat range carry no sharpness information
    if (mn <= 0.0 || mx <= mn) return 0.0;
    return 2.0 * std::log(mx / mn);
  };
  double uism = 0.0;
  const double weights[3] = {kLumaR, kLumaG, kLumaB};
  for (int c = 0; c < 3; ++c) {
    const auto edges = sobel_magnitude(img, c);
    uism += weights[c] * over_blocks(edges, img.width, img.height, eme_term);
  }

  // contrast: Michelson-ratio entropy over intensity blocks
  std::vector<double> intensity(n);
  for (size_t i = 0; i < n; ++i)
    intensity[i] = (static_cast<double>(img.pixels[3 * i]) + img.pixels[3 * i + 1] +
                    img.pixels[3 * i + 2]) /
                   3.0;
  auto logamee_term = [](double mx, double mn) {
    const double top = mx - mn, bot = mx + mn;
    if (top <= 0.0 || bot <= 0.0) return 0.0;
    const double m = top / bot;
    return -m * std::log(m);
  };
  const double uiconm = over_blocks(intensity, img.width, img.height, logamee_term);

  QualityScores q;
  q.uicm = uicm;
  q.uism = uism;
  q.uiconm = uiconm;
  q.uiqm = kUiqmColor * uicm + kUiqmSharpness * uism + kUiqmContrast * uiconm;
  return q;
}

QualityScores score_frame(const ImageU8& img) {
  QualityScores q = uiqm(img);
  q.uciqe = uciqe(img);
  return q;
}

std::vector<QualityScores> trace_quality(const std::vector<ImageU8>& frames) {
  if (frames.empty()) throw std::invalid_argument("trace_quality: no frames");
  std::vector<QualityScores> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(score_frame(f));
  return out;
}

}  // namespace mlvc
