#ifndef MLVC_METRICS_HPP
#define MLVC_METRICS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mlvc {

inline constexpr int kNumClasses = 9;

// Fixed alphabetical class order shared by every model head and file format.
extern const std::array<const char*, kNumClasses> kClassNames;

int class_index(const std::string& name);

struct LabelSet {
  std::array<bool, kNumClasses> bits{};

  int count() const {
    int n = 0;
    for (bool b : bits) n += b ? 1 : 0;
    return n;
  }
  bool operator==(const LabelSet&) const = default;
};

LabelSet make_labels(std::initializer_list<int> on_indices);

struct ClassCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;
};

struct ClasswiseMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // a 0/0 convention was applied
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<ClassCounts, kNumClasses> per_class{};
  int64_t degenerate_instances = 0;
  int64_t instances = 0;

  std::string to_json() const;
};

// Thresholding rule: bit = score > threshold (strict).
LabelSet binarize(const std::array<float, kNumClasses>& scores, double threshold = 0.5);

// Instance-averaged multi-label metrics:
//   accuracy  = mean |y n yh| / |y u yh|
//   precision = mean |y n yh| / |yh|
//   recall    = mean |y n yh| / |y|
//   f1        = mean 2|y n yh| / (|y| + |yh|)
// Empty/empty instances score 1.0 on all four terms; an empty denominator
// alone scores 0.0. Either case increments degenerate_instances.
MetricsReport evaluate(const std::vector<LabelSet>& truths, const std::vector<LabelSet>& preds);

std::array<ClasswiseMetrics, kNumClasses> classwise(const std::vector<LabelSet>& truths,
                                                    const std::vector<LabelSet>& preds);

}  // namespace mlvc

#endif  // MLVC_METRICS_HPP
