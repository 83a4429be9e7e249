#include "mlvc/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mlvc {

const std::array<const char*, kNumClasses> kClassNames = {
    "anode",       "bilge_keel",       "corrosion", "defect",   "marine_growth",
    "over_board_valve", "paint_peel", "propeller", "sea_chest_grating"};

int class_index(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kClassNames[i]) return i;
  throw std::invalid_argument("unknown class name: " + name);
}

LabelSet make_labels(std::initializer_list<int> on_indices) {
  LabelSet ls;
  for (int i : on_indices) ls.bits.at(static_cast<size_t>(i)) = true;
  return ls;
}

LabelSet binarize(const std::array<float, kNumClasses>& scores, double threshold) {
  if (threshold < 0.0 || threshold > 1.0)
    throw std::invalid_argument("binarize threshold must lie in [0,1], got " +
                                std::to_string(threshold));
  LabelSet out;
  for (int i = 0; i < kNumClasses; ++i) out.bits[i] = scores[i] > threshold;
  return out;
}

MetricsReport evaluate(const std::vector<LabelSet>& truths, const std::vector<LabelSet>& preds) {
  if (truths.size() != preds.size())
    throw std::invalid_argument("evaluate: " + std::to_string(truths.size()) + " truths vs " +
                                std::to_string(preds.size()) + " predictions");
  if (truths.empty()) throw std::invalid_argument("evaluate: no instances");

  MetricsReport r;
  r.instances = static_cast<int64_t>(truths.size());
  for (size_t i = 0; i < truths.size(); ++i) {
    const LabelSet& y = truths[i];
    const LabelSet& yh = preds[i];
    int inter = 0, uni = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      const bool t = y.bits[c], p = yh.bits[c];
      inter += (t && p) ? 1 : 0;
      uni += (t || p) ? 1 : 0;
      auto& cc = r.per_class[c];
      if (t && p) ++cc.tp;
      else if (!t && p) ++cc.fp;
      else if (t && !p) ++cc.fn;
      else ++cc.tn;
    }
    const int ny = y.count(), nyh = yh.count();
    bool degenerate = false;
    auto term = [&](int num, int den) {
      if (den == 0) {
        degenerate = true;
        return (ny == 0 && nyh == 0) ? 1.0 : 0.0;
      }
      return static_cast<double>(num) / den;
    };
    r.accuracy += term(inter, uni);
    r.precision += term(inter, nyh);
    r.recall += term(inter, ny);
    r.f1 += term(2 * inter, ny + nyh);
    if (degenerate) ++r.degenerate_instances;
  }
  const double n = static_cast<double>(r.instances);
  r.accuracy /= n;
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  return r;
}

std::array<ClasswiseMetrics, kNumClasses> classwise(const std::vector<LabelSet>& truths,
                                                    const std::vector<LabelSet>& preds) {
  const MetricsReport r = evaluate(truths, preds);
  std::array<ClasswiseMetrics, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& cc = r.per_class[c];
    auto& m = out[c];
    if (cc.tp + cc.fp == 0) {
      m.precision = 0.0;
      m.degenerate = true;
    } else {
      m.precision = static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fp);
    }
    if (cc.tp + cc.fn == 0) {
      m.recall = 0.0;
      m.degenerate = true;
    } else {
      m.recall = static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fn);
    }
    m.f1 = (m.precision + m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
  }
  return out;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["instances"] = instances;
  j["degenerate_instances"] = degenerate_instances;
  nlohmann::json pc = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    pc[kClassNames[c]] = {{"tp", per_class[c].tp},
                          {"fp", per_class[c].fp},
                          {"fn", per_class[c].fn},
                          {"tn", per_class[c].tn}};
  }
  j["per_class"] = pc;
  return j.dump(2);
}

}  // namespace mlvc
