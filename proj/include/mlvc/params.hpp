#ifndef MLVC_PARAMS_HPP
#define MLVC_PARAMS_HPP

#include <functional>
#include <string>
#include <vector>

#include "mlvc/tensor.hpp"

namespace mlvc {

// Ordered name -> tensor registry. Registration order is the checkpoint
// order, so construction must be deterministic.
class ParamStore {
 public:
  Tensor<float>& add(const std::string& name, Tensor<float> t) {
    for (auto& [n, _] : entries_)
      if (n == name) throw ValueError("duplicate parameter name: " + name);
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
  }

  const std::vector<std::pair<std::string, Tensor<float>>>& entries() const { return entries_; }

  Tensor<float>* find(const std::string& name) {
    for (auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  int64_t count_trainable() const {
    int64_t total = 0;
    for (const auto& [_, t] : entries_)
      if (t.requires_grad()) total += t.size();
    return total;
  }

  int64_t count_all() const {
    int64_t total = 0;
    for (const auto& [_, t] : entries_) total += t.size();
    return total;
  }

  void zero_grads() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  void set_trainable(const std::function<bool(const std::string&)>& pred) {
    for (auto& [n, t] : entries_) t.set_requires_grad(pred(n));
  }

 private:
  std::vector<std::pair<std::string, Tensor<float>>> entries_;
};

}  // namespace mlvc

#endif  // MLVC_PARAMS_HPP
