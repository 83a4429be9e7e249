#ifndef MLVC_TENSOR_HPP
#define MLVC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Dense row-major tensors with tape-based reverse-mode autodiff.
// float is the training scalar type; double instantiations exist for
// gradient verification against finite differences.

namespace mlvc {

using Shape = std::vector<int64_t>;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until first accumulation

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  void accumulate(const T* g, int64_t n) {
    if (!requires_grad) return;
    if (n != size()) throw ShapeError("gradient size mismatch");
    if (grad.empty()) grad.assign(data.size(), T(0));
    for (int64_t i = 0; i < n; ++i) grad[i] += g[i];
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
};

// Value-semantic handle onto shared storage. Copies alias the same buffer;
// clone() makes a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() : s_(std::make_shared<Storage<T>>()) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : s_(std::make_shared<Storage<T>>()) {
    const int64_t n = numel(shape);
    if (n != static_cast<int64_t>(values.size()))
      throw ShapeError("buffer length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    s_->shape = std::move(shape);
    s_->data = std::move(values);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const int64_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(static_cast<size_t>(n), T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const int64_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(static_cast<size_t>(n), value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  const Shape& shape() const { return s_->shape; }
  int64_t size() const { return s_->size(); }
  int64_t dim(size_t i) const { return s_->shape.at(i); }
  size_t ndim() const { return s_->shape.size(); }

  const std::vector<T>& values() const { return s_->data; }
  std::vector<T>& values() { return s_->data; }
  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool rg) { s_->requires_grad = rg; }

  bool has_grad() const { return !s_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (s_->grad.empty()) throw ValueError("tensor has no accumulated gradient");
    return s_->grad;
  }
  std::vector<T>& grad_buffer() {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
  }
  void zero_grad() { s_->zero_grad(); }

  T item() const {
    if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
    return s_->data[0];
  }

  T at(std::initializer_list<int64_t> idx) const { return s_->data[flat_index(idx)]; }
  void set(std::initializer_list<int64_t> idx, T v) { s_->data[flat_index(idx)] = v; }

  Tensor clone() const {
    Tensor out(s_->shape, s_->data, s_->requires_grad);
    return out;
  }

  std::shared_ptr<Storage<T>> storage() const { return s_; }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  size_t flat_index(std::initializer_list<int64_t> idx) const {
    if (idx.size() != s_->shape.size()) throw ShapeError("index rank mismatch");
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : idx) {
      const int64_t extent = s_->shape[k];
      if (i < 0 || i >= extent) throw ShapeError("index out of bounds");
      flat = flat * extent + i;
      ++k;
    }
    return static_cast<size_t>(flat);
  }

  std::shared_ptr<Storage<T>> s_;
};

// Recorded operations, replayed in reverse for the backward pass. One tape is
// active per thread at a time; ops record onto it only when an input already
// participates in differentiation.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() {
    if (active_tape() == this) active_tape() = nullptr;
  }

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_tape()) { active_tape() = &t; }
    ~Scope() { active_tape() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  // Suspends recording, e.g. around a frozen sub-model's forward pass.
  class Pause {
   public:
    Pause() : prev_(active_tape()) { active_tape() = nullptr; }
    ~Pause() { active_tape() = prev_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active() { return active_tape(); }

  void record(std::shared_ptr<Storage<T>> output, std::function<void()> backward_rule) {
    nodes_.push_back(Node{std::move(output), std::move(backward_rule)});
  }

  size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded rules newest-first.
  // Intermediate (op-output) gradients are reset per call, so repeated calls
  // without clearing leaf grads accumulate into the leaves.
  void backward(Tensor<T>& loss) {
    if (loss.size() != 1)
      throw ValueError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ValueError("backward on a tensor that does not participate in the tape");
    for (auto& node : nodes_) node.out->grad.clear();
    const T one = T(1);
    loss.storage()->accumulate(&one, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->rule();
  }

 private:
  struct Node {
    std::shared_ptr<Storage<T>> out;
    std::function<void()> rule;
  };

  static Tape*& active_tape() {
    thread_local Tape* current = nullptr;
    return current;
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
bool taping(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void mark_and_record(Tensor<T>& out, std::function<void()> rule) {
  out.set_requires_grad(true);
  Tape<T>::active()->record(out.storage(), std::move(rule));
}

template <typename T>
const std::vector<T>* grad_of(const std::shared_ptr<Storage<T>>& s) {
  return s->grad.empty() ? nullptr : &s->grad;
}

}  // namespace detail

// ---- elementwise arithmetic ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::taping<T>({&a, &b})) {
    detail::mark_and_record(out, [as = a.storage(), bs = b.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      as->accumulate(g->data(), static_cast<int64_t>(g->size()));
      bs->accumulate(g->data(), static_cast<int64_t>(g->size()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::taping<T>({&a, &b})) {
    detail::mark_and_record(out, [as = a.storage(), bs = b.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      as->accumulate(g->data(), static_cast<int64_t>(g->size()));
      if (bs->requires_grad) {
        std::vector<T> neg(g->size());
        for (size_t i = 0; i < g->size(); ++i) neg[i] = -(*g)[i];
        bs->accumulate(neg.data(), static_cast<int64_t>(neg.size()));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::taping<T>({&a, &b})) {
    detail::mark_and_record(out, [as = a.storage(), bs = b.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      const size_t n = g->size();
      if (as->requires_grad) {
        std::vector<T> ga(n);
        for (size_t i = 0; i < n; ++i) ga[i] = (*g)[i] * bs->data[i];
        as->accumulate(ga.data(), static_cast<int64_t>(n));
      }
      if (bs->requires_grad) {
        std::vector<T> gb(n);
        for (size_t i = 0; i < n; ++i) gb[i] = (*g)[i] * as->data[i];
        bs->accumulate(gb.data(), static_cast<int64_t>(n));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage(), c]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(g->size());
      for (size_t i = 0; i < g->size(); ++i) ga[i] = (*g)[i] * c;
      as->accumulate(ga.data(), static_cast<int64_t>(ga.size()));
    });
  }
  return out;
}

// Adds a length-D row vector to every row of an [N x D] matrix.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& m, const Tensor<T>& v) {
  if (m.ndim() != 2 || v.size() != m.dim(1))
    throw ShapeError("add_rowvec expects [NxD] + [D], got " + shape_str(m.shape()) + " + " +
                     shape_str(v.shape()));
  Tensor<T> out = Tensor<T>::zeros(m.shape());
  const int64_t rows = m.dim(0), cols = m.dim(1);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.data()[r * cols + c] = m.data()[r * cols + c] + v.data()[c];
  if (detail::taping<T>({&m, &v})) {
    detail::mark_and_record(out, [ms = m.storage(), vs = v.storage(), os = out.storage(), rows, cols]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      ms->accumulate(g->data(), static_cast<int64_t>(g->size()));
      if (vs->requires_grad) {
        std::vector<T> gv(static_cast<size_t>(cols), T(0));
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) gv[c] += (*g)[r * cols + c];
        vs->accumulate(gv.data(), cols);
      }
    });
  }
  return out;
}

// ---- matmul ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = pa[i * k + kk];
      if (av == T(0)) continue;
      const T* brow = pb + kk * n;
      T* crow = pc + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (detail::taping<T>({&a, &b})) {
    detail::mark_and_record(out, [as = a.storage(), bs = b.storage(), os = out.storage(), m, k, n]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      if (as->requires_grad) {
        std::vector<T> ga(static_cast<size_t>(m * k), T(0));
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) {
            const T gv = (*g)[i * n + j];
            if (gv == T(0)) continue;
            for (int64_t kk = 0; kk < k; ++kk) ga[i * k + kk] += gv * bs->data[kk * n + j];
          }
        as->accumulate(ga.data(), m * k);
      }
      if (bs->requires_grad) {
        std::vector<T> gb(static_cast<size_t>(k * n), T(0));
        for (int64_t i = 0; i < m; ++i)
          for (int64_t kk = 0; kk < k; ++kk) {
            const T av = as->data[i * k + kk];
            if (av == T(0)) continue;
            for (int64_t j = 0; j < n; ++j) gb[kk * n + j] += av * (*g)[i * n + j];
          }
        bs->accumulate(gb.data(), k * n);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.ndim() != 2) throw ShapeError("transpose2d expects a matrix, got " + shape_str(a.shape()));
  const int64_t r = a.dim(0), c = a.dim(1);
  Tensor<T> out = Tensor<T>::zeros({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage(), r, c]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(static_cast<size_t>(r * c));
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) ga[i * c + j] = (*g)[j * r + i];
      as->accumulate(ga.data(), r * c);
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape " + shape_str(shape) + " incompatible with " + shape_str(a.shape()));
  Tensor<T> out(std::move(shape), a.values());
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      as->accumulate(g->data(), static_cast<int64_t>(g->size()));
    });
  }
  return out;
}

// ---- row/column slicing and concatenation (2-D) ----

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int64_t r0, int64_t r1) {
  if (a.ndim() != 2) throw ShapeError("slice_rows expects a matrix");
  if (r0 < 0 || r1 > a.dim(0) || r0 >= r1) throw ShapeError("slice_rows range invalid");
  const int64_t cols = a.dim(1);
  Tensor<T> out = Tensor<T>::zeros({r1 - r0, cols});
  std::copy(a.data() + r0 * cols, a.data() + r1 * cols, out.data());
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage(), r0, cols]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(as->data.size(), T(0));
      std::copy(g->begin(), g->end(), ga.begin() + static_cast<size_t>(r0 * cols));
      as->accumulate(ga.data(), static_cast<int64_t>(ga.size()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int64_t c0, int64_t c1) {
  if (a.ndim() != 2) throw ShapeError("slice_cols expects a matrix");
  if (c0 < 0 || c1 > a.dim(1) || c0 >= c1) throw ShapeError("slice_cols range invalid");
  const int64_t rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
  Tensor<T> out = Tensor<T>::zeros({rows, w});
  for (int64_t r = 0; r < rows; ++r)
    std::copy(a.data() + r * cols + c0, a.data() + r * cols + c1, out.data() + r * w);
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage(), rows, cols, c0, w]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(as->data.size(), T(0));
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < w; ++c) ga[r * cols + c0 + c] = (*g)[r * w + c];
      as->accumulate(ga.data(), static_cast<int64_t>(ga.size()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const int64_t cols = parts[0].ndim() == 2 ? parts[0].dim(1) : -1;
  int64_t rows = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(1) != cols) throw ShapeError("concat_rows column mismatch");
    rows += p.dim(0);
  }
  Tensor<T> out = Tensor<T>::zeros({rows, cols});
  int64_t r = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + r * cols);
    r += p.dim(0);
  }
  bool any_grad = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (Tape<T>::active() && any_grad) {
    std::vector<std::shared_ptr<Storage<T>>> srcs;
    for (const auto& p : parts) srcs.push_back(p.storage());
    detail::mark_and_record(out, [srcs, os = out.storage(), cols]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      int64_t r = 0;
      for (const auto& s : srcs) {
        const int64_t n = s->size();
        s->accumulate(g->data() + r * cols, n);
        r += n / cols;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const int64_t rows = parts[0].ndim() == 2 ? parts[0].dim(0) : -1;
  int64_t cols = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols row mismatch");
    cols += p.dim(1);
  }
  Tensor<T> out = Tensor<T>::zeros({rows, cols});
  int64_t c = 0;
  for (const auto& p : parts) {
    const int64_t w = p.dim(1);
    for (int64_t r = 0; r < rows; ++r)
      std::copy(p.data() + r * w, p.data() + (r + 1) * w, out.data() + r * cols + c);
    c += w;
  }
  bool any_grad = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (Tape<T>::active() && any_grad) {
    std::vector<std::shared_ptr<Storage<T>>> srcs;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
      srcs.push_back(p.storage());
      widths.push_back(p.dim(1));
    }
    detail::mark_and_record(out, [srcs, widths, os = out.storage(), rows, cols]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      int64_t c = 0;
      for (size_t k = 0; k < srcs.size(); ++k) {
        const int64_t w = widths[k];
        if (srcs[k]->requires_grad) {
          std::vector<T> gp(static_cast<size_t>(rows * w));
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < w; ++j) gp[r * w + j] = (*g)[r * cols + c + j];
          srcs[k]->accumulate(gp.data(), rows * w);
        }
        c += w;
      }
    });
  }
  return out;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (int64_t i = 0; i < a.size(); ++i) total += a.data()[i];
  Tensor<T> out = Tensor<T>::scalar(total);
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(as->data.size(), (*g)[0]);
      as->accumulate(ga.data(), static_cast<int64_t>(ga.size()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// Column means of an [N x D] matrix -> [D].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  if (a.ndim() != 2 || a.dim(0) == 0) throw ShapeError("mean_rows expects a nonempty matrix");
  const int64_t rows = a.dim(0), cols = a.dim(1);
  Tensor<T> out = Tensor<T>::zeros({cols});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.data()[c] += a.data()[r * cols + c];
  const T inv = T(1) / static_cast<T>(rows);
  for (int64_t c = 0; c < cols; ++c) out.data()[c] *= inv;
  if (detail::taping<T>({&a})) {
    detail::mark_and_record(out, [as = a.storage(), os = out.storage(), rows, cols, inv]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> ga(static_cast<size_t>(rows * cols));
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) ga[r * cols + c] = (*g)[c] * inv;
      as->accumulate(ga.data(), rows * cols);
    });
  }
  return out;
}

// ---- nonlinearities ----

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int nd = static_cast<int>(x.ndim());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw ShapeError("softmax axis out of range");
  const int64_t extent = x.dim(static_cast<size_t>(axis));
  if (extent == 0) throw ShapeError("softmax along an empty axis");
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(static_cast<size_t>(i));
  for (int i = 0; i < axis; ++i) outer *= x.dim(static_cast<size_t>(i));

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * extent * inner + in;
      T mx = x.data()[base];
      for (int64_t e = 1; e < extent; ++e) mx = std::max(mx, x.data()[base + e * inner]);
      T denom = T(0);
      for (int64_t e = 0; e < extent; ++e) {
        const T v = std::exp(x.data()[base + e * inner] - mx);
        out.data()[base + e * inner] = v;
        denom += v;
      }
      for (int64_t e = 0; e < extent; ++e) out.data()[base + e * inner] /= denom;
    }
  }
  if (detail::taping<T>({&x})) {
    detail::mark_and_record(out, [xs = x.storage(), os = out.storage(), outer, inner, extent]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gx(xs->data.size(), T(0));
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * extent * inner + in;
          T dot = T(0);
          for (int64_t e = 0; e < extent; ++e) dot += (*g)[base + e * inner] * os->data[base + e * inner];
          for (int64_t e = 0; e < extent; ++e) {
            const int64_t i = base + e * inner;
            gx[i] = os->data[i] * ((*g)[i] - dot);
          }
        }
      }
      xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
    });
  }
  return out;
}

// Normalizes the last axis with population variance, then applies the affine
// gamma/beta pair.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (eps <= T(0)) throw ValueError("layer_norm eps must be positive");
  if (x.ndim() == 0) throw ShapeError("layer_norm needs at least one axis");
  const int64_t d = x.dim(x.ndim() - 1);
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("layer_norm gamma/beta must match the normalized axis of extent " + std::to_string(d));
  const int64_t slices = x.size() / d;

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> inv_sigma(static_cast<size_t>(slices));
  std::vector<T> xhat(static_cast<size_t>(x.size()));
  for (int64_t s = 0; s < slices; ++s) {
    const T* row = x.data() + s * d;
    T mean = T(0);
    for (int64_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (int64_t i = 0; i < d; ++i) {
      const T c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[s] = is;
    for (int64_t i = 0; i < d; ++i) {
      const T h = (row[i] - mean) * is;
      xhat[s * d + i] = h;
      out.data()[s * d + i] = h * gamma.data()[i] + beta.data()[i];
    }
  }
  if (detail::taping<T>({&x, &gamma, &beta})) {
    detail::mark_and_record(out, [xs = x.storage(), gs = gamma.storage(), bs = beta.storage(),
                                  os = out.storage(), slices, d, inv_sigma = std::move(inv_sigma),
                                  xhat = std::move(xhat)]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      if (xs->requires_grad) {
        std::vector<T> gx(xs->data.size());
        for (int64_t s = 0; s < slices; ++s) {
          T mean_gy = T(0), mean_gyh = T(0);
          for (int64_t i = 0; i < d; ++i) {
            const T gy = (*g)[s * d + i] * gs->data[i];
            mean_gy += gy;
            mean_gyh += gy * xhat[s * d + i];
          }
          mean_gy /= static_cast<T>(d);
          mean_gyh /= static_cast<T>(d);
          for (int64_t i = 0; i < d; ++i) {
            const T gy = (*g)[s * d + i] * gs->data[i];
            gx[s * d + i] = inv_sigma[s] * (gy - mean_gy - xhat[s * d + i] * mean_gyh);
          }
        }
        xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
      }
      if (gs->requires_grad) {
        std::vector<T> gg(static_cast<size_t>(d), T(0));
        for (int64_t s = 0; s < slices; ++s)
          for (int64_t i = 0; i < d; ++i) gg[i] += (*g)[s * d + i] * xhat[s * d + i];
        gs->accumulate(gg.data(), d);
      }
      if (bs->requires_grad) {
        std::vector<T> gb(static_cast<size_t>(d), T(0));
        for (int64_t s = 0; s < slices; ++s)
          for (int64_t i = 0; i < d; ++i) gb[i] += (*g)[s * d + i];
        bs->accumulate(gb.data(), d);
      }
    });
  }
  return out;
}

// tanh-approximation GELU; the largest deviation from the erf form stays
// below 2e-3 on the real line.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  static const T kSqrt2OverPi = static_cast<T>(0.7978845608028654);
  static const T kCubic = static_cast<T>(0.044715);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const T v = x.data()[i];
    const T u = kSqrt2OverPi * (v + kCubic * v * v * v);
    out.data()[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
  if (detail::taping<T>({&x})) {
    detail::mark_and_record(out, [xs = x.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gx(xs->data.size());
      for (size_t i = 0; i < gx.size(); ++i) {
        const T v = xs->data[i];
        const T u = kSqrt2OverPi * (v + kCubic * v * v * v);
        const T t = std::tanh(u);
        const T sech2 = T(1) - t * t;
        const T du = kSqrt2OverPi * (T(1) + T(3) * kCubic * v * v);
        gx[i] = (*g)[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * sech2 * du);
      }
      xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
    });
  }
  return out;
}

template <typename T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) {
    return T(1) / (T(1) + std::exp(-v));
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = sigmoid_scalar(x.data()[i]);
  if (detail::taping<T>({&x})) {
    detail::mark_and_record(out, [xs = x.storage(), os = out.storage()]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gx(xs->data.size());
      for (size_t i = 0; i < gx.size(); ++i) {
        const T s = os->data[i];
        gx[i] = (*g)[i] * s * (T(1) - s);
      }
      xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
    });
  }
  return out;
}

// ---- conv3d (valid padding) ----

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 int64_t st, int64_t sh, int64_t sw) {
  if (x.ndim() != 4) throw ShapeError("conv3d input must be [CxTxHxW], got " + shape_str(x.shape()));
  if (kernels.ndim() != 5)
    throw ShapeError("conv3d kernels must be [KxCxtxhxw], got " + shape_str(kernels.shape()));
  if (st < 1 || sh < 1 || sw < 1) throw ValueError("conv3d strides must be >= 1");
  const int64_t C = x.dim(0), Ti = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = kernels.dim(0), kc = kernels.dim(1), kt = kernels.dim(2), kh = kernels.dim(3),
                kw = kernels.dim(4);
  if (kc != C) throw ShapeError("conv3d kernel channels != input channels");
  if (kt > Ti || kh > H || kw > W)
    throw ShapeError("conv3d kernel " + shape_str(kernels.shape()) + " larger than input " +
                     shape_str(x.shape()));
  if (bias.size() != K) throw ShapeError("conv3d bias must have one entry per kernel");
  const int64_t To = (Ti - kt) / st + 1;
  const int64_t Ho = (H - kh) / sh + 1;
  const int64_t Wo = (W - kw) / sw + 1;

  Tensor<T> out = Tensor<T>::zeros({K, To, Ho, Wo});
  auto xi = [&](int64_t c, int64_t t, int64_t h, int64_t w) {
    return x.data()[((c * Ti + t) * H + h) * W + w];
  };
  for (int64_t k = 0; k < K; ++k) {
    const T* ker = kernels.data() + k * C * kt * kh * kw;
    for (int64_t to = 0; to < To; ++to)
      for (int64_t ho = 0; ho < Ho; ++ho)
        for (int64_t wo = 0; wo < Wo; ++wo) {
          T acc = bias.data()[k];
          for (int64_t c = 0; c < C; ++c)
            for (int64_t dt = 0; dt < kt; ++dt)
              for (int64_t dh = 0; dh < kh; ++dh)
                for (int64_t dw = 0; dw < kw; ++dw)
                  acc += ker[((c * kt + dt) * kh + dh) * kw + dw] *
                         xi(c, to * st + dt, ho * sh + dh, wo * sw + dw);
          out.data()[((k * To + to) * Ho + ho) * Wo + wo] = acc;
        }
  }
  if (detail::taping<T>({&x, &kernels, &bias})) {
    detail::mark_and_record(out, [xs = x.storage(), ks = kernels.storage(), bs = bias.storage(),
                                  os = out.storage(), C, Ti, H, W, K, kt, kh, kw, st, sh, sw, To, Ho,
                                  Wo]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gx(xs->requires_grad ? xs->data.size() : 0, T(0));
      std::vector<T> gk(ks->requires_grad ? ks->data.size() : 0, T(0));
      std::vector<T> gb(bs->requires_grad ? bs->data.size() : 0, T(0));
      for (int64_t k = 0; k < K; ++k) {
        for (int64_t to = 0; to < To; ++to)
          for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
              const T gv = (*g)[((k * To + to) * Ho + ho) * Wo + wo];
              if (gv == T(0)) continue;
              if (!gb.empty()) gb[k] += gv;
              for (int64_t c = 0; c < C; ++c)
                for (int64_t dt = 0; dt < kt; ++dt)
                  for (int64_t dh = 0; dh < kh; ++dh)
                    for (int64_t dw = 0; dw < kw; ++dw) {
                      const int64_t xoff =
                          ((c * Ti + to * st + dt) * H + ho * sh + dh) * W + wo * sw + dw;
                      const int64_t koff = (((k * C + c) * kt + dt) * kh + dh) * kw + dw;
                      if (!gx.empty()) gx[xoff] += gv * ks->data[koff];
                      if (!gk.empty()) gk[koff] += gv * xs->data[xoff];
                    }
            }
      }
      if (!gx.empty()) xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
      if (!gk.empty()) ks->accumulate(gk.data(), static_cast<int64_t>(gk.size()));
      if (!gb.empty()) bs->accumulate(gb.data(), static_cast<int64_t>(gb.size()));
    });
  }
  return out;
}

// ---- losses ----

// Numerically stable BCEWithLogits, averaged over all elements:
//   max(z,0) - z*y + log(1 + exp(-|z|))
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("bce_with_logits shape mismatch " + shape_str(logits.shape()) + " vs " +
                     shape_str(targets.shape()));
  const int64_t n = logits.size();
  if (n == 0) throw ShapeError("bce_with_logits on empty tensors");
  T total = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T y = targets.data()[i];
    if (y != T(0) && y != T(1))
      throw ValueError("bce_with_logits target must be 0 or 1, got " + std::to_string(static_cast<double>(y)));
    const T z = logits.data()[i];
    total += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(n));
  if (detail::taping<T>({&logits})) {
    detail::mark_and_record(out, [zs = logits.storage(), ts = targets.storage(), os = out.storage(), n]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gz(static_cast<size_t>(n));
      const T inv = (*g)[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i)
        gz[i] = inv * (sigmoid_scalar(zs->data[i]) - ts->data[i]);
      zs->accumulate(gz.data(), n);
    });
  }
  return out;
}

// Inverted-dropout with a caller-owned generator; p = drop probability.
// p == 0 is an exact identity and draws nothing from the generator.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, std::mt19937_64& rng) {
  if (p < T(0) || p >= T(1)) throw ValueError("dropout probability must be in [0,1)");
  if (p == T(0)) return x;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> mask(static_cast<size_t>(x.size()));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  for (int64_t i = 0; i < x.size(); ++i) {
    mask[i] = uni(rng) < static_cast<double>(p) ? T(0) : keep_scale;
    out.data()[i] = x.data()[i] * mask[i];
  }
  if (detail::taping<T>({&x})) {
    detail::mark_and_record(out, [xs = x.storage(), os = out.storage(), mask = std::move(mask)]() {
      const auto* g = detail::grad_of(os);
      if (!g) return;
      std::vector<T> gx(xs->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] = (*g)[i] * mask[i];
      xs->accumulate(gx.data(), static_cast<int64_t>(gx.size()));
    });
  }
  return out;
}

// ---- initializers ----

// Truncated normal: redraws outside [-2 sigma, 2 sigma].
template <typename T>
void fill_trunc_normal(Tensor<T>& t, T sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(sigma));
  for (int64_t i = 0; i < t.size(); ++i) {
    double v = dist(rng);
    while (std::abs(v) > 2.0 * static_cast<double>(sigma)) v = dist(rng);
    t.data()[i] = static_cast<T>(v);
  }
}

template <typename T>
void fill_uniform(Tensor<T>& t, T lo, T hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(dist(rng));
}

}  // namespace mlvc

#endif  // MLVC_TENSOR_HPP
