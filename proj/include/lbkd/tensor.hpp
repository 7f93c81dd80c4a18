#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lbkd/error.hpp"

namespace lbkd {

using Shape = std::vector<std::size_t>;

// Eigen peels a varying number of leading elements off buffers that are not
// packet-aligned, so the summation order of a product could depend on where
// malloc placed it. All tensor storage is 64-byte aligned instead.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

// One entry of the computation tape. Non-leaf nodes keep their parents and a
// backward closure until backward() consumes them.
struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty() && !backward; }

  Buffer& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

}  // namespace detail

// While alive, operations on the current thread do not record to the tape.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, const std::vector<double>& data, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer(data.begin(), data.end()), requires_grad) {}
  Tensor(Shape shape, std::initializer_list<double> data, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer(data), requires_grad) {}

  Tensor(Shape shape, Buffer data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                       std::to_string(numel(shape)) + " elements but " +
                       std::to_string(data.size()) + " values were given");
    }
    for (auto extent : shape) {
      if (extent == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, 0.0, requires_grad);
  }

  static Tensor full(const Shape& shape, double value, bool requires_grad = false) {
    return Tensor(shape, Buffer(numel(shape), value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  const char* op_name() const { return node_->op; }

  std::span<const double> data() const { return node_->data; }
  // Direct write access; meant for parameter updates and initialization.
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw TapeError("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = on;
  }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const {
    if (!has_grad()) throw TapeError("tensor has no gradient; call backward() first");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values, cut off from the tape.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  Tensor reshape(const Shape& new_shape) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Builds an op result. The backward closure is attached only when recording
// is enabled and at least one input needs a gradient.
inline Tensor make_result(Shape shape, Buffer data,
                          std::initializer_list<Tensor> inputs, const char* op,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs = false;
  if (!grad_disabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

inline void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate until
// zero_grad(); the intermediate part of the tape is released afterwards and a
// second backward() over it raises TapeError.
inline void backward(const Tensor& loss) {
  using detail::Node;
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (loss.node()->consumed) throw TapeError("backward() called twice on the same tape");
  if (!loss.requires_grad()) throw TapeError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        if (parent->consumed) throw TapeError("backward() reached a consumed part of the tape");
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.node()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  for (Node* n : order) {
    if (!n->is_leaf()) {
      n->consumed = true;
      n->backward = nullptr;
      n->parents.clear();
    }
  }
}

inline Tensor Tensor::reshape(const Shape& new_shape) const {
  if (numel(new_shape) != size()) {
    throw ShapeError("reshape " + to_string(shape()) + " -> " + to_string(new_shape));
  }
  auto self = node_;
  return detail::make_result(new_shape, node_->data, {*this}, "reshape", [self](detail::Node& out) {
    auto& g = self->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. `b` may have the same shape as `a` or hold a single
// element, which is broadcast.

enum class ElementwiseOp { add, sub, mul, div };

inline Tensor elementwise(ElementwiseOp kind, const Tensor& a, const Tensor& b) {
  const bool broadcast = b.size() == 1 && a.size() != 1;
  if (!broadcast && a.shape() != b.shape() && !(a.size() == 1 && b.size() == 1)) {
    throw ShapeError("elementwise: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double y = bv[broadcast ? 0 : i];
    switch (kind) {
      case ElementwiseOp::add: out[i] = av[i] + y; break;
      case ElementwiseOp::sub: out[i] = av[i] - y; break;
      case ElementwiseOp::mul: out[i] = av[i] * y; break;
      case ElementwiseOp::div: out[i] = av[i] / y; break;
    }
  }
  auto an = a.node();
  auto bn = b.node();
  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  return detail::make_result(a.shape(), std::move(out), {a, b}, names[static_cast<int>(kind)],
                             [an, bn, kind, broadcast](detail::Node& out) {
    const auto& g = out.grad;
    const auto& x = an->data;
    const auto& y = bn->data;
    auto at = [&](std::size_t i) { return y[broadcast ? 0 : i]; };
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case ElementwiseOp::add:
          case ElementwiseOp::sub: ga[i] += g[i]; break;
          case ElementwiseOp::mul: ga[i] += g[i] * at(i); break;
          case ElementwiseOp::div: ga[i] += g[i] / at(i); break;
        }
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case ElementwiseOp::add: d = g[i]; break;
          case ElementwiseOp::sub: d = -g[i]; break;
          case ElementwiseOp::mul: d = g[i] * x[i]; break;
          case ElementwiseOp::div: d = -g[i] * x[i] / (at(i) * at(i)); break;
        }
        gb[broadcast ? 0 : i] += d;
      }
    }
  });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::div, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return a + Tensor::scalar(b); }
inline Tensor operator-(const Tensor& a, double b) { return a - Tensor::scalar(b); }
inline Tensor operator*(const Tensor& a, double b) { return a * Tensor::scalar(b); }
inline Tensor operator/(const Tensor& a, double b) { return a / Tensor::scalar(b); }
inline Tensor operator*(double a, const Tensor& b) { return b * Tensor::scalar(a); }
inline Tensor operator-(double a, const Tensor& b) { return Tensor::full(b.shape(), a) - b; }

// Elementwise op with a pointwise derivative, shared by the activations.
namespace detail {

template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, op, [xn, df](Node& out) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * df(xn->data[i], out.data[i]);
  });
}

}  // namespace detail

inline Tensor neg(const Tensor& x) {
  return detail::unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

inline constexpr double kLeakyReluSlope = 0.01;

inline Tensor leaky_relu(const Tensor& x, double slope = kLeakyReluSlope) {
  return detail::unary(
      x, "leaky_relu", [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

enum class Activation { leaky_relu, sigmoid };

inline Tensor activation(Activation kind, const Tensor& x) {
  return kind == Activation::sigmoid ? sigmoid(x) : leaky_relu(x);
}

// Values outside [lo, hi] are clipped and receive no gradient.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

inline Tensor log10(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw ValueError("log10 of non-positive value " + std::to_string(v));
  }
  return detail::unary(
      x, "log10", [](double v) { return std::log10(v); },
      [](double v, double) { return 1.0 / (v * std::numbers::ln10); });
}

inline Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw ValueError("sqrt of negative value " + std::to_string(v));
  }
  return detail::unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xn = x.node();
  return detail::make_result({1}, {s}, {x}, "sum", [xn](detail::Node& out) {
    auto& gx = xn->ensure_grad();
    for (auto& g : gx) g += out.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  return sum(x) * (1.0 / static_cast<double>(x.size()));
}

// Flattened inner product; operands only need equal element counts.
inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: element count mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result({1}, {s}, {a, b}, "dot", [an, bn](detail::Node& out) {
    const double g = out.grad[0];
    // Both gradients are computed from the forward values, so dot(x, x) works.
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->data[i];
    }
  });
}

inline Tensor l2_norm(const Tensor& x) { return sqrt(dot(x, x)); }

// Concatenation along the leading axis; trailing extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts.front().shape();
  shape[0] = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw ShapeError("concat: incompatible shapes " + to_string(parts.front().shape()) + " and " +
                       to_string(p.shape()));
    }
    shape[0] += p.dim(0);
  }
  Buffer out;
  out.reserve(numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(out);
  node->op = "concat";
  bool needs = false;
  if (!detail::grad_disabled()) {
    for (const auto& p : parts) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward = [](detail::Node& self) {
      std::size_t offset = 0;
      for (auto& parent : self.parents) {
        const std::size_t n = parent->data.size();
        if (parent->requires_grad) {
          auto& g = parent->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
        }
        offset += n;
      }
    };
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace lbkd
