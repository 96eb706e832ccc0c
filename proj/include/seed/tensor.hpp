#pragma once

// Dense float64 tensors with a tape-free reverse-mode autodiff graph.
//
// Every op result keeps shared ownership of its inputs and a closure that
// pushes its gradient back into them. Graphs are rebuilt on every forward
// pass; a parameter that is used twice (Siamese branches) simply receives two
// accumulations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "seed/errors.hpp"

namespace seed {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Static cost of an operation. One multiply-accumulate is one unit; bias adds,
// activations and data movement are free.
struct OpCost {
  std::uint64_t multiply_accumulates = 0;
  std::uint64_t parameters_touched = 0;

  OpCost& operator+=(const OpCost& o) {
    multiply_accumulates += o.multiply_accumulates;
    parameters_touched += o.parameters_touched;
    return *this;
  }
  friend OpCost operator+(OpCost a, const OpCost& b) { return a += b; }
  friend OpCost operator-(OpCost a, const OpCost& b) {
    a.multiply_accumulates -= b.multiply_accumulates;
    a.parameters_touched -= b.parameters_touched;
    return a;
  }
  friend bool operator==(const OpCost&, const OpCost&) = default;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty == absent
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline thread_local bool grad_enabled = true;
inline thread_local OpCost cost_counter{};

inline void record_cost(std::uint64_t macs, std::uint64_t params) {
  cost_counter.multiply_accumulates += macs;
  cost_counter.parameters_touched += params;
}

}  // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Measures the cost recorded by ops executed on this thread during its lifetime.
class CostMeter {
 public:
  CostMeter() : start_(detail::cost_counter) {}
  OpCost elapsed() const { return detail::cost_counter - start_; }

 private:
  OpCost start_;
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    check_shape(shape);
    node_->data.assign(seed::numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    check_shape(shape);
    if (data.size() != seed::numel(shape)) {
      throw ContractError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + seed::to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
  }

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const { return node().data.size(); }

  std::span<const double> data() const { return node().data; }
  // Direct write access; bypasses the graph. Intended for leaves (parameters,
  // inputs) and optimizer updates.
  std::span<double> mutable_data() { return node().data; }
  const std::vector<double>& values() const { return node().data; }

  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + seed::to_string(shape()));
    return node().data[0];
  }
  double operator[](std::size_t i) const { return node().data[i]; }

  double at(std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = shape();
    return node().data[(c * s[1] + h) * s[2] + w];
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }
  bool is_leaf() const { return node().is_leaf; }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const double> grad() const {
    if (!has_grad()) throw UsageError("tensor has no gradient");
    return node().grad;
  }
  std::span<double> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() {
    auto& n = node();
    if (n.requires_grad) n.grad.assign(n.data.size(), 0.0);
  }
  void clear_grad() { node().grad.clear(); }

  // Deep copy of the values with no graph history.
  Tensor detach() const { return Tensor(shape(), node().data, false); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const detail::Node* id() const { return node_.get(); }

  // Internal: used by op implementations.
  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ContractError("tensor shape must have at least one dim");
    for (auto d : shape) {
      if (d == 0) throw ContractError("tensor dims must be positive, got " + seed::to_string(shape));
    }
  }

  detail::Node& node() const {
    if (!node_) throw UsageError("use of an empty tensor handle");
    return *node_;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Wraps freshly computed data as an op result, wiring it into the graph when
// any input is tracked.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<std::shared_ptr<Node>> parents,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool tracked = false;
  if (grad_enabled) {
    for (const auto& p : parents) tracked = tracked || p->requires_grad;
  }
  if (tracked) {
    n->requires_grad = true;
    n->is_leaf = false;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(n));
}

inline std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf && visited.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  return order;  // parents before children
}

}  // namespace detail

// Reverse pass from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed each time.
inline void backward(const Tensor& loss) {
  if (!loss) throw UsageError("backward on an empty tensor");
  if (loss.numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  auto* root = loss.handle().get();
  if (!root->requires_grad) throw UsageError("backward on a tensor that is not on a recorded graph");
  if (root->is_leaf) {
    root->ensure_grad()[0] += 1.0;
    return;
  }
  auto order = detail::topological_order(root);
  for (auto* n : order) n->grad.assign(n->data.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// True when `input` is reachable from `output` through recorded graph edges.
inline bool depends_on(const Tensor& output, const Tensor& input) {
  std::unordered_set<const detail::Node*> seen;
  std::vector<const detail::Node*> stack{output.handle().get()};
  const auto* target = input.handle().get();
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (n == target) return true;
    if (!seen.insert(n).second) continue;
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return false;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

enum class ElementwiseKind { add, sub, mul };

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
}

}  // namespace detail

inline Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "elementwise");
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(x.size());
  switch (kind) {
    case ElementwiseKind::add:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
      break;
    case ElementwiseKind::sub:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
      break;
    case ElementwiseKind::mul:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
      break;
  }
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb, kind](detail::Node& self) {
    const auto& g = self.grad;
    if (pa->requires_grad) {
      auto& ga = pa->ensure_grad();
      if (kind == ElementwiseKind::mul) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb->data[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      switch (kind) {
        case ElementwiseKind::add:
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
          break;
        case ElementwiseKind::sub:
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
          break;
        case ElementwiseKind::mul:
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa->data[i];
          break;
      }
    }
  });
}

inline Tensor elementwise(ElementwiseKind kind, const Tensor& a, double b) {
  const auto& x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kind == ElementwiseKind::add ? x[i] + b : kind == ElementwiseKind::sub ? x[i] - b : x[i] * b;
  }
  auto pa = a.handle();
  const double scale = kind == ElementwiseKind::mul ? b : 1.0;
  return detail::make_result(a.shape(), std::move(out), {pa}, [pa, scale](detail::Node& self) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * scale;
  });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::mul, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(ElementwiseKind::add, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(ElementwiseKind::mul, a, b); }

inline Tensor sum(const Tensor& a) {
  const auto& x = a.values();
  double s = 0.0;
  for (double v : x) s += v;
  auto pa = a.handle();
  return detail::make_result(Shape{1}, {s}, {pa}, [pa](detail::Node& self) {
    auto& ga = pa->ensure_grad();
    for (auto& v : ga) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// Activations

enum class ActivationKind { relu, sigmoid };

inline double sigmoid_scalar(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Tensor activation(ActivationKind kind, const Tensor& x) {
  const auto& v = x.values();
  std::vector<double> out(v.size());
  if (kind == ActivationKind::relu) {
    // NaN passes through so a diverging run is caught by the loss check.
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] < 0.0 ? 0.0 : v[i];
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid_scalar(v[i]);
  }
  auto px = x.handle();
  return detail::make_result(x.shape(), std::move(out), {px}, [px, kind](detail::Node& self) {
    auto& gx = px->ensure_grad();
    if (kind == ActivationKind::relu) {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (px->data[i] > 0.0) gx[i] += self.grad[i];
      }
    } else {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double s = self.data[i];
        gx[i] += self.grad[i] * s * (1.0 - s);
      }
    }
  });
}

inline Tensor relu(const Tensor& x) { return activation(ActivationKind::relu, x); }
inline Tensor sigmoid(const Tensor& x) { return activation(ActivationKind::sigmoid, x); }

// ---------------------------------------------------------------------------
// Loss

// Mean binary cross-entropy on logits, evaluated as
// max(z,0) - z*t + log1p(exp(-|z|)) so large |z| never overflows.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  detail::require_same_shape(logits, target, "bce_with_logits");
  const auto& z = logits.values();
  const auto& t = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) {
      throw ContractError("bce_with_logits: target must be binary, found " + std::to_string(t[i]));
    }
    total += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double n = static_cast<double>(z.size());
  auto pz = logits.handle();
  auto pt = target.handle();
  return detail::make_result(Shape{1}, {total / n}, {pz}, [pz, pt, n](detail::Node& self) {
    auto& gz = pz->ensure_grad();
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * (sigmoid_scalar(pz->data[i]) - pt->data[i]);
  });
}

// ---------------------------------------------------------------------------
// Convolution and resampling. Feature maps are [C, H, W].

namespace detail {

inline void require_chw(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw ContractError(std::string(op) + ": expected [C,H,W], got " + to_string(x.shape()));
}

// Output positions o in [lo, hi) whose input index o*stride + k - pad lies in [0, n).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t n, std::size_t out, std::size_t k,
                                                       std::size_t stride, std::size_t pad) {
  const auto sk = static_cast<std::ptrdiff_t>(k);
  const auto sp = static_cast<std::ptrdiff_t>(pad);
  const auto ss = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = 0;
  if (sp > sk) lo = (sp - sk + ss - 1) / ss;
  std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(n) - 1 + sp - sk);
  hi = hi < 0 ? 0 : hi / ss + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace detail

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (kernel > in + 2 * pad) {
    throw ConfigError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                      std::to_string(in + 2 * pad));
  }
  const std::size_t span = in + 2 * pad - kernel;
  if (span % stride != 0) {
    throw ConfigError("conv2d: output size (" + std::to_string(in) + "+2*" + std::to_string(pad) + "-" +
                      std::to_string(kernel) + ")/" + std::to_string(stride) + "+1 is not integral");
  }
  return span / stride + 1;
}

// Cross-correlation. `bias` may be an empty handle.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
  detail::require_chw(x, "conv2d");
  if (w.rank() != 4) throw ContractError("conv2d: weight must be [K,C,kh,kw], got " + to_string(w.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C) {
    throw ContractError("conv2d: input channels " + std::to_string(C) + " vs weight " + to_string(w.shape()));
  }
  if (bias && bias.shape() != Shape{K}) {
    throw ContractError("conv2d: bias shape " + to_string(bias.shape()) + " for " + std::to_string(K) + " filters");
  }
  const std::size_t Ho = conv_output_size(H, kh, stride, pad);
  const std::size_t Wo = conv_output_size(W, kw, stride, pad);

  // Lowered to a [C*kh*kw, Ho*Wo] column matrix; a 1x1 stride-1 conv uses the
  // input directly.
  const std::size_t P = Ho * Wo;
  const std::size_t CK = C * kh * kw;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  auto cols = std::make_shared<std::vector<double>>();
  if (!direct) {
    cols->assign(CK * P, 0.0);
    const auto& xv = x.values();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [y0, y1] = detail::valid_range(H, Ho, ky, stride, pad);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto [x0, x1] = detail::valid_range(W, Wo, kx, stride, pad);
          double* col = cols->data() + ((c * kh + ky) * kw + kx) * P;
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const double* xr = xv.data() + (c * H + oy * stride + ky - pad) * W;
            for (std::size_t ox = x0; ox < x1; ++ox) col[oy * Wo + ox] = xr[ox * stride + kx - pad];
          }
        }
      }
  }
  const double* colv = direct ? x.values().data() : cols->data();
  const auto& wv = w.values();
  std::vector<double> out(K * P, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double* o = out.data() + k * P;
    if (bias) std::fill(o, o + P, bias[k]);
    for (std::size_t j = 0; j < CK; ++j) {
      const double wk = wv[k * CK + j];
      const double* col = colv + j * P;
      for (std::size_t i = 0; i < P; ++i) o[i] += wk * col[i];
    }
  }
  detail::record_cost(static_cast<std::uint64_t>(K) * C * kh * kw * Ho * Wo,
                      w.numel() + (bias ? bias.numel() : 0));

  auto px = x.handle();
  auto pw = w.handle();
  std::vector<std::shared_ptr<detail::Node>> parents{px, pw};
  std::shared_ptr<detail::Node> pb;
  if (bias) {
    pb = bias.handle();
    parents.push_back(pb);
  }
  return detail::make_result(
      Shape{K, Ho, Wo}, std::move(out), std::move(parents),
      [px, pw, pb, cols, direct, C, H, W, K, kh, kw, Ho, Wo, stride, pad](detail::Node& self) {
        const std::size_t P = Ho * Wo;
        const std::size_t CK = C * kh * kw;
        const auto& g = self.grad;
        const double* colv = direct ? px->data.data() : cols->data();
        const double* wv = pw->data.data();
        if (pb && pb->requires_grad) {
          auto& gb = pb->ensure_grad();
          for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < P; ++i) s += g[k * P + i];
            gb[k] += s;
          }
        }
        if (pw->requires_grad) {
          double* gw = pw->ensure_grad().data();
          for (std::size_t k = 0; k < K; ++k) {
            const double* gk = g.data() + k * P;
            for (std::size_t j = 0; j < CK; ++j) {
              const double* col = colv + j * P;
              double acc = 0.0;
              for (std::size_t i = 0; i < P; ++i) acc += gk[i] * col[i];
              gw[k * CK + j] += acc;
            }
          }
        }
        if (!px->requires_grad) return;
        double* gx = px->ensure_grad().data();
        std::vector<double> gcols;
        double* gcol_base = gx;
        if (!direct) {
          gcols.assign(CK * P, 0.0);
          gcol_base = gcols.data();
        }
        for (std::size_t k = 0; k < K; ++k) {
          const double* gk = g.data() + k * P;
          for (std::size_t j = 0; j < CK; ++j) {
            const double wk = wv[k * CK + j];
            double* gc = gcol_base + j * P;
            for (std::size_t i = 0; i < P; ++i) gc[i] += wk * gk[i];
          }
        }
        if (direct) return;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto [y0, y1] = detail::valid_range(H, Ho, ky, stride, pad);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto [x0, x1] = detail::valid_range(W, Wo, kx, stride, pad);
              const double* gc = gcols.data() + ((c * kh + ky) * kw + kx) * P;
              for (std::size_t oy = y0; oy < y1; ++oy) {
                double* gxr = gx + (c * H + oy * stride + ky - pad) * W;
                for (std::size_t ox = x0; ox < x1; ++ox) gxr[ox * stride + kx - pad] += gc[oy * Wo + ox];
              }
            }
          }
      });
}

enum class ResampleMode { down, up };

// Average pooling (down) or nearest-neighbour replication (up) by an integer factor.
inline Tensor pool_and_upsample(const Tensor& x, std::size_t factor, ResampleMode mode) {
  detail::require_chw(x, "pool_and_upsample");
  if (factor < 2) throw ConfigError("pool_and_upsample: factor must be >= 2");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const auto& xv = x.values();
  auto px = x.handle();
  if (mode == ResampleMode::down) {
    if (H % factor != 0 || W % factor != 0) {
      throw ConfigError("pool_and_upsample: " + to_string(x.shape()) + " not divisible by " +
                        std::to_string(factor));
    }
    const std::size_t Ho = H / factor, Wo = W / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    std::vector<double> out(C * Ho * Wo, 0.0);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx)
          out[(c * Ho + y / factor) * Wo + xx / factor] += xv[(c * H + y) * W + xx];
    for (auto& v : out) v *= inv;
    return detail::make_result(Shape{C, Ho, Wo}, std::move(out), {px},
                               [px, C, H, W, Ho, Wo, factor, inv](detail::Node& self) {
                                 auto& gx = px->ensure_grad();
                                 for (std::size_t c = 0; c < C; ++c)
                                   for (std::size_t y = 0; y < H; ++y)
                                     for (std::size_t xx = 0; xx < W; ++xx)
                                       gx[(c * H + y) * W + xx] +=
                                           inv * self.grad[(c * Ho + y / factor) * Wo + xx / factor];
                               });
  }
  const std::size_t Ho = H * factor, Wo = W * factor;
  std::vector<double> out(C * Ho * Wo);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        out[(c * Ho + y) * Wo + xx] = xv[(c * H + y / factor) * W + xx / factor];
  return detail::make_result(Shape{C, Ho, Wo}, std::move(out), {px},
                             [px, C, H, W, Ho, Wo, factor](detail::Node& self) {
                               auto& gx = px->ensure_grad();
                               for (std::size_t c = 0; c < C; ++c)
                                 for (std::size_t y = 0; y < Ho; ++y)
                                   for (std::size_t xx = 0; xx < Wo; ++xx)
                                     gx[(c * H + y / factor) * W + xx / factor] +=
                                         self.grad[(c * Ho + y) * Wo + xx];
                             });
}

inline Tensor upsample(const Tensor& x, std::size_t factor) {
  return pool_and_upsample(x, factor, ResampleMode::up);
}
inline Tensor avg_pool(const Tensor& x, std::size_t factor) {
  return pool_and_upsample(x, factor, ResampleMode::down);
}

// Depth-to-space: [C*r*r, H, W] -> [C, H*r, W*r]. Channel c*r*r + dy*r + dx
// lands on output pixel (y*r+dy, x*r+dx).
inline Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  detail::require_chw(x, "pixel_shuffle");
  if (r < 1 || x.dim(0) % (r * r) != 0) {
    throw ConfigError("pixel_shuffle: channels " + std::to_string(x.dim(0)) + " not divisible by r^2");
  }
  const std::size_t C = x.dim(0) / (r * r), H = x.dim(1), W = x.dim(2);
  const std::size_t Ho = H * r, Wo = W * r;
  std::vector<std::size_t> source(C * Ho * Wo);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const std::size_t ch = c * r * r + (y % r) * r + (xx % r);
        source[(c * Ho + y) * Wo + xx] = (ch * H + y / r) * W + xx / r;
      }
  const auto& xv = x.values();
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[source[i]];
  auto px = x.handle();
  return detail::make_result(Shape{C, Ho, Wo}, std::move(out), {px},
                             [px, src = std::move(source)](detail::Node& self) {
                               auto& gx = px->ensure_grad();
                               for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
                             });
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  detail::require_chw(a, "concat_channels");
  detail::require_chw(b, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ContractError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto pa = a.handle();
  auto pb = b.handle();
  const std::size_t na = a.numel();
  return detail::make_result(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), {pa, pb},
                             [pa, pb, na](detail::Node& self) {
                               if (pa->requires_grad) {
                                 auto& ga = pa->ensure_grad();
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                               }
                               if (pb->requires_grad) {
                                 auto& gb = pb->ensure_grad();
                                 for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[na + i];
                               }
                             });
}

// Elementwise selection: out[i] = take[i] where select[i] != 0, else keep[i].
// For a 0/1 mask this is exactly  m*take + (1-m)*keep.
inline Tensor masked_select(const Tensor& keep, const Tensor& take, std::span<const std::uint8_t> select) {
  detail::require_same_shape(keep, take, "masked_select");
  if (select.size() != keep.numel()) throw ContractError("masked_select: mask length mismatch");
  const auto& k = keep.values();
  const auto& t = take.values();
  std::vector<double> out(k.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = select[i] ? t[i] : k[i];
  auto pk = keep.handle();
  auto pt = take.handle();
  std::vector<std::uint8_t> m(select.begin(), select.end());
  return detail::make_result(keep.shape(), std::move(out), {pk, pt},
                             [pk, pt, m = std::move(m)](detail::Node& self) {
                               if (pk->requires_grad) {
                                 auto& g = pk->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   if (!m[i]) g[i] += self.grad[i];
                               }
                               if (pt->requires_grad) {
                                 auto& g = pt->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   if (m[i]) g[i] += self.grad[i];
                               }
                             });
}

}  // namespace seed
