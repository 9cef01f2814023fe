#pragma once

// Reverse-mode automatic differentiation over dense NCHW tensors.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their parents and a backward closure; backward()
// walks the recorded graph once in reverse topological order and accumulates
// gradients into every leaf that requires them. Intermediate gradients are
// reset at the start of each backward() call, leaf gradients are not.
//
// Everything is templated on the scalar type and instantiated for float
// (training) and double (gradient checks).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace osteoforge::ad {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const T>, std::span<Tensor<T>>)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  /// Throws ShapeError if values.size() != shape.numel().
  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> values() const { return node_->value; }
  /// Direct write access to the stored values, meant for leaves (parameters,
  /// inputs). Mutating an interior node invalidates its recorded backward.
  std::span<T> mutable_values() { return node_->value; }
  /// Empty until a gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->parents.empty(); }
  void zero_grad();
  /// The single value of a one-element tensor.
  T item() const;
  /// Value copy with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Backward closure of a recorded op: receives the gradient of the op's
/// output and the parent tensors, and accumulates into each parent that
/// requires a gradient.
template <class T>
using BackwardFn = std::function<void(std::span<const T>, std::span<Tensor<T>>)>;

/// Builds an op result. The graph edge is recorded only when gradient
/// recording is enabled and at least one parent requires a gradient.
template <class T>
Tensor<T> record_op(Shape shape, std::vector<T> values, std::vector<Tensor<T>> parents,
                    BackwardFn<T> backward);

/// While alive, ops on this thread record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// ---------------------------------------------------------------------------
// Layer vocabulary

struct ConvOptions {
  int dilation = 1;
};

/// Stride-1 cross-correlation with "same" zero padding of dilation*(k-1)/2.
/// weight: (Cout, Cin, k, k) with odd k; bias: (1, Cout, 1, 1) or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 ConvOptions options = {});

/// 2x2 max pooling, stride 2. The gradient goes to the first maximum in
/// row-major window order.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& input);

/// 2x2 mean pooling, stride 2.
template <class T>
Tensor<T> avgpool2(const Tensor<T>& input);

/// Nearest-neighbour x2 upsampling.
template <class T>
Tensor<T> upsample_nearest2(const Tensor<T>& input);

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// max(0, x); the subgradient at 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& input);

template <class T>
Tensor<T> tanh_act(const Tensor<T>& input);

/// Adds N(0, stddev^2) noise drawn from `seed` when training; identity
/// otherwise. The backward pass is the identity in both modes.
template <class T>
Tensor<T> gaussian_noise(const Tensor<T>& input, double stddev, bool training,
                         std::uint64_t seed);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& input, double factor);

template <class T>
Tensor<T> sum(const Tensor<T>& input);

template <class T>
Tensor<T> mean(const Tensor<T>& input);

/// mean(|a - b| * weight); `weight` may be undefined (all ones) and never
/// receives a gradient.
template <class T>
Tensor<T> reduce_l1(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& weight = {});

/// mean((a - b)^2).
template <class T>
Tensor<T> reduce_mse(const Tensor<T>& a, const Tensor<T>& b);

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
/// Throws ShapeError unless `loss` has exactly one element.
template <class T>
void backward(const Tensor<T>& loss);

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded random subset of this
  /// size per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

/// Compares the analytic gradient of `loss_fn` with central differences
/// (f(x+eps) - f(x-eps)) / 2eps for each coordinate of each input. The
/// per-coordinate error is |a - n| / max(1e-8, |a| + |n|).
template <class T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss_fn,
                           std::vector<Tensor<T>> inputs, GradCheckOptions options = {});

}  // namespace osteoforge::ad
