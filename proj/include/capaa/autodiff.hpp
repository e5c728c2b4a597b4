#pragma once

// Minimal reverse-mode automatic differentiation over CHW tensors.
//
// A graph is built eagerly by the op functions below; backward() walks it in
// reverse topological order. Leaves created with parameter() accumulate
// gradients across backward calls; interior gradients are reset on every call,
// so several roots of the same graph may be differentiated one after another.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "capaa/tensor.hpp"

namespace capaa::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  /// Gradient after backward(); zeros when none flowed here.
  Tensor grad() const;
  void zero_grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const { return node_->value[0]; }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
Var scalar(double v);

/// Builds an op node. `backprop` receives the node (with its grad filled) and
/// must accumulate into the grad_buffer() of inputs that require grad.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop);

/// Differentiates a scalar root.
void backward(const Var& root);

// Elementwise (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
/// Multiplies every channel by a single-channel map held constant.
Var mul_map(const Var& a, const Tensor& map);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_abs_diff(const Var& a, const Tensor& target);
Var select(const Var& vec, int index);
Var log_softmax(const Var& logits);

// Layers. Conv weights are (out, in*k*k, 1); linear weights are (out, in, 1).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad);
Var linear(const Var& x, const Var& weight, const Var& bias);
Var max_pool2(const Var& x);
Var avg_pool2(const Var& x);
Var global_avg_pool(const Var& x);
Var concat_channels(const Var& a, const Var& b);

// Resampling.
/// Bilinear sampling of `image` at absolute pixel coordinates grid(0)=x, grid(1)=y,
/// clamped to the image border.
Var grid_sample(const Var& image, const Var& grid);
/// Corner-aligned bilinear upsampling (used for coarse displacement grids).
Var upsample_aligned(const Var& x, int height, int width);
/// Pixel-center bilinear resize, matching capaa::resize_bilinear.
Var resize(const Var& x, int height, int width);
/// Separable filtering with a symmetric 1-D kernel, 'valid' borders.
Var filter_valid(const Var& x, std::span<const double> kernel);

}  // namespace capaa::ad
