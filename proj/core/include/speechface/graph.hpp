#pragma once

#include <functional>
#include <vector>

#include "speechface/tensor.hpp"

namespace speechface {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape over Tensors. A Graph is built once per
/// forward pass; backward() walks the tape in reverse creation order.
/// Double precision throughout -- gradients are checked against central
/// finite differences in the test suite, so analytic exactness matters.
///
/// Layout conventions:
///   images / feature maps  (C, H, W)
///   sequences              (T, D)
///   conv2d weight          (OC, IC, KH, KW)
///   conv_transpose2d weight(IC, OC, KH, KW)
///   conv1d weight          (OC, IC, K)
///   dense weight           (OUT, IN), vectors are rank-1
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(const Tensor& value, bool requires_grad = false);
  Var leaf(Tensor&& value, bool requires_grad = false);
  Var constant(double v) { return leaf(Tensor::scalar(v)); }

  // Elementwise; shapes must match exactly.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_scalar(Var a, double s);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var square(Var a);
  Var abs_(Var a);  // subgradient 0 at 0

  // Linear algebra (rank-2 operands).
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  // Shape plumbing.
  Var reshape(Var a, std::vector<int> shape);
  Var concat0(const std::vector<Var>& parts);           // along dim 0
  Var slice0(Var a, int begin, int len);                // along dim 0
  Var stack_rows(const std::vector<Var>& rows);         // n x (d,) -> (n, d)
  Var gather_rows(Var m, std::vector<int> rows);        // (n, d) -> (k, d)

  // Reductions.
  Var sum(Var a);
  Var mean(Var a);
  Var dot(Var a, Var b);

  // Stable softmax family (rank-1 operands).
  Var logsumexp(Var a);
  Var softmax(Var a);

  /// v / max(||v||_2, eps); the zero vector maps to itself.
  Var l2_normalize(Var a, double eps = 1e-12);

  // Convolutions, zero padding, single sample (no batch dim).
  Var conv1d(Var x, Var w, Var b, int stride, int pad);
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad);
  Var global_avg_pool(Var x);  // (C,H,W) -> (C,) or (C,L) -> (C,)

  // Image-plane filters on (H,W) or (H,W,C) tensors, replicate padding.
  Var box3_smooth(Var x);                 // 3x3 mean filter
  Var central_diff(Var x, int axis);      // axis 0 = rows (y), 1 = cols (x)

  // Layout moves between channel-major maps and interleaved images.
  Var chw_to_hwc_op(Var x);
  Var hwc_to_chw_op(Var x);

  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Tensor& grad(Var v) const;
  double scalar_value(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Graph&)> back;
  };

  Var make(Tensor value, bool requires_grad, std::function<void(Graph&)> back);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  Tensor& grad_buf(Var v);
  bool rg(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  std::vector<Node> nodes_;
};

// Plain forward kernels, shared by the tape ops and by frozen (teacher)
// networks that never need gradients.
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                                int pad);
int conv_out_size(int in, int kernel, int stride, int pad);

}  // namespace speechface
