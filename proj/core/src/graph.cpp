#include "speechface/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace speechface {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

CMapM as_mat(const Tensor& t, int rows, int cols) { return CMapM(t.data(), rows, cols); }
MapM as_mat(Tensor& t, int rows, int cols) { return MapM(t.data(), rows, cols); }

void check_rank(const Tensor& t, int rank, const char* who) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(who) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + t.shape_str());
  }
}

// Unrolls sliding windows of img (C, H, W) into (C*KH*KW, GH*GW) where
// (GH, GW) is the window grid. Out-of-image taps read as zero.
Tensor im2col(const Tensor& img, int kh, int kw, int stride, int pad, int gh, int gw) {
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor col({c * kh * kw, gh * gw});
  double* out = col.data();
  const double* in = img.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (ci * kh + ki) * kw + kj;
        double* dst = out + static_cast<std::size_t>(row) * gh * gw;
        for (int gi = 0; gi < gh; ++gi) {
          const int ii = gi * stride + ki - pad;
          if (ii < 0 || ii >= h) {
            for (int gj = 0; gj < gw; ++gj) dst[gi * gw + gj] = 0.0;
            continue;
          }
          const double* src = in + (static_cast<std::size_t>(ci) * h + ii) * w;
          for (int gj = 0; gj < gw; ++gj) {
            const int jj = gj * stride + kj - pad;
            dst[gi * gw + gj] = (jj < 0 || jj >= w) ? 0.0 : src[jj];
          }
        }
      }
    }
  }
  return col;
}

// Scatter-add inverse of im2col.
void col2im_add(const Tensor& col, int kh, int kw, int stride, int pad, int gh, int gw,
                Tensor& img) {
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const double* in = col.data();
  double* out = img.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (ci * kh + ki) * kw + kj;
        const double* src = in + static_cast<std::size_t>(row) * gh * gw;
        for (int gi = 0; gi < gh; ++gi) {
          const int ii = gi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          double* dst = out + (static_cast<std::size_t>(ci) * h + ii) * w;
          for (int gj = 0; gj < gw; ++gj) {
            const int jj = gj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += src[gi * gw + gj];
          }
        }
      }
    }
  }
}

Tensor im2col_1d(const Tensor& x, int k, int stride, int pad, int gl) {
  const int c = x.dim(0), l = x.dim(1);
  Tensor col({c * k, gl});
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      const int row = ci * k + ki;
      for (int g = 0; g < gl; ++g) {
        const int jj = g * stride + ki - pad;
        col.at(row, g) = (jj < 0 || jj >= l) ? 0.0 : x.at(ci, jj);
      }
    }
  }
  return col;
}

void col2im_1d_add(const Tensor& col, int k, int stride, int pad, int gl, Tensor& x) {
  const int c = x.dim(0), l = x.dim(1);
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      const int row = ci * k + ki;
      for (int g = 0; g < gl; ++g) {
        const int jj = g * stride + ki - pad;
        if (jj >= 0 && jj < l) x.at(ci, jj) += col.at(row, g);
      }
    }
  }
}

}  // namespace

int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_rank(x, 1, "dense");
  check_rank(w, 2, "dense");
  const int out = w.dim(0), in = w.dim(1);
  if (x.dim(0) != in) {
    throw std::invalid_argument("dense: input size " + x.shape_str() + " vs weight " +
                                w.shape_str());
  }
  Tensor y({out});
  Eigen::Map<Eigen::VectorXd>(y.data(), out).noalias() =
      as_mat(w, out, in) * Eigen::Map<const Eigen::VectorXd>(x.data(), in);
  for (int i = 0; i < out; ++i) y.at(i) += b.at(i);
  return y;
}

Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_rank(x, 2, "conv1d");
  check_rank(w, 3, "conv1d");
  const int oc = w.dim(0), ic = w.dim(1), k = w.dim(2);
  if (x.dim(0) != ic) {
    throw std::invalid_argument("conv1d: input channels " + x.shape_str() + " vs weight " +
                                w.shape_str());
  }
  const int gl = conv_out_size(x.dim(1), k, stride, pad);
  if (gl < 1) {
    throw std::invalid_argument("conv1d: input length " + std::to_string(x.dim(1)) +
                                " too short for kernel " + std::to_string(k));
  }
  Tensor col = im2col_1d(x, k, stride, pad, gl);
  Tensor y({oc, gl});
  as_mat(y, oc, gl).noalias() = as_mat(w, oc, ic * k) * as_mat(col, ic * k, gl);
  for (int o = 0; o < oc; ++o)
    for (int g = 0; g < gl; ++g) y.at(o, g) += b.at(o);
  return y;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_rank(x, 3, "conv2d");
  check_rank(w, 4, "conv2d");
  const int oc = w.dim(0), ic = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (x.dim(0) != ic) {
    throw std::invalid_argument("conv2d: input channels " + x.shape_str() + " vs weight " +
                                w.shape_str());
  }
  const int gh = conv_out_size(x.dim(1), kh, stride, pad);
  const int gw = conv_out_size(x.dim(2), kw, stride, pad);
  if (gh < 1 || gw < 1) {
    throw std::invalid_argument("conv2d: input " + x.shape_str() + " too small for kernel " +
                                w.shape_str());
  }
  Tensor col = im2col(x, kh, kw, stride, pad, gh, gw);
  Tensor y({oc, gh, gw});
  as_mat(y, oc, gh * gw).noalias() =
      as_mat(w, oc, ic * kh * kw) * as_mat(col, ic * kh * kw, gh * gw);
  for (int o = 0; o < oc; ++o) {
    const double bo = b.at(o);
    for (int i = 0; i < gh * gw; ++i) y[static_cast<std::size_t>(o) * gh * gw + i] += bo;
  }
  return y;
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                                int pad) {
  check_rank(x, 3, "conv_transpose2d");
  check_rank(w, 4, "conv_transpose2d");
  const int ic = w.dim(0), oc = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (x.dim(0) != ic) {
    throw std::invalid_argument("conv_transpose2d: input channels " + x.shape_str() +
                                " vs weight " + w.shape_str());
  }
  const int h = x.dim(1), wd = x.dim(2);
  const int oh = (h - 1) * stride - 2 * pad + kh;
  const int ow = (wd - 1) * stride - 2 * pad + kw;
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("conv_transpose2d: degenerate output for input " + x.shape_str());
  }
  // cols = W^T (IC x OC*KH*KW)^T * X (IC x H*W)
  Tensor cols({oc * kh * kw, h * wd});
  as_mat(cols, oc * kh * kw, h * wd).noalias() =
      as_mat(w, ic, oc * kh * kw).transpose() * as_mat(x, ic, h * wd);
  Tensor y({oc, oh, ow});
  col2im_add(cols, kh, kw, stride, pad, h, wd, y);
  for (int o = 0; o < oc; ++o) {
    const double bo = b.at(o);
    for (int i = 0; i < oh * ow; ++i) y[static_cast<std::size_t>(o) * oh * ow + i] += bo;
  }
  return y;
}

Var Graph::make(Tensor value, bool requires_grad, std::function<void(Graph&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(const Tensor& value, bool requires_grad) {
  return make(value, requires_grad, nullptr);
}

Var Graph::leaf(Tensor&& value, bool requires_grad) {
  return make(std::move(value), requires_grad, nullptr);
}

Tensor& Graph::grad_buf(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(Var v) const {
  return const_cast<Graph*>(this)->grad_buf(v);
}

double Graph::scalar_value(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw std::invalid_argument("scalar_value: tensor has shape " + t.shape_str());
  return t[0];
}

void Graph::backward(Var root) {
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " + value(root).shape_str());
  }
  grad_buf(root)[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && !n.grad.empty()) n.back(*this);
  }
}

// ---- elementwise ----

Var Graph::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor y = ta;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += tb[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a) || rg(b), [a, b, out](Graph& g) {
    const Tensor& go = g.grad(out);
    if (g.rg(a)) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw std::invalid_argument("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor y = ta;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= tb[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a) || rg(b), [a, b, out](Graph& g) {
    const Tensor& go = g.grad(out);
    if (g.rg(a)) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw std::invalid_argument("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor y = ta;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= tb[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a) || rg(b), [a, b, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    if (g.rg(a)) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
    }
  });
}

Var Graph::add_scalar(Var a, double s) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Graph::scale(Var a, double s) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out, s](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
  });
}

Var Graph::relu(Var a) { return leaky_relu(a, 0.0); }

Var Graph::leaky_relu(Var a, double slope) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : slope * y[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out, slope](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& va = g.value(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += (va[i] > 0.0 ? 1.0 : slope) * go[i];
  });
}

Var Graph::tanh_(Var a) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& vy = g.value(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += (1.0 - vy[i] * vy[i]) * go[i];
  });
}

Var Graph::sigmoid_(Var a) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = y[i];
    y[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& vy = g.value(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += vy[i] * (1.0 - vy[i]) * go[i];
  });
}

Var Graph::square(Var a) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= y[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& va = g.value(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += 2.0 * va[i] * go[i];
  });
}

Var Graph::abs_(Var a) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(y[i]);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& va = g.value(a);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double s = va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
      ga[i] += s * go[i];
    }
  });
}

// ---- linear algebra ----

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_rank(ta, 2, "matmul");
  check_rank(tb, 2, "matmul");
  if (ta.dim(1) != tb.dim(0)) {
    throw std::invalid_argument("matmul: inner dims " + ta.shape_str() + " vs " + tb.shape_str());
  }
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor y({m, n});
  as_mat(y, m, n).noalias() = as_mat(ta, m, k) * as_mat(tb, k, n);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a) || rg(b), [a, b, out, m, k, n](Graph& g) {
    const Tensor& go = g.grad(out);
    if (g.rg(a)) {
      Tensor& ga = g.grad_buf(a);
      as_mat(ga, m, k).noalias() += as_mat(go, m, n) * as_mat(g.value(b), k, n).transpose();
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      as_mat(gb, k, n).noalias() += as_mat(g.value(a), m, k).transpose() * as_mat(go, m, n);
    }
  });
}

Var Graph::transpose(Var a) {
  const Tensor& ta = value(a);
  check_rank(ta, 2, "transpose");
  const int m = ta.dim(0), n = ta.dim(1);
  Tensor y({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(j, i) = ta.at(i, j);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out, m, n](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& ga = g.grad_buf(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += go.at(j, i);
  });
}

// ---- shape plumbing ----

Var Graph::reshape(Var a, std::vector<int> shape) {
  const Tensor& ta = value(a);
  if (shape_numel(shape) != ta.size()) {
    throw std::invalid_argument("reshape: " + ta.shape_str() + " to " + shape_to_string(shape));
  }
  Tensor y = Tensor::from(shape, ta.vec());
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Graph::concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: no parts");
  std::vector<int> shape = value(parts[0]).shape();
  std::size_t tail = shape_numel(shape) / static_cast<std::size_t>(shape[0]);
  int total = 0;
  bool needs = false;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.rank() != static_cast<int>(shape.size())) {
      throw std::invalid_argument("concat0: rank mismatch " + t.shape_str());
    }
    for (std::size_t d = 1; d < shape.size(); ++d) {
      if (t.shape()[d] != shape[d]) {
        throw std::invalid_argument("concat0: trailing shape mismatch " + t.shape_str() + " vs " +
                                    shape_to_string(shape));
      }
    }
    total += t.dim(0);
    needs = needs || rg(p);
  }
  shape[0] = total;
  Tensor y(shape);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data(), t.data() + t.size(), y.data() + off);
    off += t.size();
  }
  Var out{static_cast<int>(nodes_.size())};
  std::vector<Var> ps = parts;
  return make(std::move(y), needs, [ps, out, tail](Graph& g) {
    const Tensor& go = g.grad(out);
    std::size_t off2 = 0;
    for (Var p : ps) {
      const std::size_t n = g.value(p).size();
      if (g.rg(p)) {
        Tensor& gp = g.grad_buf(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += go[off2 + i];
      }
      off2 += n;
    }
    (void)tail;
  });
}

Var Graph::slice0(Var a, int begin, int len) {
  const Tensor& ta = value(a);
  if (ta.rank() < 1 || begin < 0 || len < 0 || begin + len > ta.dim(0)) {
    throw std::invalid_argument("slice0: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + len) + ") out of " + ta.shape_str());
  }
  std::vector<int> shape = ta.shape();
  const std::size_t tail = shape_numel(shape) / static_cast<std::size_t>(shape[0]);
  shape[0] = len;
  Tensor y(shape);
  std::copy(ta.data() + begin * tail, ta.data() + (begin + len) * tail, y.data());
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out, begin, tail](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[begin * tail + i] += go[i];
  });
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const int d = static_cast<int>(value(rows[0]).size());
  bool needs = false;
  for (Var r : rows) {
    check_rank(value(r), 1, "stack_rows");
    if (static_cast<int>(value(r).size()) != d) {
      throw std::invalid_argument("stack_rows: row size mismatch");
    }
    needs = needs || rg(r);
  }
  Tensor y({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = value(rows[i]);
    std::copy(t.data(), t.data() + t.size(), y.data() + i * static_cast<std::size_t>(d));
  }
  Var out{static_cast<int>(nodes_.size())};
  std::vector<Var> rs = rows;
  return make(std::move(y), needs, [rs, out, d](Graph& g) {
    const Tensor& go = g.grad(out);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (!g.rg(rs[i])) continue;
      Tensor& gr = g.grad_buf(rs[i]);
      for (int j = 0; j < d; ++j) gr[static_cast<std::size_t>(j)] += go[i * d + j];
    }
  });
}

Var Graph::gather_rows(Var m, std::vector<int> rows) {
  const Tensor& tm = value(m);
  check_rank(tm, 2, "gather_rows");
  const int d = tm.dim(1);
  Tensor y({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= tm.dim(0)) throw std::invalid_argument("gather_rows: row out of range");
    std::copy(tm.data() + static_cast<std::size_t>(r) * d,
              tm.data() + static_cast<std::size_t>(r + 1) * d,
              y.data() + i * static_cast<std::size_t>(d));
  }
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(m), [m, out, rows = std::move(rows), d](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gm = g.grad_buf(m);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < d; ++j) {
        gm[static_cast<std::size_t>(rows[i]) * d + j] += go[i * d + j];
      }
    }
  });
}

// ---- reductions ----

Var Graph::sum(Var a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(Tensor::scalar(s), rg(a), [a, out](Graph& g) {
    const double go = g.grad(out)[0];
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var Graph::mean(Var a) {
  const std::size_t n = value(a).size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Graph::dot(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) {
    throw std::invalid_argument("dot: size mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
  Var out{static_cast<int>(nodes_.size())};
  return make(Tensor::scalar(s), rg(a) || rg(b), [a, b, out](Graph& g) {
    const double go = g.grad(out)[0];
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    if (g.rg(a)) {
      Tensor& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * vb[i];
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go * va[i];
    }
  });
}

// ---- softmax family ----

Var Graph::logsumexp(Var a) {
  const Tensor& ta = value(a);
  check_rank(ta, 1, "logsumexp");
  const double m = ta.max();
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += std::exp(ta[i] - m);
  const double lse = m + std::log(s);
  Var out{static_cast<int>(nodes_.size())};
  return make(Tensor::scalar(lse), rg(a), [a, out](Graph& g) {
    const double go = g.grad(out)[0];
    const Tensor& va = g.value(a);
    const double l = g.value(out)[0];
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * std::exp(va[i] - l);
  });
}

Var Graph::softmax(Var a) {
  const Tensor& ta = value(a);
  check_rank(ta, 1, "softmax");
  const double m = ta.max();
  Tensor y = ta;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::exp(y[i] - m);
    s += y[i];
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= s;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(a), [a, out](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& sy = g.value(out);
    double gdots = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) gdots += go[i] * sy[i];
    Tensor& ga = g.grad_buf(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += sy[i] * (go[i] - gdots);
  });
}

Var Graph::l2_normalize(Var a, double eps) {
  const Tensor& ta = value(a);
  double sq = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) sq += ta[i] * ta[i];
  const double norm = std::sqrt(sq);
  const double r = std::max(norm, eps);
  Tensor y = ta;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= r;
  Var out{static_cast<int>(nodes_.size())};
  const bool saturated = norm <= eps;  // constant-divisor branch
  return make(std::move(y), rg(a), [a, out, r, saturated](Graph& g) {
    const Tensor& go = g.grad(out);
    const Tensor& va = g.value(a);
    Tensor& ga = g.grad_buf(a);
    if (saturated) {
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / r;
      return;
    }
    double vdotg = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) vdotg += va[i] * go[i];
    const double r3 = r * r * r;
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] / r - va[i] * vdotg / r3;
    }
  });
}

// ---- convolutions ----

Var Graph::conv1d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  Tensor y = conv1d_forward(tx, tw, value(b), stride, pad);
  const int oc = tw.dim(0), ic = tw.dim(1), k = tw.dim(2), gl = y.dim(1);
  Var out{static_cast<int>(nodes_.size())};
  const bool needs = rg(x) || rg(w) || rg(b);
  return make(std::move(y), needs, [x, w, b, out, stride, pad, oc, ic, k, gl](Graph& g) {
    const Tensor& go = g.grad(out);
    if (g.rg(w) || g.rg(x)) {
      if (g.rg(w)) {
        Tensor col = im2col_1d(g.value(x), k, stride, pad, gl);
        Tensor& gw = g.grad_buf(w);
        as_mat(gw, oc, ic * k).noalias() +=
            as_mat(go, oc, gl) * as_mat(col, ic * k, gl).transpose();
      }
      if (g.rg(x)) {
        Tensor dcol({ic * k, gl});
        as_mat(dcol, ic * k, gl).noalias() =
            as_mat(g.value(w), oc, ic * k).transpose() * as_mat(go, oc, gl);
        col2im_1d_add(dcol, k, stride, pad, gl, g.grad_buf(x));
      }
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (int o = 0; o < oc; ++o)
        for (int i = 0; i < gl; ++i) gb[static_cast<std::size_t>(o)] += go.at(o, i);
    }
  });
}

Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  Tensor y = conv2d_forward(tx, tw, value(b), stride, pad);
  const int oc = tw.dim(0), ic = tw.dim(1), kh = tw.dim(2), kw = tw.dim(3);
  const int gh = y.dim(1), gw = y.dim(2);
  Var out{static_cast<int>(nodes_.size())};
  const bool needs = rg(x) || rg(w) || rg(b);
  return make(std::move(y), needs, [x, w, b, out, stride, pad, oc, ic, kh, kw, gh, gw](Graph& g) {
    const Tensor& go = g.grad(out);
    const int cols = gh * gw;
    if (g.rg(w)) {
      Tensor col = im2col(g.value(x), kh, kw, stride, pad, gh, gw);
      Tensor& gwt = g.grad_buf(w);
      as_mat(gwt, oc, ic * kh * kw).noalias() +=
          as_mat(go, oc, cols) * as_mat(col, ic * kh * kw, cols).transpose();
    }
    if (g.rg(x)) {
      Tensor dcol({ic * kh * kw, cols});
      as_mat(dcol, ic * kh * kw, cols).noalias() =
          as_mat(g.value(w), oc, ic * kh * kw).transpose() * as_mat(go, oc, cols);
      col2im_add(dcol, kh, kw, stride, pad, gh, gw, g.grad_buf(x));
    }
    if (g.rg(b)) {
      Tensor& gb = g.grad_buf(b);
      for (int o = 0; o < oc; ++o) {
        double s = 0.0;
        for (int i = 0; i < cols; ++i) s += go[static_cast<std::size_t>(o) * cols + i];
        gb[static_cast<std::size_t>(o)] += s;
      }
    }
  });
}

Var Graph::conv_transpose2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  Tensor y = conv_transpose2d_forward(tx, tw, value(b), stride, pad);
  const int ic = tw.dim(0), oc = tw.dim(1), kh = tw.dim(2), kw = tw.dim(3);
  const int h = tx.dim(1), wd = tx.dim(2);
  const int oh = y.dim(1), ow = y.dim(2);
  Var out{static_cast<int>(nodes_.size())};
  const bool needs = rg(x) || rg(w) || rg(b);
  return make(std::move(y), needs,
              [x, w, b, out, stride, pad, ic, oc, kh, kw, h, wd, oh, ow](Graph& g) {
                const Tensor& go = g.grad(out);
                // dY unrolled over the *input* grid recovers both dX and dW.
                Tensor col = im2col(go, kh, kw, stride, pad, h, wd);
                if (g.rg(x)) {
                  Tensor& gx = g.grad_buf(x);
                  as_mat(gx, ic, h * wd).noalias() +=
                      as_mat(g.value(w), ic, oc * kh * kw) * as_mat(col, oc * kh * kw, h * wd);
                }
                if (g.rg(w)) {
                  Tensor& gw = g.grad_buf(w);
                  as_mat(gw, ic, oc * kh * kw).noalias() +=
                      as_mat(g.value(x), ic, h * wd) *
                      as_mat(col, oc * kh * kw, h * wd).transpose();
                }
                if (g.rg(b)) {
                  Tensor& gb = g.grad_buf(b);
                  for (int o = 0; o < oc; ++o) {
                    double s = 0.0;
                    for (int i = 0; i < oh * ow; ++i) {
                      s += go[static_cast<std::size_t>(o) * oh * ow + i];
                    }
                    gb[static_cast<std::size_t>(o)] += s;
                  }
                }
              });
}

namespace {

// (H, W) or (H, W, C): every image-plane filter below shares this view.
struct PlaneView {
  int h, w, c;
};

PlaneView plane_view(const Tensor& t, const char* who) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw std::invalid_argument(std::string(who) + ": expected (H, W) or (H, W, C), got " +
                              t.shape_str());
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Var Graph::box3_smooth(Var x) {
  const Tensor& tx = value(x);
  const PlaneView pv = plane_view(tx, "box3_smooth");
  Tensor y(tx.shape());
  auto at = [&](const Tensor& t, int i, int j, int k) -> double {
    return t[(static_cast<std::size_t>(i) * pv.w + j) * pv.c + k];
  };
  for (int i = 0; i < pv.h; ++i) {
    for (int j = 0; j < pv.w; ++j) {
      for (int k = 0; k < pv.c; ++k) {
        double s = 0.0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            s += at(tx, clampi(i + di, 0, pv.h - 1), clampi(j + dj, 0, pv.w - 1), k);
          }
        }
        y[(static_cast<std::size_t>(i) * pv.w + j) * pv.c + k] = s / 9.0;
      }
    }
  }
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(x), [x, out, pv](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gx = g.grad_buf(x);
    for (int i = 0; i < pv.h; ++i) {
      for (int j = 0; j < pv.w; ++j) {
        for (int k = 0; k < pv.c; ++k) {
          const double v = go[(static_cast<std::size_t>(i) * pv.w + j) * pv.c + k] / 9.0;
          for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
              const int ii = clampi(i + di, 0, pv.h - 1);
              const int jj = clampi(j + dj, 0, pv.w - 1);
              gx[(static_cast<std::size_t>(ii) * pv.w + jj) * pv.c + k] += v;
            }
          }
        }
      }
    }
  });
}

Var Graph::central_diff(Var x, int axis) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("central_diff: axis must be 0 or 1");
  const Tensor& tx = value(x);
  const PlaneView pv = plane_view(tx, "central_diff");
  Tensor y(tx.shape());
  auto idx = [&](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * pv.w + j) * pv.c + k;
  };
  for (int i = 0; i < pv.h; ++i) {
    for (int j = 0; j < pv.w; ++j) {
      const int ip = axis == 0 ? clampi(i + 1, 0, pv.h - 1) : i;
      const int im = axis == 0 ? clampi(i - 1, 0, pv.h - 1) : i;
      const int jp = axis == 1 ? clampi(j + 1, 0, pv.w - 1) : j;
      const int jm = axis == 1 ? clampi(j - 1, 0, pv.w - 1) : j;
      for (int k = 0; k < pv.c; ++k) {
        y[idx(i, j, k)] = 0.5 * (tx[idx(ip, jp, k)] - tx[idx(im, jm, k)]);
      }
    }
  }
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(x), [x, out, pv, axis](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gx = g.grad_buf(x);
    auto idx = [&](int i, int j, int k) {
      return (static_cast<std::size_t>(i) * pv.w + j) * pv.c + k;
    };
    for (int i = 0; i < pv.h; ++i) {
      for (int j = 0; j < pv.w; ++j) {
        const int ip = axis == 0 ? clampi(i + 1, 0, pv.h - 1) : i;
        const int im = axis == 0 ? clampi(i - 1, 0, pv.h - 1) : i;
        const int jp = axis == 1 ? clampi(j + 1, 0, pv.w - 1) : j;
        const int jm = axis == 1 ? clampi(j - 1, 0, pv.w - 1) : j;
        for (int k = 0; k < pv.c; ++k) {
          const double v = 0.5 * go[idx(i, j, k)];
          gx[idx(ip, jp, k)] += v;
          gx[idx(im, jm, k)] -= v;
        }
      }
    }
  });
}

Var Graph::chw_to_hwc_op(Var x) {
  const Tensor& tx = value(x);
  check_rank(tx, 3, "chw_to_hwc");
  const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  Tensor y({h, w, c});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) y.at(i, j, k) = tx.at(k, i, j);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(x), [x, out, c, h, w](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gx = g.grad_buf(x);
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) gx.at(k, i, j) += go.at(i, j, k);
  });
}

Var Graph::hwc_to_chw_op(Var x) {
  const Tensor& tx = value(x);
  check_rank(tx, 3, "hwc_to_chw");
  const int h = tx.dim(0), w = tx.dim(1), c = tx.dim(2);
  Tensor y({c, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k) y.at(k, i, j) = tx.at(i, j, k);
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(x), [x, out, c, h, w](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gx = g.grad_buf(x);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int k = 0; k < c; ++k) gx.at(i, j, k) += go.at(k, i, j);
  });
}

Var Graph::global_avg_pool(Var x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2 && tx.rank() != 3) {
    throw std::invalid_argument("global_avg_pool: expected rank 2 or 3, got " + tx.shape_str());
  }
  const int c = tx.dim(0);
  const std::size_t area = tx.size() / static_cast<std::size_t>(c);
  Tensor y({c});
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += tx[static_cast<std::size_t>(ci) * area + i];
    y.at(ci) = s / static_cast<double>(area);
  }
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), rg(x), [x, out, c, area](Graph& g) {
    const Tensor& go = g.grad(out);
    Tensor& gx = g.grad_buf(x);
    for (int ci = 0; ci < c; ++ci) {
      const double v = go[static_cast<std::size_t>(ci)] / static_cast<double>(area);
      for (std::size_t i = 0; i < area; ++i) gx[static_cast<std::size_t>(ci) * area + i] += v;
    }
  });
}

}  // namespace speechface
