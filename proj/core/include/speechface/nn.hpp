#pragma once

#include <string>
#include <utility>
#include <vector>

#include "speechface/graph.hpp"
#include "speechface/rng.hpp"

namespace speechface {

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;
using NamedConstTensors = std::vector<std::pair<std::string, const Tensor*>>;

NamedConstTensors to_const(const NamedTensors& nt);

/// Ties model parameter tensors to graph leaves for one forward/backward
/// pass. Trainable bindings are recorded so the optimizer can route
/// gradients back to the owning tensors.
struct Binding {
  std::string name;
  Tensor* param;
  Var var;
};

class Binder {
 public:
  Binder(Graph& g, bool trainable) : g_(g), trainable_(trainable) {}

  // The const_cast is confined here: a frozen Binder never writes through
  // the stored pointer, and trainable Binders are only constructed over
  // mutable models by their own training loops.
  Var operator()(const Tensor& t, std::string name) {
    Var v = g_.leaf(t, trainable_);
    if (trainable_) bindings_.push_back({std::move(name), const_cast<Tensor*>(&t), v});
    return v;
  }

  Graph& graph() { return g_; }
  bool trainable() const { return trainable_; }
  const std::vector<Binding>& bindings() const { return bindings_; }

 private:
  Graph& g_;
  bool trainable_;
  std::vector<Binding> bindings_;
};

// Layers own their parameters as plain Tensors; apply() runs on a Graph via
// bound Vars. Weight layouts follow graph.hpp conventions.

struct Dense {
  Tensor w, b;

  void init(int in, int out, Rng& rng);
  struct B {
    Var w, b;
  };
  B bind(Binder& bd, const std::string& prefix) const;
  static Var apply(Graph& g, const B& p, Var x);
  Tensor apply_plain(const Tensor& x) const { return dense_forward(x, w, b); }
  void collect(const std::string& prefix, NamedTensors& out);
};

struct Conv1dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;

  void init(int ic, int oc, int k, int stride_, int pad_, Rng& rng);
  struct B {
    Var w, b;
  };
  B bind(Binder& bd, const std::string& prefix) const;
  Var apply(Graph& g, const B& p, Var x) const;
  Tensor apply_plain(const Tensor& x) const { return conv1d_forward(x, w, b, stride, pad); }
  void collect(const std::string& prefix, NamedTensors& out);
};

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;

  void init(int ic, int oc, int k, int stride_, int pad_, Rng& rng);
  struct B {
    Var w, b;
  };
  B bind(Binder& bd, const std::string& prefix) const;
  Var apply(Graph& g, const B& p, Var x) const;
  Tensor apply_plain(const Tensor& x) const { return conv2d_forward(x, w, b, stride, pad); }
  void collect(const std::string& prefix, NamedTensors& out);
};

struct ConvT2dLayer {
  Tensor w, b;
  int stride = 2, pad = 1;

  void init(int ic, int oc, int k, int stride_, int pad_, Rng& rng);
  struct B {
    Var w, b;
  };
  B bind(Binder& bd, const std::string& prefix) const;
  Var apply(Graph& g, const B& p, Var x) const;
  Tensor apply_plain(const Tensor& x) const {
    return conv_transpose2d_forward(x, w, b, stride, pad);
  }
  void collect(const std::string& prefix, NamedTensors& out);
};

/// Single-layer GRU; hidden state carries the causal summary.
struct GruCell {
  Tensor wz, uz, bz, wr, ur, br, wh, uh, bh;
  int in_dim = 0, hidden = 0;

  void init(int in, int hidden_, Rng& rng);
  struct B {
    Var wz, uz, bz, wr, ur, br, wh, uh, bh;
  };
  B bind(Binder& bd, const std::string& prefix) const;
  static Var step(Graph& g, const B& p, Var x, Var h);
  void collect(const std::string& prefix, NamedTensors& out);
};

/// Uniform init in [-limit, limit] with limit = sqrt(6 / fan_in) scaled by
/// `gain`; the default suits ReLU-family stacks.
void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng, double gain = 1.0);

/// Copy loaded tensors into a model's named parameters; throws on missing
/// names or shape mismatches (extra entries in `src` are ignored).
void assign_named_tensors(const NamedTensors& dst,
                          const std::vector<std::pair<std::string, Tensor>>& src);

}  // namespace speechface
