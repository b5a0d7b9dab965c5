#include "speechface/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace speechface {

NamedConstTensors to_const(const NamedTensors& nt) {
  NamedConstTensors out;
  out.reserve(nt.size());
  for (const auto& [name, t] : nt) out.emplace_back(name, t);
  return out;
}

void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

void assign_named_tensors(const NamedTensors& dst,
                          const std::vector<std::pair<std::string, Tensor>>& src) {
  for (const auto& [name, param] : dst) {
    const Tensor* found = nullptr;
    for (const auto& [sname, st] : src) {
      if (sname == name) {
        found = &st;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    if (!found->same_shape(*param)) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               found->shape_str() + ", model expects " + param->shape_str());
    }
    *param = *found;
  }
}

// ---- Dense ----

void Dense::init(int in, int out, Rng& rng) {
  w = Tensor({out, in});
  b = Tensor({out});
  init_uniform_fan_in(w, in, rng);
}

Dense::B Dense::bind(Binder& bd, const std::string& prefix) const {
  return {bd(w, prefix + ".w"), bd(b, prefix + ".b")};
}

Var Dense::apply(Graph& g, const B& p, Var x) {
  const int out = g.value(p.w).dim(0);
  const int in = g.value(p.w).dim(1);
  Var xc = g.reshape(x, {in, 1});
  Var y = g.matmul(p.w, xc);
  return g.add(g.reshape(y, {out}), p.b);
}

void Dense::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".w", &w);
  out.emplace_back(prefix + ".b", &b);
}

// ---- Conv1d ----

void Conv1dLayer::init(int ic, int oc, int k, int stride_, int pad_, Rng& rng) {
  w = Tensor({oc, ic, k});
  b = Tensor({oc});
  stride = stride_;
  pad = pad_;
  init_uniform_fan_in(w, ic * k, rng);
}

Conv1dLayer::B Conv1dLayer::bind(Binder& bd, const std::string& prefix) const {
  return {bd(w, prefix + ".w"), bd(b, prefix + ".b")};
}

Var Conv1dLayer::apply(Graph& g, const B& p, Var x) const {
  return g.conv1d(x, p.w, p.b, stride, pad);
}

void Conv1dLayer::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".w", &w);
  out.emplace_back(prefix + ".b", &b);
}

// ---- Conv2d ----

void Conv2dLayer::init(int ic, int oc, int k, int stride_, int pad_, Rng& rng) {
  w = Tensor({oc, ic, k, k});
  b = Tensor({oc});
  stride = stride_;
  pad = pad_;
  init_uniform_fan_in(w, ic * k * k, rng);
}

Conv2dLayer::B Conv2dLayer::bind(Binder& bd, const std::string& prefix) const {
  return {bd(w, prefix + ".w"), bd(b, prefix + ".b")};
}

Var Conv2dLayer::apply(Graph& g, const B& p, Var x) const {
  return g.conv2d(x, p.w, p.b, stride, pad);
}

void Conv2dLayer::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".w", &w);
  out.emplace_back(prefix + ".b", &b);
}

// ---- ConvT2d ----

void ConvT2dLayer::init(int ic, int oc, int k, int stride_, int pad_, Rng& rng) {
  w = Tensor({ic, oc, k, k});
  b = Tensor({oc});
  stride = stride_;
  pad = pad_;
  init_uniform_fan_in(w, ic * k * k, rng);
}

ConvT2dLayer::B ConvT2dLayer::bind(Binder& bd, const std::string& prefix) const {
  return {bd(w, prefix + ".w"), bd(b, prefix + ".b")};
}

Var ConvT2dLayer::apply(Graph& g, const B& p, Var x) const {
  return g.conv_transpose2d(x, p.w, p.b, stride, pad);
}

void ConvT2dLayer::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".w", &w);
  out.emplace_back(prefix + ".b", &b);
}

// ---- GRU ----

void GruCell::init(int in, int hidden_, Rng& rng) {
  in_dim = in;
  hidden = hidden_;
  auto mk = [&](Tensor& t, int rows, int cols) {
    t = Tensor({rows, cols});
    init_uniform_fan_in(t, cols, rng);
  };
  mk(wz, hidden, in);
  mk(uz, hidden, hidden);
  mk(wr, hidden, in);
  mk(ur, hidden, hidden);
  mk(wh, hidden, in);
  mk(uh, hidden, hidden);
  bz = Tensor({hidden});
  br = Tensor({hidden});
  bh = Tensor({hidden});
}

GruCell::B GruCell::bind(Binder& bd, const std::string& prefix) const {
  return {bd(wz, prefix + ".wz"), bd(uz, prefix + ".uz"), bd(bz, prefix + ".bz"),
          bd(wr, prefix + ".wr"), bd(ur, prefix + ".ur"), bd(br, prefix + ".br"),
          bd(wh, prefix + ".wh"), bd(uh, prefix + ".uh"), bd(bh, prefix + ".bh")};
}

Var GruCell::step(Graph& g, const B& p, Var x, Var h) {
  const int hid = g.value(p.uz).dim(0);
  const int in = g.value(p.wz).dim(1);
  auto matvec = [&](Var m, Var v, int rows, int cols) {
    return g.reshape(g.matmul(m, g.reshape(v, {cols, 1})), {rows});
  };
  Var z = g.sigmoid_(g.add(g.add(matvec(p.wz, x, hid, in), matvec(p.uz, h, hid, hid)), p.bz));
  Var r = g.sigmoid_(g.add(g.add(matvec(p.wr, x, hid, in), matvec(p.ur, h, hid, hid)), p.br));
  Var hr = g.mul(r, h);
  Var cand = g.tanh_(g.add(g.add(matvec(p.wh, x, hid, in), matvec(p.uh, hr, hid, hid)), p.bh));
  // h' = (1 - z) * h + z * cand
  Var one_minus_z = g.add_scalar(g.scale(z, -1.0), 1.0);
  return g.add(g.mul(one_minus_z, h), g.mul(z, cand));
}

void GruCell::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".wz", &wz);
  out.emplace_back(prefix + ".uz", &uz);
  out.emplace_back(prefix + ".bz", &bz);
  out.emplace_back(prefix + ".wr", &wr);
  out.emplace_back(prefix + ".ur", &ur);
  out.emplace_back(prefix + ".br", &br);
  out.emplace_back(prefix + ".wh", &wh);
  out.emplace_back(prefix + ".uh", &uh);
  out.emplace_back(prefix + ".bh", &bh);
}

}  // namespace speechface
