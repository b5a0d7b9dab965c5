#include "speechface/optim.hpp"

#include <cmath>

namespace speechface {

void RmsProp::step(const std::vector<Binding>& bindings, const Graph& g) {
  for (const Binding& b : bindings) {
    const Tensor& grad = g.grad(b.var);
    Tensor& sq = sq_avg_[b.name];
    if (sq.empty()) sq = Tensor(b.param->shape());
    Tensor& p = *b.param;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = grad[i];
      sq[i] = cfg_.alpha * sq[i] + (1.0 - cfg_.alpha) * gi * gi;
      p[i] -= cfg_.lr * gi / (std::sqrt(sq[i]) + cfg_.eps);
    }
  }
}

NamedConstTensors RmsProp::state() const {
  NamedConstTensors out;
  for (const auto& [name, t] : sq_avg_) out.emplace_back("opt." + name, &t);
  return out;
}

void RmsProp::restore_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  for (const auto& [name, t] : tensors) {
    if (name.rfind("opt.", 0) == 0) sq_avg_[name.substr(4)] = t;
  }
}

}  // namespace speechface
