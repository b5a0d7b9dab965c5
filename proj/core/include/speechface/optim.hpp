#pragma once

#include <map>
#include <string>
#include <vector>

#include "speechface/nn.hpp"

namespace speechface {

struct RmsPropConfig {
  double lr = 1e-3;
  double alpha = 0.99;  // squared-gradient decay
  double eps = 1e-8;
};

/// RMSProp with per-parameter squared-gradient accumulators, keyed by
/// parameter name so optimizer state survives checkpoint round-trips.
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Binding>& bindings, const Graph& g);

  const RmsPropConfig& config() const { return cfg_; }

  /// Accumulator tensors, named "opt.<param>"; empty until the first step.
  NamedConstTensors state() const;
  void restore_state(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  RmsPropConfig cfg_;
  std::map<std::string, Tensor> sq_avg_;
};

}  // namespace speechface
