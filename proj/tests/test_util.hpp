#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "speechface/rng.hpp"
#include "speechface/tensor.hpp"

namespace speechface::testing {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_image(int h, int w, Rng& rng) {
  Tensor t({h, w, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

/// Central finite differences of a scalar function with respect to every
/// entry of *param (perturbed in place and restored).
inline std::vector<double> fd_gradient(const std::function<double()>& eval, Tensor* param,
                                       double step = 1e-3) {
  std::vector<double> grad(param->size());
  for (std::size_t i = 0; i < param->size(); ++i) {
    const double saved = (*param)[i];
    (*param)[i] = saved + step;
    const double plus = eval();
    (*param)[i] = saved - step;
    const double minus = eval();
    (*param)[i] = saved;
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

/// Norm-based relative error between two gradient vectors.
inline double gradient_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

inline std::vector<double> to_vec(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

}  // namespace speechface::testing
