#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "bfa/model.hpp"
#include "bfa/tensor.hpp"

namespace bfa::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline void randomize(ModelGraph& model, std::mt19937_64& rng, double scale = 0.5) {
  for (std::size_t w = 0; w < model.num_weighted(); ++w) {
    model.set_weight(w, random_tensor(model.weight(w).shape(), rng, -scale, scale));
    model.set_bias(w, random_tensor(model.bias(w).shape(), rng, -0.1, 0.1));
  }
}

inline std::vector<int> random_targets(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  std::vector<int> t(n);
  for (int& v : t) v = pick(rng);
  return t;
}

inline double relative_error(double a, double b, double floor = 0.0) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace bfa::test
