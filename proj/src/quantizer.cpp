#include "bfa/quantizer.hpp"

#include <algorithm>
#include <cmath>

namespace bfa {

double compute_step(const Tensor& weights, int n_q) {
  check_bit_width(n_q);
  const double peak = weights.max_abs();
  if (!(peak > 0.0) || !std::isfinite(peak)) {
    throw QuantizationError("step size undefined: weights are all zero or non-finite");
  }
  return peak / static_cast<double>(code_max(n_q));
}

QuantizedLayer quantize_layer(const Tensor& weights, int n_q) {
  QuantizedLayer out;
  out.shape = weights.shape();
  out.n_q = n_q;
  out.delta_w = compute_step(weights, n_q);
  out.codes.resize(weights.size());
  const double limit = static_cast<double>(code_max(n_q));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    // std::round rounds halfway cases away from zero.
    const double level = std::round(weights[i] / out.delta_w);
    out.codes[i] = static_cast<std::int32_t>(std::clamp(level, -limit, limit));
  }
  return out;
}

Tensor dequantize(const QuantizedLayer& layer) {
  Tensor out(layer.shape);
  for (std::size_t i = 0; i < layer.codes.size(); ++i) {
    out[i] = static_cast<double>(layer.codes[i]) * layer.delta_w;
  }
  return out;
}

}  // namespace bfa
