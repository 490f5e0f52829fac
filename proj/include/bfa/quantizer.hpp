#pragma once

// Layer-wise symmetric uniform weight quantizer.
//
//   delta_w = max|W| / (2^(n_q-1) - 1)
//   code    = round(W / delta_w)        (ties away from zero)
//   W_q     = code * delta_w
//
// Clean quantization emits codes in +-(2^(n_q-1) - 1); the extra negative
// level -2^(n_q-1) only appears after bits are flipped and is still valid.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bfa/bitcodec.hpp"
#include "bfa/tensor.hpp"

namespace bfa {

class QuantizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QuantConfig {
  int n_q = 8;
};

struct QuantizedLayer {
  Shape shape;
  std::vector<std::int32_t> codes;
  double delta_w = 0.0;
  int n_q = 0;

  BitPlane to_bitplane() const { return BitPlane::from_codes(codes, n_q); }
  friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

double compute_step(const Tensor& weights, int n_q);
QuantizedLayer quantize_layer(const Tensor& weights, int n_q);
Tensor dequantize(const QuantizedLayer& layer);

// Straight-through estimator: round() is treated as identity on the way back.
inline Tensor ste_backward(const Tensor& upstream) { return upstream; }

}  // namespace bfa
