#pragma once

// Batched layer kernels. Every accumulation runs in a fixed order that does
// not depend on batch size, so a sample evaluated alone or inside any batch
// produces bit-identical activations.

#include <cstddef>

#include "bfa/model.hpp"

namespace bfa::kernels {

struct ConvGeometry {
  std::size_t in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const LayerSpec& spec, const Shape& input);

// in: [N, in], out: [N, out].
void dense_forward(const Tensor& in, const Tensor& weight, const Tensor& bias, Tensor& out);
// Accumulates into dweight/dbias; dinput may be null.
void dense_backward(const Tensor& in, const Tensor& weight, const Tensor& dout, Tensor& dweight,
                    Tensor* dbias, Tensor* dinput);

void conv_forward(const ConvGeometry& g, const Tensor& in, const Tensor& weight, const Tensor& bias,
                  Tensor& out);
void conv_backward(const ConvGeometry& g, const Tensor& in, const Tensor& weight, const Tensor& dout,
                   Tensor& dweight, Tensor* dbias, Tensor* dinput);

void relu_forward(const Tensor& in, Tensor& out);
void relu_backward(const Tensor& in, const Tensor& dout, Tensor& dinput);

struct PoolGeometry {
  std::size_t channels, height, width, window, stride, out_h, out_w;
};
PoolGeometry pool_geometry(const LayerSpec& spec, const Shape& input);
void max_pool_forward(const PoolGeometry& g, const Tensor& in, Tensor& out);
void max_pool_backward(const PoolGeometry& g, const Tensor& in, const Tensor& dout, Tensor& dinput);

}  // namespace bfa::kernels
