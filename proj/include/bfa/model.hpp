#pragma once

// Plain feed-forward networks built from dense, conv2d, relu, max-pool and
// flatten layers, with exact reverse-mode gradients.
//
// Weighted layers (dense, conv2d) are numbered separately from graph layers:
// "weighted layer w" is the w-th dense/conv2d layer in graph order. Bit
// addresses, gradients and attack records all use weighted-layer indices.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfa/bitcodec.hpp"
#include "bfa/quantizer.hpp"
#include "bfa/tensor.hpp"

namespace bfa {

enum class LayerKind : std::uint8_t { Dense = 0, Conv2d = 1, Relu = 2, MaxPool = 3, Flatten = 4 };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // Dense: [out, in]. Conv2d: [out_channels, in_channels, kernel_h, kernel_w].
  Shape weight_shape;
  bool has_bias = false;
  // Conv2d stride/padding; max-pool window stride.
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Max-pool window edge.
  std::size_t window = 0;

  static LayerSpec dense(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0, bool bias = true);
  static LayerSpec relu();
  static LayerSpec max_pool(std::size_t window, std::size_t stride = 0);
  static LayerSpec flatten();

  bool weighted() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  Shape bias_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class ParamMode : std::uint8_t { Float = 0, Quantized = 1 };

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelGraph {
 public:
  ModelGraph() = default;
  // Validates layer compatibility; parameters start at zero in float mode.
  ModelGraph(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  // Per-sample shape entering graph layer i; index num_layers() is the output.
  const Shape& activation_shape(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_classes() const { return shape_size(output_shape()); }

  std::size_t num_layers() const { return layers_.size(); }
  const LayerSpec& spec(std::size_t i) const { return layers_.at(i).spec; }
  std::vector<LayerSpec> specs() const;

  std::size_t num_weighted() const { return weighted_.size(); }
  std::size_t graph_index(std::size_t weighted_layer) const { return weighted_.at(weighted_layer); }
  std::size_t num_weights() const;

  ParamMode mode() const { return mode_; }

  // Float view of the weights; in quantized mode this is codes * delta_w.
  const Tensor& weight(std::size_t w) const { return param(w).weight; }
  const Tensor& bias(std::size_t w) const { return param(w).bias; }

  // Float mode only.
  Tensor& mutable_weight(std::size_t w);
  // Biases stay float in both modes.
  Tensor& mutable_bias(std::size_t w);
  void set_weight(std::size_t w, Tensor value);
  void set_bias(std::size_t w, Tensor value);

  // Float -> quantized: replaces every weighted layer by n_q-bit codes.
  void quantize(int n_q);
  // Quantized -> float, keeping the dequantized values.
  void to_float();

  int n_q(std::size_t w) const;
  double delta_w(std::size_t w) const;
  const BitPlane& bits(std::size_t w) const;
  QuantizedLayer quantized_layer(std::size_t w) const;
  // Installs explicit codes; switches the model to quantized mode once every
  // weighted layer has quantized storage.
  void set_quantized(std::size_t w, const QuantizedLayer& layer);

  void flip_bit(const BitAddress& address);
  bool bit(const BitAddress& address) const;
  std::vector<BitPlane> bit_planes() const;
  std::size_t total_bits() const;
  // FNV-1a over every bit plane and step size.
  std::uint64_t bit_hash() const;

  // Changes whenever weighted layer w's parameters change. Values are unique
  // process-wide, so equal revisions imply equal parameters.
  std::uint64_t revision(std::size_t w) const { return param(w).revision; }

 private:
  struct Params {
    Tensor weight;
    Tensor bias;
    std::optional<BitPlane> bits;
    double delta_w = 0.0;
    std::uint64_t revision = 0;
  };
  struct Layer {
    LayerSpec spec;
    std::optional<Params> params;
  };

  const Params& param(std::size_t w) const;
  Params& param(std::size_t w);
  void touch(Params& p);
  void refresh_weight(Params& p, std::size_t k);

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> weighted_;
  ParamMode mode_ = ParamMode::Float;
};

// Activations entering each graph layer, plus the final logits.
struct ForwardTape {
  std::vector<Tensor> inputs;
  Tensor logits;
};

// Batch may be [N, input...] or any [N, ...] with the same per-sample size.
Tensor forward(const ModelGraph& model, const Tensor& batch);
ForwardTape forward_tape(const ModelGraph& model, const Tensor& batch);
// Runs graph layers [first_layer, end) on an activation shaped for first_layer.
Tensor forward_from(const ModelGraph& model, std::size_t first_layer, const Tensor& activation);
// Runs graph layers [first_layer, last_layer).
Tensor forward_layers(const ModelGraph& model, std::size_t first_layer, std::size_t last_layer,
                      const Tensor& activation);

// Mean -log softmax(logits)[target]. Non-finite logits yield a non-finite loss.
double cross_entropy(const Tensor& logits, std::span<const int> targets);
// d(cross_entropy)/d(logits).
Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> targets);

struct GradientMap {
  double loss = 0.0;
  bool finite = true;
  std::vector<Tensor> weight;  // per weighted layer, same shape as the weight
  std::vector<Tensor> bias;
};

GradientMap backward(const ModelGraph& model, const Tensor& batch, std::span<const int> targets,
                     ForwardTape* tape = nullptr);
// Vector-Jacobian product of an arbitrary upstream gradient on the logits.
// The returned loss field is left at zero.
GradientMap backward_from(const ModelGraph& model, const ForwardTape& tape, const Tensor& upstream);

}  // namespace bfa
