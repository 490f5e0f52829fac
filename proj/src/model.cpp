#include "bfa/model.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

#include "kernels.hpp"

namespace bfa {

namespace {

std::atomic<std::uint64_t> g_revision{0};

std::uint64_t next_revision() { return ++g_revision; }

std::string layer_label(std::size_t i, const LayerSpec& spec) {
  return "layer " + std::to_string(i) + " (" + to_string(spec.kind) + ")";
}

Shape output_shape_of(std::size_t i, const LayerSpec& spec, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw ModelError(layer_label(i, spec) + ": " + why + ", input shape " + shape_to_string(in));
  };
  switch (spec.kind) {
    case LayerKind::Dense:
      if (spec.weight_shape.size() != 2) return fail("dense weight must be [out, in]");
      if (in.size() != 1 || in[0] != spec.weight_shape[1]) {
        return fail("expects a flat input of " + std::to_string(spec.weight_shape[1]));
      }
      return {spec.weight_shape[0]};
    case LayerKind::Conv2d: {
      if (spec.weight_shape.size() != 4) return fail("conv2d weight must be [out, in, kh, kw]");
      if (in.size() != 3 || in[0] != spec.weight_shape[1]) {
        return fail("expects [" + std::to_string(spec.weight_shape[1]) + ", H, W]");
      }
      if (spec.stride == 0) return fail("stride must be positive");
      if (in[1] + 2 * spec.padding < spec.weight_shape[2] || in[2] + 2 * spec.padding < spec.weight_shape[3]) {
        return fail("kernel larger than padded input");
      }
      const auto g = kernels::conv_geometry(spec, in);
      return {g.out_channels, g.out_h, g.out_w};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool: {
      if (in.size() != 3) return fail("expects [C, H, W]");
      if (spec.window == 0 || spec.stride == 0) return fail("window and stride must be positive");
      if (in[1] < spec.window || in[2] < spec.window) return fail("window larger than input");
      const auto g = kernels::pool_geometry(spec, in);
      return {g.channels, g.out_h, g.out_w};
    }
    case LayerKind::Flatten:
      return {shape_size(in)};
  }
  return fail("unknown layer kind");
}

Tensor as_batch(const ModelGraph& model, std::size_t first_layer, const Tensor& batch) {
  const Shape& per_sample = model.activation_shape(first_layer);
  const std::size_t sample_size = shape_size(per_sample);
  if (batch.rank() == 0 || batch.dim(0) == 0 || batch.size() != batch.dim(0) * sample_size) {
    const std::string where = first_layer < model.num_layers()
                                  ? layer_label(first_layer, model.spec(first_layer))
                                  : std::string("output");
    throw ShapeError(where + ": batch shape " + shape_to_string(batch.shape()) +
                     " incompatible with per-sample shape " + shape_to_string(per_sample));
  }
  Shape shape{batch.dim(0)};
  shape.insert(shape.end(), per_sample.begin(), per_sample.end());
  return batch.reshaped(std::move(shape));
}

Tensor run_layer(const ModelGraph& model, std::size_t i, std::size_t& weighted, const Tensor& in) {
  const LayerSpec& spec = model.spec(i);
  Tensor out;
  switch (spec.kind) {
    case LayerKind::Dense:
      kernels::dense_forward(in, model.weight(weighted), model.bias(weighted), out);
      ++weighted;
      break;
    case LayerKind::Conv2d:
      kernels::conv_forward(kernels::conv_geometry(spec, model.activation_shape(i)), in,
                            model.weight(weighted), model.bias(weighted), out);
      ++weighted;
      break;
    case LayerKind::Relu:
      kernels::relu_forward(in, out);
      break;
    case LayerKind::MaxPool:
      kernels::max_pool_forward(kernels::pool_geometry(spec, model.activation_shape(i)), in, out);
      break;
    case LayerKind::Flatten:
      out = in.reshaped({in.dim(0), shape_size(model.activation_shape(i + 1))});
      break;
  }
  return out;
}

std::size_t weighted_before(const ModelGraph& model, std::size_t layer) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < layer; ++i) w += model.spec(i).weighted() ? 1 : 0;
  return w;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "max-pool";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.weight_shape = {out, in};
  s.has_bias = bias;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.weight_shape = {out_channels, in_channels, kernel, kernel};
  s.has_bias = bias;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::max_pool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.window = window;
  s.stride = stride ? stride : window;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

Shape LayerSpec::bias_shape() const {
  if (!weighted() || !has_bias) return {};
  return {weight_shape.at(0)};
}

ModelGraph::ModelGraph(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)) {
  if (shape_size(input_shape_) == 0 || input_shape_.empty()) throw ModelError("empty input shape");
  shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    shapes_.push_back(output_shape_of(i, spec, shapes_.back()));
    Layer layer{spec, std::nullopt};
    if (spec.weighted()) {
      Params p;
      p.weight = Tensor(spec.weight_shape);
      if (spec.has_bias) p.bias = Tensor(spec.bias_shape());
      p.revision = next_revision();
      layer.params = std::move(p);
      weighted_.push_back(i);
    } else if (!spec.weight_shape.empty() || spec.has_bias) {
      throw ModelError(layer_label(i, spec) + ": unweighted layer declares parameters");
    }
    layers_.push_back(std::move(layer));
  }
  if (shapes_.back().size() != 1) {
    throw ModelError("model output must be a flat logit vector, got " + shape_to_string(shapes_.back()));
  }
}

std::vector<LayerSpec> ModelGraph::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

std::size_t ModelGraph::num_weights() const {
  std::size_t n = 0;
  for (std::size_t w = 0; w < num_weighted(); ++w) n += weight(w).size();
  return n;
}

const ModelGraph::Params& ModelGraph::param(std::size_t w) const {
  if (w >= weighted_.size()) {
    throw ModelError("weighted layer " + std::to_string(w) + " out of range (model has " +
                     std::to_string(weighted_.size()) + ")");
  }
  return *layers_[weighted_[w]].params;
}

ModelGraph::Params& ModelGraph::param(std::size_t w) {
  return const_cast<Params&>(std::as_const(*this).param(w));
}

void ModelGraph::touch(Params& p) { p.revision = next_revision(); }

Tensor& ModelGraph::mutable_weight(std::size_t w) {
  if (mode_ != ParamMode::Float) throw ModelError("float weights are read-only in quantized mode");
  Params& p = param(w);
  touch(p);
  return p.weight;
}

Tensor& ModelGraph::mutable_bias(std::size_t w) {
  Params& p = param(w);
  touch(p);
  return p.bias;
}

void ModelGraph::set_weight(std::size_t w, Tensor value) {
  Tensor& target = mutable_weight(w);
  if (value.shape() != target.shape()) {
    throw ShapeError("weight for weighted layer " + std::to_string(w) + " must be " +
                     shape_to_string(target.shape()) + ", got " + shape_to_string(value.shape()));
  }
  target = std::move(value);
}

void ModelGraph::set_bias(std::size_t w, Tensor value) {
  Tensor& target = mutable_bias(w);
  if (value.shape() != target.shape()) {
    throw ShapeError("bias for weighted layer " + std::to_string(w) + " must be " +
                     shape_to_string(target.shape()) + ", got " + shape_to_string(value.shape()));
  }
  target = std::move(value);
}

void ModelGraph::quantize(int n_q) {
  if (mode_ != ParamMode::Float) throw ModelError("model is already quantized");
  std::vector<QuantizedLayer> q;
  for (std::size_t w = 0; w < num_weighted(); ++w) q.push_back(quantize_layer(weight(w), n_q));
  for (std::size_t w = 0; w < num_weighted(); ++w) set_quantized(w, q[w]);
}

void ModelGraph::to_float() {
  for (std::size_t w = 0; w < num_weighted(); ++w) {
    Params& p = param(w);
    p.bits.reset();
    p.delta_w = 0.0;
    touch(p);
  }
  mode_ = ParamMode::Float;
}

int ModelGraph::n_q(std::size_t w) const { return bits(w).n_q(); }

double ModelGraph::delta_w(std::size_t w) const {
  bits(w);
  return param(w).delta_w;
}

const BitPlane& ModelGraph::bits(std::size_t w) const {
  const Params& p = param(w);
  if (!p.bits) throw ModelError("weighted layer " + std::to_string(w) + " has no quantized storage");
  return *p.bits;
}

QuantizedLayer ModelGraph::quantized_layer(std::size_t w) const {
  QuantizedLayer q;
  q.shape = weight(w).shape();
  q.codes = bits(w).codes();
  q.delta_w = delta_w(w);
  q.n_q = bits(w).n_q();
  return q;
}

void ModelGraph::set_quantized(std::size_t w, const QuantizedLayer& layer) {
  Params& p = param(w);
  if (layer.shape != p.weight.shape()) {
    throw ShapeError("quantized layer shape " + shape_to_string(layer.shape) + " does not match " +
                     shape_to_string(p.weight.shape()));
  }
  if (!(layer.delta_w > 0.0) || !std::isfinite(layer.delta_w)) {
    throw QuantizationError("step size must be positive and finite");
  }
  p.bits = BitPlane::from_codes(layer.codes, layer.n_q);
  p.delta_w = layer.delta_w;
  p.weight = dequantize(layer);
  touch(p);
  bool all = true;
  for (std::size_t v = 0; v < num_weighted(); ++v) all = all && param(v).bits.has_value();
  if (all) mode_ = ParamMode::Quantized;
}

void ModelGraph::refresh_weight(Params& p, std::size_t k) {
  p.weight[k] = static_cast<double>(p.bits->code(k)) * p.delta_w;
}

void ModelGraph::flip_bit(const BitAddress& address) {
  if (mode_ != ParamMode::Quantized) throw ModelError("bit flips require quantized mode");
  Params& p = param(address.layer);
  p.bits->flip(address.weight, address.bit);
  refresh_weight(p, address.weight);
  touch(p);
}

bool ModelGraph::bit(const BitAddress& address) const {
  return bits(address.layer).bit(address.weight, address.bit);
}

std::vector<BitPlane> ModelGraph::bit_planes() const {
  std::vector<BitPlane> out;
  for (std::size_t w = 0; w < num_weighted(); ++w) out.push_back(bits(w));
  return out;
}

std::size_t ModelGraph::total_bits() const {
  std::size_t n = 0;
  for (std::size_t w = 0; w < num_weighted(); ++w) n += bits(w).bit_count();
  return n;
}

std::uint64_t ModelGraph::bit_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t w = 0; w < num_weighted(); ++w) {
    const auto words = bits(w).storage();
    mix(words.data(), words.size_bytes());
    const double d = delta_w(w);
    mix(&d, sizeof d);
  }
  return h;
}

Tensor forward(const ModelGraph& model, const Tensor& batch) { return forward_from(model, 0, batch); }

Tensor forward_from(const ModelGraph& model, std::size_t first_layer, const Tensor& activation) {
  return forward_layers(model, first_layer, model.num_layers(), activation);
}

Tensor forward_layers(const ModelGraph& model, std::size_t first_layer, std::size_t last_layer,
                      const Tensor& activation) {
  if (first_layer > last_layer || last_layer > model.num_layers()) {
    throw ModelError("layer range [" + std::to_string(first_layer) + ", " + std::to_string(last_layer) +
                     ") invalid for a model of " + std::to_string(model.num_layers()) + " layers");
  }
  Tensor x = as_batch(model, first_layer, activation);
  std::size_t weighted = weighted_before(model, first_layer);
  for (std::size_t i = first_layer; i < last_layer; ++i) x = run_layer(model, i, weighted, x);
  return x;
}

ForwardTape forward_tape(const ModelGraph& model, const Tensor& batch) {
  ForwardTape tape;
  Tensor x = as_batch(model, 0, batch);
  std::size_t weighted = 0;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    Tensor y = run_layer(model, i, weighted, x);
    tape.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  tape.logits = std::move(x);
  return tape;
}

namespace {

void check_targets(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("logits " + shape_to_string(logits.shape()) + " do not match " +
                     std::to_string(targets.size()) + " targets");
  }
  const auto classes = static_cast<int>(logits.dim(1));
  for (int t : targets) {
    if (t < 0 || t >= classes) throw std::out_of_range("target class " + std::to_string(t) + " out of range");
  }
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  check_targets(logits, targets);
  const std::size_t N = logits.dim(0);
  const std::size_t C = logits.dim(1);
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = logits.data() + n * C;
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(z[c] - m);
    total += m + std::log(s) - z[targets[n]];
  }
  return total / static_cast<double>(N);
}

Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> targets) {
  check_targets(logits, targets);
  const std::size_t N = logits.dim(0);
  const std::size_t C = logits.dim(1);
  Tensor grad(logits.shape());
  const double scale = 1.0 / static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = logits.data() + n * C;
    double* g = grad.data() + n * C;
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      g[c] = std::exp(z[c] - m);
      s += g[c];
    }
    for (std::size_t c = 0; c < C; ++c) g[c] = g[c] / s * scale;
    g[targets[n]] -= scale;
  }
  return grad;
}

GradientMap backward_from(const ModelGraph& model, const ForwardTape& tape, const Tensor& upstream) {
  if (upstream.shape() != tape.logits.shape()) {
    throw ShapeError("upstream gradient " + shape_to_string(upstream.shape()) + " does not match logits " +
                     shape_to_string(tape.logits.shape()));
  }
  GradientMap grads;
  for (std::size_t w = 0; w < model.num_weighted(); ++w) {
    grads.weight.emplace_back(model.weight(w).shape());
    grads.bias.emplace_back(model.bias(w).shape());
  }
  Tensor dout = upstream;
  std::size_t weighted = model.num_weighted();
  for (std::size_t i = model.num_layers(); i-- > 0;) {
    const LayerSpec& spec = model.spec(i);
    const Tensor& in = tape.inputs[i];
    const bool need_input = i > 0;
    Tensor din;
    switch (spec.kind) {
      case LayerKind::Dense:
        --weighted;
        kernels::dense_backward(in, model.weight(weighted), dout, grads.weight[weighted],
                                spec.has_bias ? &grads.bias[weighted] : nullptr,
                                need_input ? &din : nullptr);
        break;
      case LayerKind::Conv2d:
        --weighted;
        kernels::conv_backward(kernels::conv_geometry(spec, model.activation_shape(i)), in,
                               model.weight(weighted), dout, grads.weight[weighted],
                               spec.has_bias ? &grads.bias[weighted] : nullptr,
                               need_input ? &din : nullptr);
        break;
      case LayerKind::Relu:
        kernels::relu_backward(in, dout, din);
        break;
      case LayerKind::MaxPool:
        kernels::max_pool_backward(kernels::pool_geometry(spec, model.activation_shape(i)), in, dout, din);
        break;
      case LayerKind::Flatten:
        din = dout.reshaped(in.shape());
        break;
    }
    if (!need_input) break;
    dout = std::move(din);
  }
  grads.finite = true;
  for (const auto& g : grads.weight) grads.finite = grads.finite && g.all_finite();
  return grads;
}

GradientMap backward(const ModelGraph& model, const Tensor& batch, std::span<const int> targets,
                     ForwardTape* tape_out) {
  ForwardTape tape = forward_tape(model, batch);
  const double loss = cross_entropy(tape.logits, targets);
  GradientMap grads = backward_from(model, tape, cross_entropy_grad(tape.logits, targets));
  grads.loss = loss;
  grads.finite = grads.finite && std::isfinite(loss);
  if (tape_out) *tape_out = std::move(tape);
  return grads;
}

}  // namespace bfa
