#include "bfa/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bfa/evaluation.hpp"
#include "bfa/quantizer.hpp"

namespace bfa {

void initialize_weights(ModelGraph& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t w = 0; w < model.num_weighted(); ++w) {
    Tensor& weight = model.mutable_weight(w);
    const std::size_t fan_in = weight.size() / weight.dim(0);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : weight.values()) v = normal(rng);
    model.mutable_bias(w).fill(0.0);
  }
}

namespace {

double accuracy_on(const ModelGraph& model, const Dataset& data) {
  return evaluate(model, data).top1;
}

}  // namespace

TrainResult train_victim(ModelGraph& model, const Dataset& train, const Dataset* test,
                         const TrainHyperParams& hyper, const EpochCallback& on_epoch) {
  if (model.mode() != ParamMode::Float) throw TrainingError("training requires a float-mode model");
  if (hyper.batch_size == 0) throw TrainingError("batch size must be positive");
  if (train.size() == 0) throw TrainingError("empty training set");

  TrainResult result;
  if (hyper.epochs == 0) {
    result.train_accuracy = accuracy_on(model, train);
    if (test) result.test_accuracy = accuracy_on(model, *test);
    return result;
  }

  const std::size_t L = model.num_weighted();
  std::vector<Tensor> vel_w, vel_b, shadow;
  for (std::size_t w = 0; w < L; ++w) {
    vel_w.emplace_back(model.weight(w).shape());
    vel_b.emplace_back(model.bias(w).shape());
    if (hyper.ste_bits > 0) shadow.push_back(model.weight(w));
  }

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, order.size() - begin);
      const std::span<const std::size_t> idx(order.data() + begin, count);
      const Tensor x = train.images(idx);
      const std::vector<int> y = train.labels(idx);

      if (hyper.ste_bits > 0) {
        for (std::size_t w = 0; w < L; ++w) {
          model.set_weight(w, dequantize(quantize_layer(shadow[w], hyper.ste_bits)));
        }
      }
      const GradientMap g = backward(model, x, y);
      if (!g.finite) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting at sample " + std::to_string(begin));
      }
      loss_sum += g.loss;
      ++batches;
      for (std::size_t w = 0; w < L; ++w) {
        // Straight-through: the gradient w.r.t. the quantized weight is applied
        // to the float shadow unchanged.
        const Tensor grad = hyper.ste_bits > 0 ? ste_backward(g.weight[w]) : g.weight[w];
        Tensor& target = hyper.ste_bits > 0 ? shadow[w] : model.mutable_weight(w);
        for (std::size_t i = 0; i < target.size(); ++i) {
          vel_w[w][i] = hyper.momentum * vel_w[w][i] + grad[i];
          target[i] -= hyper.learning_rate * vel_w[w][i];
        }
        Tensor& bias = model.mutable_bias(w);
        for (std::size_t i = 0; i < bias.size(); ++i) {
          vel_b[w][i] = hyper.momentum * vel_b[w][i] + g.bias[w][i];
          bias[i] -= hyper.learning_rate * vel_b[w][i];
        }
      }
    }
    result.final_loss = loss_sum / static_cast<double>(batches);
    if (on_epoch) on_epoch(epoch, result.final_loss);
  }
  if (hyper.ste_bits > 0) {
    for (std::size_t w = 0; w < L; ++w) model.set_weight(w, shadow[w]);
  }

  result.train_accuracy = accuracy_on(model, train);
  if (test) result.test_accuracy = accuracy_on(model, *test);
  return result;
}

ModelGraph desk_cnn(std::size_t num_classes) {
  return ModelGraph({1, 28, 28}, {
                                     LayerSpec::conv2d(1, 8, 5),   // 8x24x24
                                     LayerSpec::relu(),
                                     LayerSpec::max_pool(2),       // 8x12x12
                                     LayerSpec::conv2d(8, 16, 5),  // 16x8x8
                                     LayerSpec::relu(),
                                     LayerSpec::max_pool(2),       // 16x4x4
                                     LayerSpec::flatten(),
                                     LayerSpec::dense(256, 384),
                                     LayerSpec::relu(),
                                     LayerSpec::dense(384, num_classes),
                                 });
}

}  // namespace bfa
