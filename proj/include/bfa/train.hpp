#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "bfa/dataset.hpp"
#include "bfa/model.hpp"

namespace bfa {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHyperParams {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // > 0: quantization-aware fine-tuning. Forward/backward see the n-bit
  // quantized weights; the straight-through gradient updates float shadows.
  int ste_bits = 0;
};

struct TrainResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
};

// He-normal weights, zero biases.
void initialize_weights(ModelGraph& model, std::uint64_t seed);

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Mini-batch SGD with momentum on a float-mode model. Deterministic for a
// given seed; zero epochs leaves the model untouched.
TrainResult train_victim(ModelGraph& model, const Dataset& train, const Dataset* test,
                         const TrainHyperParams& hyper, const EpochCallback& on_epoch = {});

// Two conv + two dense layers for 1x28x28 inputs, 105,544 weights (10 classes).
ModelGraph desk_cnn(std::size_t num_classes = 10);

}  // namespace bfa
