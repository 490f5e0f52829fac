#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bfa/dataset.hpp"
#include "bfa/model.hpp"

namespace bfa {

struct ValidationMetrics {
  double top1 = 0.0;
  double top5 = 0.0;  // only meaningful with >= 10 classes
  double loss = 0.0;
  bool finite = true;
};

// Ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);
// Fraction of rows whose label is among the k largest logits.
double top_k_accuracy(const Tensor& logits, std::span<const int> labels, std::size_t k);

// Full-dataset validation with a per-layer activation cache: only the layers
// at or after the first weighted layer whose revision changed are recomputed.
class Evaluator {
 public:
  explicit Evaluator(const Dataset& data, std::size_t chunk = 500);

  ValidationMetrics evaluate(const ModelGraph& model);
  std::size_t size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }

 private:
  void reset(const ModelGraph& model);

  Tensor images_;
  std::vector<int> labels_;
  std::size_t num_classes_;
  std::size_t chunk_;

  std::vector<LayerSpec> specs_;
  // activations_[w] enters weighted layer w; revisions_[w] is the revision of
  // weighted layer w that produced activations_[w + 1] (or the logits).
  std::vector<Tensor> activations_;
  std::vector<std::uint64_t> revisions_;
  Tensor logits_;
};

// Convenience for one-off checks.
ValidationMetrics evaluate(const ModelGraph& model, const Dataset& data);

}  // namespace bfa
