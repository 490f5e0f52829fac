#pragma once

// Progressive bit search over the two's-complement weight storage of a
// quantized model.
//
// One iteration:
//   1. gradients of the sample loss w.r.t. every weight at the current
//      (already perturbed) bit state;
//   2. per weighted layer, elect the n_b bits with the largest |dL/db| among
//      bits whose flip would actually change them, flip them, record the
//      sample loss, restore;
//   3. commit the flips of the layer whose trial loss was largest.
//
// Ranking ties go to the lowest flat bit offset (MSB-first within a weight);
// loss ties go to the lowest weighted-layer index.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfa/bitcodec.hpp"
#include "bfa/evaluation.hpp"
#include "bfa/model.hpp"

namespace bfa {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every candidate layer came back empty.
class NoEffectiveFlipError : public AttackError {
 public:
  NoEffectiveFlipError() : AttackError("no effective flip available") {}
};

inline constexpr double kNoCandidate = -std::numeric_limits<double>::infinity();

// Inputs drawn from the test split with the clean model's predictions as
// targets. The only data the search ever sees.
struct AttackSample {
  Tensor inputs;
  std::vector<int> targets;
  std::vector<std::size_t> indices;  // rows of the source dataset
  std::uint64_t seed = 0;

  std::size_t size() const { return targets.size(); }
};

struct AttackConfig {
  std::size_t bits_per_iteration = 1;
  std::size_t sample_size = 128;
  std::size_t max_iterations = 100;
  // Stop once validation top-1 <= stop_accuracy.
  double stop_accuracy = 0.11;
  std::optional<std::size_t> hamming_budget;
  std::uint64_t seed = 0;
  // Weighted layers open to the search; empty means all.
  std::vector<std::size_t> allowed_layers;

  void validate() const;
};

// Default threshold: random guess plus one point.
double default_stop_accuracy(std::size_t num_classes);

struct BitChange {
  BitAddress address;
  bool before = false;
  bool after = false;

  friend bool operator==(const BitChange&, const BitChange&) = default;
};

struct FlipRecord {
  std::size_t iteration = 0;
  std::size_t layer = 0;
  std::vector<BitChange> flips;
  // Sample loss with the committed flips in place.
  double loss = std::numeric_limits<double>::quiet_NaN();
  // Trial loss per weighted layer; kNoCandidate where nothing was searched
  // or no effective flip existed.
  std::vector<double> candidate_losses;
  // Float baseline only: weight value before/after the flip.
  double value_before = std::numeric_limits<double>::quiet_NaN();
  double value_after = std::numeric_limits<double>::quiet_NaN();
};

struct TraceStep {
  FlipRecord record;
  std::size_t n_flip = 0;
  std::size_t hamming = 0;
  ValidationMetrics validation;
};

enum class StopReason {
  Running,
  ReachedAccuracy,
  MaxIterations,
  HammingBudget,
  NonFiniteLoss,
  NoEffectiveFlip,
  BudgetSpent,
};

std::string to_string(StopReason reason);

struct AttackTrace {
  std::string mode = "pbs";
  std::size_t num_classes = 0;
  std::size_t bits_per_iteration = 1;
  std::uint64_t seed = 0;
  ValidationMetrics clean;
  double clean_sample_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<TraceStep> steps;
  StopReason stop = StopReason::Running;

  std::size_t n_flip() const { return steps.empty() ? 0 : steps.back().n_flip; }
  std::size_t hamming() const { return steps.empty() ? 0 : steps.back().hamming; }
  const ValidationMetrics& final_validation() const { return steps.empty() ? clean : steps.back().validation; }
};

using Validator = std::function<ValidationMetrics(const ModelGraph&)>;

struct LayerCandidate {
  std::vector<BitAddress> bits;
  double loss = kNoCandidate;
};

// Gradients and activations of the current model on the attack sample.
struct SampleState {
  GradientMap gradients;
  ForwardTape tape;
};

SampleState sample_state(const ModelGraph& model, const AttackSample& sample);

// Bits of weighted layer `layer` ranked by |dL/db| among effective flips,
// best first, at most `count`.
std::vector<BitAddress> elect_bits(const ModelGraph& model, std::size_t layer, const Tensor& weight_grad,
                                   std::size_t count);

// Elects, trial-flips, evaluates the sample loss, and restores bit-exactly.
LayerCandidate in_layer_search(ModelGraph& model, std::size_t layer, const AttackSample& sample,
                               std::size_t n_b, const SampleState& state);
LayerCandidate in_layer_search(ModelGraph& model, std::size_t layer, const AttackSample& sample,
                               std::size_t n_b);

// argmax with ties to the lowest index; kNoCandidate and NaN never win.
// Throws NoEffectiveFlipError when nothing can win.
std::size_t cross_layer_select(std::span<const double> candidate_losses);

FlipRecord pbs_iteration(ModelGraph& model, const AttackSample& sample, const AttackConfig& config,
                         std::size_t iteration = 1);

AttackTrace run_attack(ModelGraph& model, const AttackSample& sample, const Validator& validate,
                       const AttackConfig& config);

std::size_t hamming_distance(std::span<const BitPlane> clean, std::span<const BitPlane> perturbed);

}  // namespace bfa
