#include "bfa/baselines.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <unordered_set>

namespace bfa {

std::string to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::RandomQuantized: return "random";
    case BaselineMode::FloatExponent: return "float-exponent";
    case BaselineMode::LayerRestricted: return "layer-restricted";
  }
  return "unknown";
}

BaselineMode parse_baseline_mode(const std::string& text) {
  if (text == "random" || text == "random-quantized") return BaselineMode::RandomQuantized;
  if (text == "float-exponent" || text == "exponent") return BaselineMode::FloatExponent;
  if (text == "layer-restricted" || text == "layer") return BaselineMode::LayerRestricted;
  throw AttackError("unknown baseline mode '" + text + "' (expected random, float-exponent or layer-restricted)");
}

void BaselineConfig::validate() const {
  if (budget == 0) throw AttackError("baseline budget must be at least 1");
  if (trials == 0) throw AttackError("trial count must be at least 1");
  if (mode == BaselineMode::LayerRestricted && allowed_layers.empty()) {
    throw AttackError("layer-restricted mode needs at least one allowed layer");
  }
  if (target_bit < 0 || target_bit > 31) throw AttackError("float bit must lie in [0, 31]");
}

AttackTrace random_quantized_flips(ModelGraph& model, std::size_t budget, std::uint64_t seed,
                                   const Validator& validate) {
  if (model.mode() != ParamMode::Quantized) throw AttackError("random flips require a quantized model");
  const std::size_t total = model.total_bits();
  if (budget > total) {
    throw AttackError("flip budget " + std::to_string(budget) + " exceeds the model's " + std::to_string(total) +
                      " bits");
  }

  AttackTrace trace;
  trace.mode = "random";
  trace.num_classes = model.num_classes();
  trace.seed = seed;
  trace.clean = validate(model);
  const std::vector<BitPlane> clean_planes = model.bit_planes();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::unordered_set<std::size_t> used;
  for (std::size_t t = 1; t <= budget; ++t) {
    std::size_t flat = pick(rng);
    while (!used.insert(flat).second) flat = pick(rng);

    std::size_t layer = 0;
    while (flat >= model.bits(layer).bit_count()) flat -= model.bits(layer).bit_count(), ++layer;
    const int n_q = model.n_q(layer);
    const BitAddress a{layer, flat / static_cast<std::size_t>(n_q),
                       n_q - 1 - static_cast<int>(flat % static_cast<std::size_t>(n_q))};

    TraceStep step;
    step.record.iteration = t;
    step.record.layer = layer;
    const bool before = model.bit(a);
    model.flip_bit(a);
    step.record.flips.push_back({a, before, model.bit(a)});
    step.n_flip = t;
    step.hamming = hamming_distance(clean_planes, model.bit_planes());
    step.validation = validate(model);
    trace.steps.push_back(std::move(step));
  }
  trace.stop = StopReason::BudgetSpent;
  return trace;
}

float set_float_bit(float v, int bit) {
  return std::bit_cast<float>(std::bit_cast<std::uint32_t>(v) | (std::uint32_t{1} << bit));
}

AttackTrace float_exponent_flip(ModelGraph& model, std::uint64_t seed, const Validator& validate, int target_bit) {
  if (model.mode() != ParamMode::Float) throw AttackError("the float baseline requires a float-mode model");
  if (target_bit < 0 || target_bit > 31) throw AttackError("float bit must lie in [0, 31]");
  const std::uint32_t mask = std::uint32_t{1} << target_bit;

  struct Slot {
    std::size_t layer, index;
  };
  std::vector<Slot> eligible;
  for (std::size_t w = 0; w < model.num_weighted(); ++w) {
    const Tensor& weight = model.weight(w);
    for (std::size_t k = 0; k < weight.size(); ++k) {
      const float f = static_cast<float>(weight[k]);
      if (f != 0.0f && (std::bit_cast<std::uint32_t>(f) & mask) == 0) eligible.push_back({w, k});
    }
  }
  if (eligible.empty()) throw AttackError("no nonzero weight has bit " + std::to_string(target_bit) + " clear");

  AttackTrace trace;
  trace.mode = target_bit == kSignBit ? "float-sign" : "float-exponent";
  trace.num_classes = model.num_classes();
  trace.seed = seed;
  trace.clean = validate(model);

  std::mt19937_64 rng(seed);
  const Slot s = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  const float before = static_cast<float>(model.weight(s.layer)[s.index]);
  const float after = set_float_bit(before, target_bit);
  model.mutable_weight(s.layer)[s.index] = static_cast<double>(after);

  TraceStep step;
  step.record.iteration = 1;
  step.record.layer = s.layer;
  step.record.flips.push_back({BitAddress{s.layer, s.index, target_bit}, false, true});
  step.record.value_before = before;
  step.record.value_after = after;
  step.n_flip = 1;
  step.hamming = 1;
  step.validation = validate(model);
  const bool finite = step.validation.finite;
  trace.steps.push_back(std::move(step));
  trace.stop = finite ? StopReason::BudgetSpent : StopReason::NonFiniteLoss;
  return trace;
}

AttackTrace layer_restricted_attack(ModelGraph& model, const std::vector<std::size_t>& allowed_layers,
                                    std::size_t budget, const AttackSample& sample, const Validator& validate,
                                    std::size_t bits_per_iteration, std::uint64_t seed) {
  if (allowed_layers.empty()) throw AttackError("layer-restricted attack needs at least one allowed layer");
  if (budget == 0) throw AttackError("flip budget must be at least 1");
  AttackConfig config;
  config.bits_per_iteration = bits_per_iteration;
  config.sample_size = sample.size();
  config.max_iterations = budget / bits_per_iteration;
  config.stop_accuracy = 0.0;
  config.seed = seed;
  config.allowed_layers = allowed_layers;
  AttackTrace trace = run_attack(model, sample, validate, config);
  trace.mode = "layer-restricted";
  if (trace.stop == StopReason::NoEffectiveFlip && trace.steps.empty()) throw NoEffectiveFlipError();
  return trace;
}

}  // namespace bfa
