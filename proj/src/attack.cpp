#include "bfa/attack.hpp"

#include <algorithm>
#include <cmath>

namespace bfa {

void AttackConfig::validate() const {
  if (bits_per_iteration == 0) throw AttackError("bits per iteration must be at least 1");
  if (sample_size == 0) throw AttackError("sample size must be at least 1");
  if (!(stop_accuracy >= 0.0 && stop_accuracy <= 1.0)) {
    throw AttackError("stop accuracy must lie in [0, 1], got " + std::to_string(stop_accuracy));
  }
}

double default_stop_accuracy(std::size_t num_classes) {
  if (num_classes == 0) throw AttackError("class count must be positive");
  return 1.0 / static_cast<double>(num_classes) + 0.01;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Running: return "running";
    case StopReason::ReachedAccuracy: return "reached-accuracy";
    case StopReason::MaxIterations: return "max-iterations";
    case StopReason::HammingBudget: return "hamming-budget";
    case StopReason::NonFiniteLoss: return "non-finite-loss";
    case StopReason::NoEffectiveFlip: return "no-effective-flip";
    case StopReason::BudgetSpent: return "budget-spent";
  }
  return "unknown";
}

SampleState sample_state(const ModelGraph& model, const AttackSample& sample) {
  SampleState state;
  state.gradients = backward(model, sample.inputs, sample.targets, &state.tape);
  return state;
}

std::vector<BitAddress> elect_bits(const ModelGraph& model, std::size_t layer, const Tensor& weight_grad,
                                   std::size_t count) {
  const BitPlane& plane = model.bits(layer);
  if (weight_grad.size() != plane.num_weights()) {
    throw AttackError("gradient for weighted layer " + std::to_string(layer) + " has " +
                      std::to_string(weight_grad.size()) + " entries, expected " +
                      std::to_string(plane.num_weights()));
  }
  const int n_q = plane.n_q();
  const double delta = model.delta_w(layer);

  struct Candidate {
    double magnitude;
    std::size_t offset;
  };
  // Best first. Offsets are visited in increasing order, so a strict
  // comparison keeps the lower offset on equal magnitude.
  std::vector<Candidate> best;
  best.reserve(count + 1);
  for (std::size_t k = 0; k < plane.num_weights(); ++k) {
    if (weight_grad[k] == 0.0) continue;
    const BitWord word = plane.word(k);
    for (int i = n_q - 1; i >= 0; --i) {
      const double g = weight_grad[k] * delta * bit_coefficient(i, n_q);
      if (!flip_is_effective(word.bit(i), g)) continue;
      const double mag = std::abs(g);
      if (best.size() == count && !(mag > best.back().magnitude)) continue;
      auto pos = std::find_if(best.begin(), best.end(), [mag](const Candidate& c) { return mag > c.magnitude; });
      best.insert(pos, Candidate{mag, plane.flat_offset(k, i)});
      if (best.size() > count) best.pop_back();
    }
  }

  std::vector<BitAddress> out;
  out.reserve(best.size());
  for (const Candidate& c : best) {
    const std::size_t k = c.offset / static_cast<std::size_t>(n_q);
    const int i = n_q - 1 - static_cast<int>(c.offset % static_cast<std::size_t>(n_q));
    out.push_back({layer, k, i});
  }
  return out;
}

LayerCandidate in_layer_search(ModelGraph& model, std::size_t layer, const AttackSample& sample,
                               std::size_t n_b, const SampleState& state) {
  if (model.mode() != ParamMode::Quantized) throw AttackError("attack requires a quantized model");
  LayerCandidate out;
  out.bits = elect_bits(model, layer, state.gradients.weight.at(layer), n_b);
  // Too few effective bits to fill the quota: the layer cannot take part.
  if (out.bits.size() < n_b) {
    out.bits.clear();
    return out;
  }
  for (const BitAddress& a : out.bits) model.flip_bit(a);
  const std::size_t g = model.graph_index(layer);
  out.loss = cross_entropy(forward_from(model, g, state.tape.inputs[g]), sample.targets);
  for (auto it = out.bits.rbegin(); it != out.bits.rend(); ++it) model.flip_bit(*it);
  return out;
}

LayerCandidate in_layer_search(ModelGraph& model, std::size_t layer, const AttackSample& sample,
                               std::size_t n_b) {
  return in_layer_search(model, layer, sample, n_b, sample_state(model, sample));
}

std::size_t cross_layer_select(std::span<const double> candidate_losses) {
  if (candidate_losses.empty()) throw AttackError("no candidate layers");
  std::size_t best = candidate_losses.size();
  for (std::size_t l = 0; l < candidate_losses.size(); ++l) {
    const double v = candidate_losses[l];
    if (std::isnan(v) || v == kNoCandidate) continue;
    if (best == candidate_losses.size() || v > candidate_losses[best]) best = l;
  }
  if (best == candidate_losses.size()) throw NoEffectiveFlipError();
  return best;
}

FlipRecord pbs_iteration(ModelGraph& model, const AttackSample& sample, const AttackConfig& config,
                         std::size_t iteration) {
  config.validate();
  if (model.mode() != ParamMode::Quantized) throw AttackError("attack requires a quantized model");
  const std::size_t L = model.num_weighted();
  std::vector<bool> allowed(L, config.allowed_layers.empty());
  for (std::size_t l : config.allowed_layers) {
    if (l >= L) {
      throw AttackError("allowed layer " + std::to_string(l) + " out of range; model has " + std::to_string(L) +
                        " weighted layers");
    }
    allowed[l] = true;
  }

  const SampleState state = sample_state(model, sample);
  FlipRecord record;
  record.iteration = iteration;
  record.candidate_losses.assign(L, kNoCandidate);
  std::vector<std::vector<BitAddress>> elected(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (!allowed[l]) continue;
    LayerCandidate c = in_layer_search(model, l, sample, config.bits_per_iteration, state);
    record.candidate_losses[l] = c.loss;
    elected[l] = std::move(c.bits);
  }

  record.layer = cross_layer_select(record.candidate_losses);
  for (const BitAddress& a : elected[record.layer]) {
    const bool before = model.bit(a);
    model.flip_bit(a);
    record.flips.push_back({a, before, model.bit(a)});
  }
  record.loss = cross_entropy(forward(model, sample.inputs), sample.targets);
  return record;
}

std::size_t hamming_distance(std::span<const BitPlane> clean, std::span<const BitPlane> perturbed) {
  if (clean.size() != perturbed.size()) {
    throw AttackError("topology mismatch: " + std::to_string(clean.size()) + " vs " +
                      std::to_string(perturbed.size()) + " layers");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l < clean.size(); ++l) {
    if (clean[l].num_weights() != perturbed[l].num_weights() || clean[l].n_q() != perturbed[l].n_q()) {
      throw AttackError("topology mismatch at weighted layer " + std::to_string(l));
    }
    total += hamming_distance(clean[l], perturbed[l]);
  }
  return total;
}

AttackTrace run_attack(ModelGraph& model, const AttackSample& sample, const Validator& validate,
                       const AttackConfig& config) {
  config.validate();
  if (model.mode() != ParamMode::Quantized) throw AttackError("attack requires a quantized model");
  if (sample.size() == 0) throw AttackError("empty attack sample");

  AttackTrace trace;
  trace.num_classes = model.num_classes();
  trace.bits_per_iteration = config.bits_per_iteration;
  trace.seed = config.seed;
  trace.clean = validate(model);
  trace.clean_sample_loss = cross_entropy(forward(model, sample.inputs), sample.targets);
  const std::vector<BitPlane> clean_planes = model.bit_planes();

  if (trace.clean.top1 <= config.stop_accuracy) {
    trace.stop = StopReason::ReachedAccuracy;
    return trace;
  }

  std::size_t n_flip = 0;
  std::size_t hamming = 0;
  for (std::size_t k = 1; k <= config.max_iterations; ++k) {
    if (config.hamming_budget && hamming + config.bits_per_iteration > *config.hamming_budget) {
      trace.stop = StopReason::HammingBudget;
      return trace;
    }
    TraceStep step;
    try {
      step.record = pbs_iteration(model, sample, config, k);
    } catch (const NoEffectiveFlipError&) {
      trace.stop = StopReason::NoEffectiveFlip;
      return trace;
    }
    n_flip += step.record.flips.size();
    hamming = hamming_distance(clean_planes, model.bit_planes());
    step.n_flip = n_flip;
    step.hamming = hamming;
    step.validation = validate(model);
    const bool finite = std::isfinite(step.record.loss) && step.validation.finite;
    const double top1 = step.validation.top1;
    trace.steps.push_back(std::move(step));
    if (!finite) {
      trace.stop = StopReason::NonFiniteLoss;
      return trace;
    }
    if (top1 <= config.stop_accuracy) {
      trace.stop = StopReason::ReachedAccuracy;
      return trace;
    }
  }
  trace.stop = StopReason::MaxIterations;
  return trace;
}

}  // namespace bfa
