#pragma once

// Control experiments: random flips on quantized storage, a single exponent
// (or sign) bit flip on a float32 view of one weight, and PBS confined to a
// subset of layers.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bfa/attack.hpp"

namespace bfa {

enum class BaselineMode { RandomQuantized, FloatExponent, LayerRestricted };

std::string to_string(BaselineMode mode);
BaselineMode parse_baseline_mode(const std::string& text);

struct BaselineConfig {
  BaselineMode mode = BaselineMode::RandomQuantized;
  std::size_t budget = 100;
  std::vector<std::size_t> allowed_layers;
  std::uint64_t seed = 0;
  std::size_t trials = 5;
  // Float baseline: bit of the binary32 word; 30 is the top exponent bit.
  int target_bit = 30;

  void validate() const;
};

// `budget` distinct (layer, weight, bit) positions drawn uniformly over the
// whole model, flipped one at a time with validation after each.
AttackTrace random_quantized_flips(ModelGraph& model, std::size_t budget, std::uint64_t seed,
                                   const Validator& validate);

inline constexpr int kTopExponentBit = 30;
inline constexpr int kSignBit = 31;

// Rounds one random nonzero weight whose binary32 bit `target_bit` is 0 to
// float, sets that bit, and writes the result back. Float-mode models only.
AttackTrace float_exponent_flip(ModelGraph& model, std::uint64_t seed, const Validator& validate,
                                int target_bit = kTopExponentBit);

// The float value obtained by setting bit `bit` of v's binary32 encoding.
float set_float_bit(float v, int bit);

// PBS limited to `allowed_layers` for a fixed number of flips (no accuracy
// stop). Throws NoEffectiveFlipError if not a single flip could be made.
AttackTrace layer_restricted_attack(ModelGraph& model, const std::vector<std::size_t>& allowed_layers,
                                    std::size_t budget, const AttackSample& sample, const Validator& validate,
                                    std::size_t bits_per_iteration = 1, std::uint64_t seed = 0);

}  // namespace bfa
