#pragma once

#include <cstddef>
#include <cstdint>

#include "bfa/attack.hpp"
#include "bfa/dataset.hpp"
#include "bfa/model.hpp"

namespace bfa {

// Uniform draw of `size` rows without replacement (partial Fisher-Yates on
// mt19937_64). Targets are the clean model's argmax, computed once.
AttackSample draw_attack_sample(const Dataset& test, std::size_t size, const ModelGraph& clean_model,
                                std::uint64_t seed);

}  // namespace bfa
