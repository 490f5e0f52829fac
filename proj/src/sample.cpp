#include "bfa/sample.hpp"

#include <numeric>
#include <random>
#include <string>
#include <utility>

namespace bfa {

AttackSample draw_attack_sample(const Dataset& test, std::size_t size, const ModelGraph& clean_model,
                                std::uint64_t seed) {
  if (size == 0) throw AttackError("attack sample size must be at least 1");
  if (size > test.size()) {
    throw AttackError("attack sample size " + std::to_string(size) + " exceeds the " + std::to_string(test.size()) +
                      " available test images");
  }
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(size);

  AttackSample sample;
  sample.seed = seed;
  sample.inputs = test.images(order);
  sample.targets = argmax_rows(forward(clean_model, sample.inputs));
  sample.indices = std::move(order);
  return sample;
}

}  // namespace bfa
