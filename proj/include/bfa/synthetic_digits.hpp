#pragma once

// Procedurally rendered 28x28 handwritten-style digits. Each class is a fixed
// stroke skeleton; every sample gets its own random affine warp, vertex
// jitter, stroke width and pixel noise. Classes are exactly balanced.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bfa/dataset.hpp"

namespace bfa {

struct DigitImages {
  std::size_t count = 0;
  std::vector<std::uint8_t> pixels;  // count * 28 * 28, row-major
  std::vector<std::uint8_t> labels;
};

DigitImages render_digits(std::size_t count, std::uint64_t seed);

// Same images, scaled to [0, 1] exactly as the IDX loader would.
Dataset synthetic_digits(std::size_t count, std::uint64_t seed);

}  // namespace bfa
