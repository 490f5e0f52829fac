#pragma once

// Binary model checkpoint. All integers little-endian.
//
//   magic      8 bytes  "BFACKPT\0"
//   version    u32      1
//   mode       u8       0 float, 1 quantized
//   input      u32 rank, then rank x u64 dims
//   layers     u32 count, then per graph layer:
//                u8 kind, u8 has_bias, u32 stride, u32 padding, u32 window,
//                u32 weight rank, rank x u64 dims
//                weighted layers only:
//                  float mode:     weight count x f64
//                  quantized mode: u8 n_q, f64 delta_w, then one signed code
//                                  per weight in the smallest container
//                                  holding n_q bits (int8 for n_q <= 8, else
//                                  int16), sign-extended
//                  bias count x f64 (when has_bias)
//   digest     u64      FNV-1a 64 over every preceding byte
//
// Code k of weighted layer l sits at a fixed byte offset, and bit i of that
// code is bit i of the container, so any BitAddress maps to one stored bit.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfa/model.hpp"

namespace bfa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model);
ModelGraph deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace bfa
