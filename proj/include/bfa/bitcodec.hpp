#pragma once

// Two's-complement storage of quantized weight codes and the bit-level
// gradient-ascent flip rule.
//
// Bit numbering: bit i carries significance i, so b_0 is the least
// significant bit and b_{n_q-1} is the sign bit with weight -2^(n_q-1).
// Every externally visible ordering (strings, gradient vectors, sign vectors,
// flat offsets inside a BitPlane) is most-significant-bit first.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bfa {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 16;

constexpr std::int32_t code_min(int n_q) { return -(std::int32_t{1} << (n_q - 1)); }
constexpr std::int32_t code_max(int n_q) { return (std::int32_t{1} << (n_q - 1)) - 1; }

void check_bit_width(int n_q);

class CodecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An n_q-bit two's-complement word.
class BitWord {
 public:
  BitWord() = default;
  BitWord(std::uint32_t raw, int n_q);

  // "1001" -> b_3=1, b_2=0, b_1=0, b_0=1.
  static BitWord parse(std::string_view msb_first);

  int width() const { return n_q_; }
  std::uint32_t raw() const { return raw_; }
  bool bit(int i) const { return (raw_ >> i) & 1U; }
  int popcount() const;
  std::string to_string() const;

  friend BitWord operator^(BitWord a, BitWord b);
  friend bool operator==(const BitWord&, const BitWord&) = default;

 private:
  std::uint32_t raw_ = 0;
  int n_q_ = 0;
};

BitWord encode(std::int32_t code, int n_q);
std::int32_t decode(BitWord bits);

// Weight of bit i in the two's-complement sum: -2^(n_q-1) for the sign bit,
// 2^i otherwise.
double bit_coefficient(int i, int n_q);

// dL/db_i = dL/dw * delta_w * c_i, returned most-significant bit first.
std::vector<double> bit_gradients(double weight_grad, double delta_w, int n_q);

// sign(0) is taken as +1 so the flip rule is total.
constexpr int gradient_sign(double grad) { return grad >= 0.0 ? 1 : -1; }

// Whether the flip rule would change a bit holding `bit` under gradient `grad`.
constexpr bool flip_is_effective(bool bit, double grad) {
  return bit != (gradient_sign(grad) > 0);
}

// Bits set where a flip happens; equals old XOR new.
struct FlipMask {
  BitWord bits;
  int count() const { return bits.popcount(); }
  friend bool operator==(const FlipMask&, const FlipMask&) = default;
};

struct FlipResult {
  BitWord bits;
  FlipMask mask;
};

// m = b XOR (sign/2 + 1/2), b' = b XOR m. `signs` is most-significant first,
// each entry -1 or +1.
FlipResult bfa_flip(BitWord bits, std::span<const int> signs);

// (weighted layer, flat weight offset, bit significance).
struct BitAddress {
  std::size_t layer = 0;
  std::size_t weight = 0;
  int bit = 0;

  auto operator<=>(const BitAddress&) const = default;
};

// "layer:weight:bit"
std::string to_string(const BitAddress& address);

// Packed two's-complement codes for one layer. The bit for (weight k,
// significance i) lives at flat offset k*n_q + (n_q-1-i); flat offset f is
// bit (f % 64) of word f / 64.
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(std::size_t num_weights, int n_q);

  static BitPlane from_codes(std::span<const std::int32_t> codes, int n_q);

  std::size_t num_weights() const { return num_weights_; }
  int n_q() const { return n_q_; }
  std::size_t bit_count() const { return num_weights_ * static_cast<std::size_t>(n_q_); }

  std::size_t flat_offset(std::size_t weight, int bit) const {
    return weight * static_cast<std::size_t>(n_q_) + static_cast<std::size_t>(n_q_ - 1 - bit);
  }

  bool bit(std::size_t weight, int bit) const;
  void set_bit(std::size_t weight, int bit, bool value);
  void flip(std::size_t weight, int bit);

  BitWord word(std::size_t weight) const;
  void set_word(std::size_t weight, BitWord bits);
  std::int32_t code(std::size_t weight) const { return decode(word(weight)); }
  void set_code(std::size_t weight, std::int32_t code) { set_word(weight, encode(code, n_q_)); }
  std::vector<std::int32_t> codes() const;

  std::span<const std::uint64_t> storage() const { return words_; }

  friend bool operator==(const BitPlane&, const BitPlane&) = default;

 private:
  void check_index(std::size_t weight, int bit) const;

  std::size_t num_weights_ = 0;
  int n_q_ = 0;
  std::vector<std::uint64_t> words_;
};

// Popcount of the XOR of two planes with identical geometry.
std::size_t hamming_distance(const BitPlane& a, const BitPlane& b);

}  // namespace bfa
