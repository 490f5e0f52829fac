#include "bfa/bitcodec.hpp"

#include <bit>

namespace bfa {

void check_bit_width(int n_q) {
  if (n_q < kMinBits || n_q > kMaxBits) {
    throw CodecError("bit width " + std::to_string(n_q) + " outside [" +
                     std::to_string(kMinBits) + ", " + std::to_string(kMaxBits) + "]");
  }
}

BitWord::BitWord(std::uint32_t raw, int n_q) : n_q_(n_q) {
  check_bit_width(n_q);
  raw_ = raw & ((std::uint32_t{1} << n_q) - 1U);
}

BitWord BitWord::parse(std::string_view msb_first) {
  std::uint32_t raw = 0;
  for (char c : msb_first) {
    if (c != '0' && c != '1') throw CodecError("bit string may only contain 0 and 1");
    raw = (raw << 1) | static_cast<std::uint32_t>(c - '0');
  }
  return BitWord(raw, static_cast<int>(msb_first.size()));
}

int BitWord::popcount() const { return std::popcount(raw_); }

std::string BitWord::to_string() const {
  std::string out(static_cast<std::size_t>(n_q_), '0');
  for (int i = 0; i < n_q_; ++i) {
    if (bit(i)) out[static_cast<std::size_t>(n_q_ - 1 - i)] = '1';
  }
  return out;
}

BitWord operator^(BitWord a, BitWord b) {
  if (a.n_q_ != b.n_q_) throw CodecError("xor of words with different widths");
  return BitWord(a.raw_ ^ b.raw_, a.n_q_);
}

BitWord encode(std::int32_t code, int n_q) {
  check_bit_width(n_q);
  if (code < code_min(n_q) || code > code_max(n_q)) {
    throw CodecError("code " + std::to_string(code) + " not representable in " +
                     std::to_string(n_q) + "-bit two's complement");
  }
  return BitWord(static_cast<std::uint32_t>(code), n_q);
}

std::int32_t decode(BitWord bits) {
  const int n_q = bits.width();
  std::int32_t value = bits.bit(n_q - 1) ? code_min(n_q) : 0;
  for (int i = 0; i < n_q - 1; ++i) {
    if (bits.bit(i)) value += std::int32_t{1} << i;
  }
  return value;
}

double bit_coefficient(int i, int n_q) {
  const double magnitude = static_cast<double>(std::int64_t{1} << i);
  return i == n_q - 1 ? -magnitude : magnitude;
}

std::vector<double> bit_gradients(double weight_grad, double delta_w, int n_q) {
  check_bit_width(n_q);
  std::vector<double> out(static_cast<std::size_t>(n_q));
  const double scaled = weight_grad * delta_w;
  for (int i = 0; i < n_q; ++i) {
    out[static_cast<std::size_t>(n_q - 1 - i)] = scaled * bit_coefficient(i, n_q);
  }
  return out;
}

FlipResult bfa_flip(BitWord bits, std::span<const int> signs) {
  const int n_q = bits.width();
  if (signs.size() != static_cast<std::size_t>(n_q)) {
    throw CodecError("expected " + std::to_string(n_q) + " gradient signs, got " +
                     std::to_string(signs.size()));
  }
  std::uint32_t ascent = 0;
  for (int i = 0; i < n_q; ++i) {
    const int s = signs[static_cast<std::size_t>(n_q - 1 - i)];
    if (s != 1 && s != -1) throw CodecError("gradient sign must be -1 or +1");
    // sign/2 + 0.5 maps +1 -> 1 and -1 -> 0
    if (s > 0) ascent |= std::uint32_t{1} << i;
  }
  const BitWord mask = bits ^ BitWord(ascent, n_q);
  return {bits ^ mask, FlipMask{mask}};
}

std::string to_string(const BitAddress& address) {
  return std::to_string(address.layer) + ":" + std::to_string(address.weight) + ":" +
         std::to_string(address.bit);
}

BitPlane::BitPlane(std::size_t num_weights, int n_q) : num_weights_(num_weights), n_q_(n_q) {
  check_bit_width(n_q);
  words_.assign((bit_count() + 63) / 64, 0);
}

BitPlane BitPlane::from_codes(std::span<const std::int32_t> codes, int n_q) {
  BitPlane plane(codes.size(), n_q);
  for (std::size_t k = 0; k < codes.size(); ++k) plane.set_code(k, codes[k]);
  return plane;
}

void BitPlane::check_index(std::size_t weight, int bit) const {
  if (weight >= num_weights_ || bit < 0 || bit >= n_q_) {
    throw CodecError("bit (" + std::to_string(weight) + ", " + std::to_string(bit) +
                     ") outside plane of " + std::to_string(num_weights_) + " x " +
                     std::to_string(n_q_));
  }
}

bool BitPlane::bit(std::size_t weight, int bit) const {
  check_index(weight, bit);
  const std::size_t f = flat_offset(weight, bit);
  return (words_[f >> 6] >> (f & 63)) & 1U;
}

void BitPlane::set_bit(std::size_t weight, int bit, bool value) {
  check_index(weight, bit);
  const std::size_t f = flat_offset(weight, bit);
  const std::uint64_t m = std::uint64_t{1} << (f & 63);
  words_[f >> 6] = value ? (words_[f >> 6] | m) : (words_[f >> 6] & ~m);
}

void BitPlane::flip(std::size_t weight, int bit) {
  check_index(weight, bit);
  const std::size_t f = flat_offset(weight, bit);
  words_[f >> 6] ^= std::uint64_t{1} << (f & 63);
}

BitWord BitPlane::word(std::size_t weight) const {
  check_index(weight, 0);
  std::uint32_t raw = 0;
  for (int i = 0; i < n_q_; ++i) {
    const std::size_t f = flat_offset(weight, i);
    raw |= static_cast<std::uint32_t>((words_[f >> 6] >> (f & 63)) & 1U) << i;
  }
  return BitWord(raw, n_q_);
}

void BitPlane::set_word(std::size_t weight, BitWord bits) {
  if (bits.width() != n_q_) throw CodecError("word width does not match plane");
  for (int i = 0; i < n_q_; ++i) set_bit(weight, i, bits.bit(i));
}

std::vector<std::int32_t> BitPlane::codes() const {
  std::vector<std::int32_t> out(num_weights_);
  for (std::size_t k = 0; k < num_weights_; ++k) out[k] = code(k);
  return out;
}

std::size_t hamming_distance(const BitPlane& a, const BitPlane& b) {
  if (a.num_weights() != b.num_weights() || a.n_q() != b.n_q()) {
    throw CodecError("hamming distance between planes of different geometry");
  }
  std::size_t d = 0;
  const auto wa = a.storage();
  const auto wb = b.storage();
  for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return d;
}

}  // namespace bfa
