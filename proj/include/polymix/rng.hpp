#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace polymix {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: output depends
/// only on (counter, key).
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// SplitMix64 finalizer; used only to derive purpose-specific master seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derive an independent master seed for a named sub-experiment
/// (e.g. "burnin", "tail") and an index within it.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                    std::uint64_t index = 0) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the tag
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return mix64(mix64(master ^ h) + index);
}

/// Counter-based random stream: key = master seed, counter = (stream id, draw
/// index). Identical (master_seed, stream_id) replays bit-for-bit on any thread.
///
/// Satisfies UniformRandomBitGenerator so <random> distributions can draw from it.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : master_seed_(master_seed), stream_id_(stream_id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(master_seed_),
                                           static_cast<std::uint32_t>(master_seed_ >> 32)};
    const auto out = philox4x32_10(ctr, key);
    ++block_;
    spare_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    cached_ = true;
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  }

  /// Uniform on the open interval (0, 1); both endpoints are unreachable.
  double uniform_open() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Exponential with the given mean.
  double exponential_mean(double mean) { return -std::log(uniform_open()) * mean; }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t blocks_used() const { return block_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::uint64_t spare_ = 0;
  bool cached_ = false;
};

}  // namespace polymix
