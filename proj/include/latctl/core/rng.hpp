// latctl — seeded random number generator with a platform-independent stream.
// SPDX-License-Identifier: MIT
//
// The integer stream is xoshiro256++ seeded through SplitMix64, both defined
// purely over uint64 arithmetic, so identical seeds give identical streams on
// every platform. Uniform doubles use the exact 53-bit scaling; normals use
// Box–Muller on those uniforms. std::mt19937 and std::normal_distribution are
// avoided deliberately: the standard leaves distribution output
// implementation-defined, which would break the reproducibility contract.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <cmath>

namespace latctl {

class SeededRng {
 public:
  static constexpr const char* kAlgorithm = "splitmix64/xoshiro256++/box-muller";

  explicit SeededRng(std::uint64_t seed) : seed_(seed) {
    // Expand the seed into the four xoshiro words through SplitMix64 so that
    // nearby seeds still produce unrelated streams.
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  // xoshiro256++ core step.
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1): top 53 bits scaled exactly, so the mapping is bit-exact.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by the widening-multiply reduction (no modulo bias
  // worth caring about at these ranges, and fully deterministic).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box–Muller; generates pairs and caches the second one.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // Offset keeps u1 strictly inside (0, 1) so the log never sees zero.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  // Derive an independent child stream; used to give epochs/splits their own
  // streams that do not depend on how much the parent has been consumed.
  SeededRng split(std::uint64_t stream_id) const {
    std::uint64_t sm = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1));
    const std::uint64_t child = splitmix64(sm);
    return SeededRng(child);
  }

  // Fisher–Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace latctl
