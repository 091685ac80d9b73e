#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace iclmpc {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Derives a child seed from a master seed and up to two stream keys.
/// Used to give warm-start, per-iteration and per-trial streams independent,
/// platform-stable states.
inline uint64_t derive_seed(uint64_t master, uint64_t key_a, uint64_t key_b = 0) {
  uint64_t s = master;
  uint64_t m = detail::splitmix64(s);
  s = m ^ (key_a * 0xd1342543de82ef95ULL + 1);
  m = detail::splitmix64(s);
  s = m ^ (key_b * 0xaf251af3b0f025b5ULL + 1);
  return detail::splitmix64(s);
}

/// xoshiro256** stream seeded through splitmix64. Self-contained so that
/// identical seeds produce bitwise-identical draws on every platform;
/// std::uniform_real_distribution makes no such promise.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Componentwise-uniform vector on the box [lo, hi].
  Eigen::VectorXd uniform_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    Eigen::VectorXd out(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) out[i] = uniform(lo[i], hi[i]);
    return out;
  }

 private:
  static constexpr uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  uint64_t state_[4];
};

}  // namespace iclmpc
