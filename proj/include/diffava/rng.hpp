#pragma once

#include <array>
#include <cstdint>

namespace diffava {

// xoshiro256** seeded through splitmix64.
//
//   splitmix64:  x += 0x9E3779B97F4A7C15
//                z = x; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9
//                t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
//                s2 ^= t; s3 = rotl(s3, 45)
//
// uniform() takes the top 53 bits of a draw. normal() is Box-Muller over two
// uniforms and caches the second variate. The integer stream is identical on
// every platform; normals additionally depend on the platform's log/cos/sin.
//
// One Rng per thread. Use fork() to derive independent child streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n), rejection-sampled so the result is unbiased.
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Child stream keyed by (seed, stream_id). Does not advance this stream.
  Rng fork(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace diffava
