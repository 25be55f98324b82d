#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dac {

// Splittable deterministic random stream.  Draws are hand-rolled on top of
// mt19937_64 so that the produced sequences do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);

  // standard normal via non-caching Box-Muller (consumes two uniforms)
  double normal();
  double normal(double mean, double variance);

  // index drawn proportionally to weights; weights need not be normalized
  std::size_t categorical(std::span<const double> weights);

  std::size_t uniform_index(std::size_t n);

  // independent stream derived from this stream's seed and the given keys;
  // does not depend on how much of this stream has been consumed
  Rng substream(std::uint64_t a, std::uint64_t b = 0) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace dac
