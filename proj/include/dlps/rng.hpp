#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace dlps {

// Counter-style deterministic RNG. Streams are derived by hashing a key
// path into a 64-bit state, so per-position substreams are independent of
// execution order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();

    // Uniform in (0, 1]; safe under log().
    double uniform_open();

    // Standard normal via Box-Muller (two uniforms per draw, no cache).
    double gaussian();

    // Index in [0, n).
    std::size_t uniform_index(std::size_t n);

    // Draw from softmax(logits / tau) by inverse CDF.
    std::size_t categorical_from_logits(std::span<const double> logits, double tau = 1.0);

    // Draw from an explicit probability vector.
    std::size_t categorical(std::span<const double> probs);

  private:
    std::uint64_t state_;
};

// Mixes an id into a stream key (splitmix-style avalanche).
std::uint64_t derive_key(std::uint64_t key, std::uint64_t id);

// Rng for the substream identified by (seed, path...).
Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

}  // namespace dlps
