#include "dlps/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dlps {

namespace {

std::uint64_t splitmix_step(std::uint64_t & state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    return splitmix_step(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    return 1.0 - uniform();
}

double Rng::gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::size_t Rng::categorical_from_logits(std::span<const double> logits, double tau) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : logits) {
        hi = (x / tau > hi) ? x / tau : hi;
    }
    double total = 0.0;
    std::vector<double> w(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp(logits[i] / tau - hi);
        total += w[i];
    }
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) {
            return i;
        }
    }
    return w.size() - 1;
}

std::size_t Rng::categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
            return i;
        }
    }
    return probs.size() - 1;
}

std::uint64_t derive_key(std::uint64_t key, std::uint64_t id) {
    std::uint64_t s = key ^ (id + 0x9E3779B97F4A7C15ull + (key << 6) + (key >> 2));
    return splitmix_step(s);
}

Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t key = seed;
    for (std::uint64_t id : path) {
        key = derive_key(key, id);
    }
    return Rng(key);
}

}  // namespace dlps
