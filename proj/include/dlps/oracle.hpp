#pragma once

#include <cstddef>
#include <vector>

#include "dlps/matrix.hpp"
#include "dlps/operators.hpp"
#include "dlps/potential.hpp"
#include "dlps/prior.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {
namespace oracle {

// Explicit distribution over all K^L token sequences. State ids use the
// mixed-radix encoding id = sum_l z[l] * K^l (position 0 least significant).
struct ExactDistribution {
    std::vector<double> probs;
    int k = 0;
    int l = 0;
};

// Throws past 2^22 states.
std::size_t state_count(int k, int l);
std::size_t encode_state(const TokenSequence & z, int k);
TokenSequence decode_state(std::size_t id, int k, int l);

// p(z0 | zt, y) by direct summation. The data-fit and prior terms are
// recomputed here from the measurement definition and the denoiser output
// so the sampler's proposal machinery never enters.
ExactDistribution enumerate_posterior(const TokenSequence & zt, double t,
                                      const Denoiser & denoiser, PriorMode mode,
                                      const ForwardOp & op, const Measurement & y,
                                      const VocabSpec & vocab, double beta,
                                      double lambda1, double lambda2);

enum class Geometry { kIndex, kOneHot, kEmbedding };

// Normalized exp(-||vec(z') - vec(z0) - eta * g||^2 / (4 eta)) over all
// states, in the chosen coordinate system. For index geometry `grad` is
// L x 1; one-hot L x K; embedding L x d with a required codebook.
ExactDistribution exact_langevin_kernel(const TokenSequence & z0, const Matrix & grad,
                                        double eta, Geometry geometry, int k,
                                        const Codebook * codebook = nullptr);

double tv_distance(const ExactDistribution & p, const ExactDistribution & q);

ExactDistribution empirical_distribution(const std::vector<TokenSequence> & samples,
                                         int k, int l);

// Log posterior weights over an explicit candidate list (finite-support
// priors); unnormalized.
std::vector<double> support_log_posterior(const std::vector<TokenSequence> & candidates,
                                          const std::vector<double> & prior_weights,
                                          const ForwardOp & op, const Measurement & y,
                                          const VocabSpec & vocab, double beta,
                                          double lambda1, double lambda2);

}  // namespace oracle
}  // namespace dlps
