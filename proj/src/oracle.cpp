#include "dlps/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlps {
namespace oracle {

namespace {

constexpr std::size_t kStateGuard = std::size_t{ 1 } << 22;

}  // namespace

std::size_t state_count(int k, int l) {
    if (k < 2 || l < 1) {
        throw std::invalid_argument("oracle: need K >= 2 and L >= 1");
    }
    std::size_t n = 1;
    for (int i = 0; i < l; ++i) {
        if (n > kStateGuard / static_cast<std::size_t>(k)) {
            throw std::length_error("oracle: state space exceeds the enumeration guard");
        }
        n *= static_cast<std::size_t>(k);
    }
    if (n > kStateGuard) {
        throw std::length_error("oracle: state space exceeds the enumeration guard");
    }
    return n;
}

std::size_t encode_state(const TokenSequence & z, int k) {
    std::size_t id = 0;
    std::size_t base = 1;
    for (int tok : z) {
        id += static_cast<std::size_t>(tok) * base;
        base *= static_cast<std::size_t>(k);
    }
    return id;
}

TokenSequence decode_state(std::size_t id, int k, int l) {
    TokenSequence z(static_cast<std::size_t>(l));
    for (int pos = 0; pos < l; ++pos) {
        z[static_cast<std::size_t>(pos)] = static_cast<int>(id % static_cast<std::size_t>(k));
        id /= static_cast<std::size_t>(k);
    }
    return z;
}

ExactDistribution enumerate_posterior(const TokenSequence & zt, double t,
                                      const Denoiser & denoiser, PriorMode mode,
                                      const ForwardOp & op, const Measurement & y,
                                      const VocabSpec & vocab, double beta,
                                      double lambda1, double lambda2) {
    const int k = vocab.k;
    const int l = static_cast<int>(zt.size());
    const std::size_t n = state_count(k, l);
    if (mode == PriorMode::kExact && !denoiser.has_exact_joint()) {
        mode = PriorMode::kFactorized;
    }
    Matrix log_probs;
    if (mode == PriorMode::kFactorized) {
        log_probs = denoiser.denoise(zt, t).log_probs();
    }
    std::vector<double> logw(n);
    for (std::size_t id = 0; id < n; ++id) {
        const TokenSequence z0 = decode_state(id, k, l);
        const std::vector<double> x = decode(z0, vocab);
        const std::vector<double> out = op.apply(x);
        double l1 = 0.0;
        double l2 = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = out[i] - y.values[i];
            l1 += std::fabs(r);
            l2 += r * r;
        }
        double prior = 0.0;
        if (mode == PriorMode::kExact) {
            prior = denoiser.exact_joint_log_prob(z0, zt, t);
        } else {
            for (std::size_t pos = 0; pos < z0.size(); ++pos) {
                prior += log_probs(pos, static_cast<std::size_t>(z0[pos]));
            }
        }
        logw[id] = -beta * (lambda1 * l1 + lambda2 * l2) + prior;
    }
    const double lse = log_sum_exp(logw);
    ExactDistribution d;
    d.k = k;
    d.l = l;
    d.probs.resize(n);
    for (std::size_t id = 0; id < n; ++id) {
        d.probs[id] = std::exp(logw[id] - lse);
    }
    return d;
}

ExactDistribution exact_langevin_kernel(const TokenSequence & z0, const Matrix & grad,
                                        double eta, Geometry geometry, int k,
                                        const Codebook * codebook) {
    const int l = static_cast<int>(z0.size());
    const std::size_t n = state_count(k, l);
    if (geometry == Geometry::kEmbedding && codebook == nullptr) {
        throw std::invalid_argument("exact_langevin_kernel: embedding geometry needs a codebook");
    }
    std::vector<double> logw(n);
    for (std::size_t id = 0; id < n; ++id) {
        const TokenSequence cand = decode_state(id, k, l);
        double sq = 0.0;
        for (int pos = 0; pos < l; ++pos) {
            const std::size_t p = static_cast<std::size_t>(pos);
            switch (geometry) {
                case Geometry::kIndex: {
                    const double d = static_cast<double>(cand[p] - z0[p]) - eta * grad(p, 0);
                    sq += d * d;
                    break;
                }
                case Geometry::kOneHot: {
                    for (std::size_t tok = 0; tok < static_cast<std::size_t>(k); ++tok) {
                        const double w_new = tok == static_cast<std::size_t>(cand[p]) ? 1.0 : 0.0;
                        const double w_old = tok == static_cast<std::size_t>(z0[p]) ? 1.0 : 0.0;
                        const double d = w_new - w_old - eta * grad(p, tok);
                        sq += d * d;
                    }
                    break;
                }
                case Geometry::kEmbedding: {
                    const auto c_new = codebook->entry(cand[p]);
                    const auto c_old = codebook->entry(z0[p]);
                    for (std::size_t e = 0; e < c_new.size(); ++e) {
                        const double d = c_new[e] - c_old[e] - eta * grad(p, e);
                        sq += d * d;
                    }
                    break;
                }
            }
        }
        logw[id] = -sq / (4.0 * eta);
    }
    const double lse = log_sum_exp(logw);
    ExactDistribution d;
    d.k = k;
    d.l = l;
    d.probs.resize(n);
    for (std::size_t id = 0; id < n; ++id) {
        d.probs[id] = std::exp(logw[id] - lse);
    }
    return d;
}

double tv_distance(const ExactDistribution & p, const ExactDistribution & q) {
    if (p.k != q.k || p.l != q.l || p.probs.size() != q.probs.size()) {
        throw std::invalid_argument("tv_distance: shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        acc += std::fabs(p.probs[i] - q.probs[i]);
    }
    return 0.5 * acc;
}

ExactDistribution empirical_distribution(const std::vector<TokenSequence> & samples,
                                         int k, int l) {
    const std::size_t n = state_count(k, l);
    ExactDistribution d;
    d.k = k;
    d.l = l;
    d.probs.assign(n, 0.0);
    for (const TokenSequence & z : samples) {
        if (static_cast<int>(z.size()) != l) {
            throw std::invalid_argument("empirical_distribution: sample length mismatch");
        }
        d.probs[encode_state(z, k)] += 1.0;
    }
    if (!samples.empty()) {
        for (double & p : d.probs) {
            p /= static_cast<double>(samples.size());
        }
    }
    return d;
}

std::vector<double> support_log_posterior(const std::vector<TokenSequence> & candidates,
                                          const std::vector<double> & prior_weights,
                                          const ForwardOp & op, const Measurement & y,
                                          const VocabSpec & vocab, double beta,
                                          double lambda1, double lambda2) {
    if (candidates.size() != prior_weights.size()) {
        throw std::invalid_argument("support_log_posterior: weight count mismatch");
    }
    std::vector<double> logw(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::vector<double> x = decode(candidates[i], vocab);
        const std::vector<double> out = op.apply(x);
        double l1 = 0.0;
        double l2 = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const double r = out[j] - y.values[j];
            l1 += std::fabs(r);
            l2 += r * r;
        }
        const double prior = prior_weights[i] > 0.0
                                 ? std::log(prior_weights[i])
                                 : -std::numeric_limits<double>::infinity();
        logw[i] = -beta * (lambda1 * l1 + lambda2 * l2) + prior;
    }
    return logw;
}

}  // namespace oracle
}  // namespace dlps
