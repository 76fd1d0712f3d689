#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dlps/corruption.hpp"
#include "dlps/matrix.hpp"
#include "dlps/rng.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

// Per-position predictive logits over the clean vocabulary.
struct DenoiserOutput {
    Matrix logits;  // L x K

    // Row-wise log-normalized copy.
    Matrix log_probs() const;
};

enum class PriorMode { kFactorized, kExact };
enum class CleanSampleMode { kAncestral, kArgmax };

class Denoiser {
  public:
    virtual ~Denoiser() = default;

    virtual DenoiserOutput denoise(const TokenSequence & zt, double t) const = 0;
    virtual int vocab_size() const = 0;

    // Exact joint log p(z0 | zt); only priors with tractable joints
    // override this.
    virtual bool has_exact_joint() const { return false; }
    virtual double exact_joint_log_prob(const TokenSequence & z0, const TokenSequence & zt,
                                        double t) const;
};

// Sum of per-position log-probabilities under `output` (factorized), or the
// denoiser's exact joint.
double joint_log_prob(const Denoiser & denoiser, const DenoiserOutput & output,
                      const TokenSequence & z0, const TokenSequence & zt, double t,
                      PriorMode mode);

TokenSequence sample_clean(const DenoiserOutput & output, Rng & rng,
                           CleanSampleMode mode = CleanSampleMode::kAncestral);

// Exact Bayes inversion of the corruption process against a finite clean
// dataset: p(z0 | zt) directly, weighted per item by q(zt | item).
class EmpiricalBayesDenoiser final : public Denoiser {
  public:
    EmpiricalBayesDenoiser(std::vector<TokenSequence> dataset,
                           const CorruptionProcess & process,
                           double smoothing = 1e-6,
                           std::vector<double> prior_weights = {});

    DenoiserOutput denoise(const TokenSequence & zt, double t) const override;
    int vocab_size() const override;

    bool has_exact_joint() const override { return true; }
    double exact_joint_log_prob(const TokenSequence & z0, const TokenSequence & zt,
                                double t) const override;

    const std::vector<TokenSequence> & dataset() const { return dataset_; }
    const std::vector<double> & prior_weights() const { return prior_weights_; }
    double smoothing() const { return smoothing_; }

    // log of the normalized item posterior given zt.
    std::vector<double> item_log_posterior(const TokenSequence & zt, double t) const;

  private:
    std::vector<TokenSequence> dataset_;
    const CorruptionProcess * process_;
    double smoothing_;
    std::vector<double> log_prior_weights_;
    std::vector<double> prior_weights_;
    std::size_t length_;
};

// Serves one precomputed logits matrix per outer sampler step, indexed by
// the step time t = r / T.
class ExternalLogitsDenoiser final : public Denoiser {
  public:
    explicit ExternalLogitsDenoiser(std::vector<Matrix> per_step_logits);

    DenoiserOutput denoise(const TokenSequence & zt, double t) const override;
    int vocab_size() const override;

    std::size_t steps() const { return table_.size(); }

  private:
    std::vector<Matrix> table_;
};

// Logits exchange file: "DLPS", version byte 1, then u32 T_steps, u32 L,
// u32 K and T*L*K little-endian f32 values in (step, position, token) order.
void write_logits_file(const std::string & path, const std::vector<Matrix> & per_step);
std::vector<Matrix> read_logits_file(const std::string & path);

}  // namespace dlps
