#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dlps/corruption.hpp"
#include "dlps/matrix.hpp"
#include "dlps/potential.hpp"
#include "dlps/prior.hpp"
#include "dlps/rng.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

enum class ProposalForm { kIndex, kOneHot, kEmbedding };

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-3;
    bool enabled = true;
};

struct SamplerConfig {
    int outer_steps = 20;  // T
    int inner_steps = 10;  // M
    double eta = 0.5;
    ProposalForm proposal_form = ProposalForm::kOneHot;
    double tau_start = 1.0;
    double tau_end = 1.0;
    double alpha_base = 1.0;
    double alpha_min = 1.0;
    double beta_start = 1.0;
    double beta_max = 1.0;
    double grad_scale_init = 1.0;
    double grad_scale_final = 1.0;
    AdamConfig adam;
    bool mh = false;
    CleanSampleMode init_mode = CleanSampleMode::kArgmax;
    std::uint64_t seed = 0;
    bool record_inner_states = false;

    void validate() const;
};

struct AdamState {
    Matrix m;
    Matrix v;
    long step = 0;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols) : m(rows, cols, 0.0), v(rows, cols, 0.0) {}
};

// Bias-corrected m-hat / (sqrt(v-hat) + eps). Mutates the state.
Matrix adam_precondition(const Matrix & grad, AdamState & state, const AdamConfig & cfg);

using ProposalLogits = Matrix;

// Index geometry: r(l,k) = g[l] (k - z0[l]) / 2 - (k - z0[l])^2 / (4 eta).
ProposalLogits proposal_logits_index(std::span<const double> grad_scalar,
                                     const TokenSequence & z0, double eta, int k);

// One-hot geometry: self logit 0, others (g[l,k] - g[l,z0]) / 2 - 1 / (2 eta).
ProposalLogits proposal_logits_onehot(const Matrix & grad, const TokenSequence & z0,
                                      double eta);

// Codebook geometry; `deltas` are prior log-prob finite differences.
ProposalLogits proposal_logits_embedding(const Matrix & grad_embedding, const Matrix & deltas,
                                         const Codebook & codebook, const TokenSequence & z0,
                                         double eta);

// Per-position least-squares slope of the gradient row against the
// intensity map, times the per-index intensity step. Exact whenever the row
// is affine in the decoded intensity.
std::vector<double> contract_index_gradient(const Matrix & grad, const VocabSpec & vocab);

// Likelihood gradient mapped into codebook coordinates through the linear
// readout that best reproduces the intensity map.
Matrix embedding_likelihood_gradient(std::span<const double> grad_x, const Codebook & codebook,
                                     const VocabSpec & vocab);

// Substream ids so parallel per-position draws stay order-independent.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t outer = 0;
    std::uint64_t inner = 0;
};

TokenSequence sample_proposal(const ProposalLogits & logits, double tau, const StreamKey & key);

struct MhDecision {
    bool accepted = false;
    TokenSequence next;
};

// Forward logits are the ones the proposal was drawn from; reverse logits
// are rebuilt at the proposed state by the caller.
MhDecision mh_accept(const TokenSequence & z_cur, const TokenSequence & z_prop,
                     double u_cur, double u_prop, const ProposalLogits & fwd_logits,
                     const ProposalLogits & rev_logits, double tau, Rng & rng);

struct ScheduleValues {
    double beta = 1.0;
    double tau = 1.0;
    double grad_scale = 1.0;
    std::vector<double> alpha;  // per-position blend
};

ScheduleValues schedules(const SamplerConfig & cfg, int outer_index, int inner_index,
                         std::span<const double> row_entropies, int k);

struct InnerStepRecord {
    double u_before = 0.0;
    double u_after = 0.0;
    bool accepted = true;
};

struct InnerResult {
    TokenSequence z0;
    std::vector<InnerStepRecord> records;
    std::vector<TokenSequence> states;  // filled when record_inner_states is set
};

struct OuterRecord {
    double t = 0.0;
    TokenSequence zt;
    TokenSequence z0_init;
    TokenSequence z0_refined;
    std::vector<InnerStepRecord> inner;
    std::vector<TokenSequence> inner_states;
};

struct SampleTrace {
    std::vector<OuterRecord> outer;

    double acceptance_rate() const;
};

// Everything the potential needs that is fixed across a run.
struct Problem {
    const ForwardOp * op = nullptr;
    VocabSpec vocab;
    Measurement measurement;
    PotentialConfig potential;
    const Codebook * codebook = nullptr;            // embedding proposals
    const BilinearSurrogate * surrogate = nullptr;  // surrogate likelihood
};

// One refinement chain at fixed (zt, t); `pot` must already hold that
// context. outer_index selects the scheduled beta and gradient scale.
InnerResult inner_refine(const TokenSequence & z0_init, PosteriorPotential & pot,
                         const Problem & prob, const SamplerConfig & cfg, int outer_index);

struct RunResult {
    TokenSequence z0;
    SampleTrace trace;
};

// Full outer loop: terminal draw, per-step one-shot denoise, inner
// refinement, renoise to the next level.
RunResult run_sampler(const Problem & prob, const Denoiser & denoiser,
                      const CorruptionProcess & process, const SamplerConfig & cfg);

TokenSequence terminal_state(const CorruptionProcess & process, std::size_t length,
                             std::uint64_t seed);

}  // namespace dlps
