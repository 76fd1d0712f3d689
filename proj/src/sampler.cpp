#include "dlps/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlps {

namespace {

// Substream purposes under one run seed.
constexpr std::uint64_t kStreamTerminal = 1;
constexpr std::uint64_t kStreamInit = 2;
constexpr std::uint64_t kStreamProposal = 3;
constexpr std::uint64_t kStreamMh = 4;
constexpr std::uint64_t kStreamRenoise = 5;

}  // namespace

void SamplerConfig::validate() const {
    if (outer_steps < 1 || inner_steps < 0) {
        throw std::invalid_argument("SamplerConfig: need T >= 1 and M >= 0");
    }
    if (eta <= 0.0 || tau_start <= 0.0 || tau_end <= 0.0) {
        throw std::invalid_argument("SamplerConfig: eta and temperatures must be positive");
    }
    if (!(alpha_min > 0.0) || alpha_min > alpha_base) {
        throw std::invalid_argument("SamplerConfig: need 0 < alpha_min <= alpha_base");
    }
    if (beta_start < 0.0 || beta_start > beta_max) {
        throw std::invalid_argument("SamplerConfig: need 0 <= beta_start <= beta_max");
    }
}

Matrix adam_precondition(const Matrix & grad, AdamState & state, const AdamConfig & cfg) {
    if (state.m.empty()) {
        state = AdamState(grad.rows(), grad.cols());
    }
    if (!state.m.same_shape(grad)) {
        throw std::invalid_argument("adam_precondition: state shape mismatch");
    }
    state.step += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    Matrix out(grad.rows(), grad.cols(), 0.0);
    for (std::size_t i = 0; i < grad.data().size(); ++i) {
        const double g = grad.data()[i];
        state.m.data()[i] = cfg.beta1 * state.m.data()[i] + (1.0 - cfg.beta1) * g;
        state.v.data()[i] = cfg.beta2 * state.v.data()[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m.data()[i] / c1;
        const double v_hat = state.v.data()[i] / c2;
        out.data()[i] = m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    return out;
}

ProposalLogits proposal_logits_index(std::span<const double> grad_scalar,
                                     const TokenSequence & z0, double eta, int k) {
    if (grad_scalar.size() != z0.size()) {
        throw std::invalid_argument("proposal_logits_index: gradient length mismatch");
    }
    ProposalLogits r(z0.size(), static_cast<std::size_t>(k), 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        for (int tok = 0; tok < k; ++tok) {
            const double d = static_cast<double>(tok - z0[pos]);
            r(pos, static_cast<std::size_t>(tok)) =
                0.5 * grad_scalar[pos] * d - d * d / (4.0 * eta);
        }
    }
    return r;
}

ProposalLogits proposal_logits_onehot(const Matrix & grad, const TokenSequence & z0,
                                      double eta) {
    if (grad.rows() != z0.size()) {
        throw std::invalid_argument("proposal_logits_onehot: gradient shape mismatch");
    }
    ProposalLogits r(grad.rows(), grad.cols(), 0.0);
    const double hamming = 1.0 / (2.0 * eta);  // ||e_k - e_z||^2 = 2 for k != z
    for (std::size_t pos = 0; pos < grad.rows(); ++pos) {
        const double self = grad(pos, static_cast<std::size_t>(z0[pos]));
        for (std::size_t tok = 0; tok < grad.cols(); ++tok) {
            if (tok == static_cast<std::size_t>(z0[pos])) {
                r(pos, tok) = 0.0;
            } else {
                r(pos, tok) = 0.5 * (grad(pos, tok) - self) - hamming;
            }
        }
    }
    return r;
}

ProposalLogits proposal_logits_embedding(const Matrix & grad_embedding, const Matrix & deltas,
                                         const Codebook & codebook, const TokenSequence & z0,
                                         double eta) {
    const std::size_t d = codebook.entries.cols();
    if (grad_embedding.rows() != z0.size() || grad_embedding.cols() != d) {
        throw std::invalid_argument("proposal_logits_embedding: gradient shape mismatch");
    }
    if (deltas.rows() != z0.size() ||
        deltas.cols() != static_cast<std::size_t>(codebook.size())) {
        throw std::invalid_argument("proposal_logits_embedding: delta shape mismatch");
    }
    ProposalLogits r(z0.size(), static_cast<std::size_t>(codebook.size()), 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        const auto self = codebook.entry(z0[pos]);
        for (int tok = 0; tok < codebook.size(); ++tok) {
            if (tok == z0[pos]) {
                continue;  // logit stays exactly 0
            }
            const auto cand = codebook.entry(tok);
            double dot = 0.0;
            double dist2 = 0.0;
            for (std::size_t e = 0; e < d; ++e) {
                const double diff = cand[e] - self[e];
                dot += grad_embedding(pos, e) * diff;
                dist2 += diff * diff;
            }
            r(pos, static_cast<std::size_t>(tok)) =
                0.5 * dot + 0.5 * deltas(pos, static_cast<std::size_t>(tok)) -
                dist2 / (4.0 * eta);
        }
    }
    return r;
}

std::vector<double> contract_index_gradient(const Matrix & grad, const VocabSpec & vocab) {
    if (grad.cols() != static_cast<std::size_t>(vocab.k)) {
        throw std::invalid_argument("contract_index_gradient: width must equal K");
    }
    double mean = 0.0;
    for (int tok = 0; tok < vocab.k; ++tok) {
        mean += vocab.intensity(tok);
    }
    mean /= static_cast<double>(vocab.k);
    double norm = 0.0;
    for (int tok = 0; tok < vocab.k; ++tok) {
        const double c = vocab.intensity(tok) - mean;
        norm += c * c;
    }
    const double step = vocab.intensity_step();
    std::vector<double> out(grad.rows(), 0.0);
    for (std::size_t pos = 0; pos < grad.rows(); ++pos) {
        double slope = 0.0;
        for (int tok = 0; tok < vocab.k; ++tok) {
            slope += grad(pos, static_cast<std::size_t>(tok)) * (vocab.intensity(tok) - mean);
        }
        out[pos] = step * slope / norm;
    }
    return out;
}

Matrix embedding_likelihood_gradient(std::span<const double> grad_x, const Codebook & codebook,
                                     const VocabSpec & vocab) {
    if (codebook.size() != vocab.k) {
        throw std::invalid_argument("embedding_likelihood_gradient: codebook size mismatch");
    }
    std::vector<double> intensities(static_cast<std::size_t>(vocab.k));
    for (int tok = 0; tok < vocab.k; ++tok) {
        intensities[static_cast<std::size_t>(tok)] = vocab.intensity(tok);
    }
    const std::vector<double> readout = ridge_least_squares(codebook.entries, intensities);
    Matrix grad(grad_x.size(), codebook.entries.cols(), 0.0);
    for (std::size_t pos = 0; pos < grad_x.size(); ++pos) {
        for (std::size_t e = 0; e < readout.size(); ++e) {
            grad(pos, e) = grad_x[pos] * readout[e];
        }
    }
    return grad;
}

TokenSequence sample_proposal(const ProposalLogits & logits, double tau, const StreamKey & key) {
    if (tau <= 0.0) {
        throw std::invalid_argument("sample_proposal: temperature must be positive");
    }
    TokenSequence z(logits.rows());
    for (std::size_t pos = 0; pos < logits.rows(); ++pos) {
        Rng rng = substream(key.seed, { kStreamProposal, key.outer, key.inner, pos });
        z[pos] = static_cast<int>(rng.categorical_from_logits(logits.row(pos), tau));
    }
    return z;
}

namespace {

double proposal_log_prob(const ProposalLogits & logits, const TokenSequence & target,
                         double tau) {
    double acc = 0.0;
    for (std::size_t pos = 0; pos < logits.rows(); ++pos) {
        std::vector<double> row(logits.row(pos).begin(), logits.row(pos).end());
        for (double & v : row) {
            v /= tau;
        }
        acc += row[static_cast<std::size_t>(target[pos])] - log_sum_exp(row);
    }
    return acc;
}

}  // namespace

MhDecision mh_accept(const TokenSequence & z_cur, const TokenSequence & z_prop,
                     double u_cur, double u_prop, const ProposalLogits & fwd_logits,
                     const ProposalLogits & rev_logits, double tau, Rng & rng) {
    const double log_fwd = proposal_log_prob(fwd_logits, z_prop, tau);
    const double log_rev = proposal_log_prob(rev_logits, z_cur, tau);
    double log_ratio = (u_prop - u_cur) + log_rev - log_fwd;
    if (z_prop == z_cur) {
        log_ratio = 0.0;  // identical states always pass
    }
    MhDecision d;
    d.accepted = log_ratio >= 0.0 || std::log(rng.uniform_open()) < log_ratio;
    d.next = d.accepted ? z_prop : z_cur;
    return d;
}

ScheduleValues schedules(const SamplerConfig & cfg, int outer_index, int inner_index,
                         std::span<const double> row_entropies, int k) {
    if (outer_index < 0 || outer_index >= cfg.outer_steps || inner_index < 0 ||
        (cfg.inner_steps > 0 && inner_index >= cfg.inner_steps)) {
        throw std::out_of_range("schedules: index out of range");
    }
    ScheduleValues s;
    if (cfg.outer_steps == 1) {
        s.beta = cfg.beta_max;
        s.grad_scale = cfg.grad_scale_final;
    } else {
        const double frac = static_cast<double>(outer_index) /
                            static_cast<double>(cfg.outer_steps - 1);
        s.beta = cfg.beta_start + (cfg.beta_max - cfg.beta_start) * frac;
        s.grad_scale = cfg.grad_scale_init + (cfg.grad_scale_final - cfg.grad_scale_init) * frac;
    }
    if (cfg.inner_steps <= 1) {
        s.tau = cfg.tau_end;
    } else {
        const double frac = static_cast<double>(inner_index) /
                            static_cast<double>(cfg.inner_steps - 1);
        s.tau = cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, frac);
    }
    const double log_k = std::log(static_cast<double>(k));
    s.alpha.resize(row_entropies.size());
    for (std::size_t pos = 0; pos < row_entropies.size(); ++pos) {
        const double h = std::clamp(row_entropies[pos] / log_k, 0.0, 1.0);
        s.alpha[pos] = cfg.alpha_min + (cfg.alpha_base - cfg.alpha_min) * (1.0 - h);
    }
    return s;
}

namespace {

std::vector<double> denoiser_entropies(const Matrix & log_probs) {
    std::vector<double> h(log_probs.rows(), 0.0);
    for (std::size_t pos = 0; pos < log_probs.rows(); ++pos) {
        double acc = 0.0;
        for (double lp : log_probs.row(pos)) {
            if (std::isfinite(lp)) {
                acc -= std::exp(lp) * lp;
            }
        }
        h[pos] = acc;
    }
    return h;
}

struct ProposalContext {
    const Problem * prob;
    const SamplerConfig * cfg;
    AdamState * adam;
    double grad_scale;
    const std::vector<double> * alpha;
};

// Builds the proposal table at `z`, preconditioning only the likelihood
// part. The prior enters at its native log-probability scale (for the
// embedding form through the finite-difference deltas).
ProposalLogits build_proposal(const TokenSequence & z, PosteriorPotential & pot,
                              const ProposalContext & ctx, bool mutate_adam) {
    const SamplerConfig & cfg = *ctx.cfg;
    const Problem & prob = *ctx.prob;
    if (cfg.proposal_form == ProposalForm::kEmbedding) {
        if (prob.codebook == nullptr) {
            throw std::invalid_argument("sampler: embedding proposals need a codebook");
        }
        const std::vector<double> gx = pot.likelihood_gradient_x(z);
        Matrix g_emb = embedding_likelihood_gradient(gx, *prob.codebook, prob.vocab);
        if (cfg.adam.enabled) {
            AdamState scratch = *ctx.adam;
            AdamState & state = mutate_adam ? *ctx.adam : scratch;
            g_emb = adam_precondition(g_emb, state, cfg.adam);
        }
        for (std::size_t pos = 0; pos < g_emb.rows(); ++pos) {
            const double scale = ctx.grad_scale * (*ctx.alpha)[pos];
            for (std::size_t e = 0; e < g_emb.cols(); ++e) {
                g_emb(pos, e) *= scale;
            }
        }
        return proposal_logits_embedding(g_emb, pot.prior_deltas(z), *prob.codebook, z,
                                         cfg.eta);
    }
    if (cfg.proposal_form == ProposalForm::kIndex) {
        // the index geometry's gradient object is the per-position scalar
        // d U / d index; Adam runs on that vector directly
        const std::vector<double> gx = pot.likelihood_gradient_x(z);
        Matrix g_idx(gx.size(), 1, 0.0);
        const double step = prob.vocab.intensity_step();
        for (std::size_t pos = 0; pos < gx.size(); ++pos) {
            g_idx(pos, 0) = gx[pos] * step;
        }
        if (cfg.adam.enabled) {
            AdamState scratch = *ctx.adam;
            AdamState & state = mutate_adam ? *ctx.adam : scratch;
            g_idx = adam_precondition(g_idx, state, cfg.adam);
        }
        // local prior slope in index units, centered where possible
        const Matrix & lp = pot.log_probs();
        std::vector<double> g(gx.size());
        for (std::size_t pos = 0; pos < g.size(); ++pos) {
            const int lo = std::max(z[pos] - 1, 0);
            const int hi = std::min(z[pos] + 1, prob.vocab.k - 1);
            const double slope = (lp(pos, static_cast<std::size_t>(hi)) -
                                  lp(pos, static_cast<std::size_t>(lo))) /
                                 static_cast<double>(hi - lo);
            g[pos] = ctx.grad_scale * (*ctx.alpha)[pos] * g_idx(pos, 0) + slope;
        }
        return proposal_logits_index(g, z, cfg.eta, prob.vocab.k);
    }
    GradientParts parts = pot.gradient_parts(z);
    Matrix lik = std::move(parts.likelihood);
    if (cfg.adam.enabled) {
        AdamState scratch = *ctx.adam;
        AdamState & state = mutate_adam ? *ctx.adam : scratch;
        lik = adam_precondition(lik, state, cfg.adam);
    }
    for (std::size_t pos = 0; pos < lik.rows(); ++pos) {
        const double scale = ctx.grad_scale * (*ctx.alpha)[pos];
        for (std::size_t tok = 0; tok < lik.cols(); ++tok) {
            lik(pos, tok) *= scale;
        }
    }
    const Matrix grad = lik + parts.prior;
    return proposal_logits_onehot(grad, z, cfg.eta);
}

}  // namespace

InnerResult inner_refine(const TokenSequence & z0_init, PosteriorPotential & pot,
                         const Problem & prob, const SamplerConfig & cfg, int outer_index) {
    cfg.validate();
    InnerResult result;
    result.z0 = z0_init;
    if (cfg.inner_steps == 0) {
        return result;
    }
    const std::vector<double> entropies = denoiser_entropies(pot.log_probs());
    AdamState adam;  // fresh moments per outer step
    for (int m = 0; m < cfg.inner_steps; ++m) {
        const ScheduleValues sched = schedules(cfg, outer_index, m, entropies, prob.vocab.k);
        pot.set_beta(sched.beta);
        ProposalContext ctx{ &prob, &cfg, &adam, sched.grad_scale, &sched.alpha };
        const double u_cur = pot.value(result.z0);
        AdamState pre_step = adam;  // reverse proposal preconditions from here
        const ProposalLogits fwd = build_proposal(result.z0, pot, ctx, true);
        const StreamKey key{ cfg.seed, static_cast<std::uint64_t>(outer_index),
                             static_cast<std::uint64_t>(m) };
        TokenSequence z_prop = sample_proposal(fwd, sched.tau, key);
        InnerStepRecord record;
        record.u_before = u_cur;
        if (cfg.mh) {
            const double u_prop = pot.value(z_prop);
            ProposalContext rev_ctx = ctx;
            rev_ctx.adam = &pre_step;
            const ProposalLogits rev = build_proposal(z_prop, pot, rev_ctx, false);
            Rng mh_rng = substream(cfg.seed, { kStreamMh, static_cast<std::uint64_t>(outer_index),
                                               static_cast<std::uint64_t>(m) });
            const MhDecision decision =
                mh_accept(result.z0, z_prop, u_cur, u_prop, fwd, rev, sched.tau, mh_rng);
            record.accepted = decision.accepted;
            record.u_after = decision.accepted ? u_prop : u_cur;
            result.z0 = decision.next;
        } else {
            record.accepted = true;
            record.u_after = pot.value(z_prop);
            result.z0 = std::move(z_prop);
        }
        result.records.push_back(record);
        if (cfg.record_inner_states) {
            result.states.push_back(result.z0);
        }
    }
    return result;
}

TokenSequence terminal_state(const CorruptionProcess & process, std::size_t length,
                             std::uint64_t seed) {
    TokenSequence z(length);
    if (process.kind() == ProcessKind::kMasked) {
        std::fill(z.begin(), z.end(), *process.vocab().mask_index);
        return z;
    }
    const int n = process.model_vocab();
    for (std::size_t pos = 0; pos < length; ++pos) {
        Rng rng = substream(seed, { kStreamTerminal, pos });
        z[pos] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
    }
    return z;
}

double SampleTrace::acceptance_rate() const {
    std::size_t total = 0;
    std::size_t accepted = 0;
    for (const OuterRecord & rec : outer) {
        for (const InnerStepRecord & step : rec.inner) {
            total += 1;
            accepted += step.accepted ? 1 : 0;
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(accepted) / static_cast<double>(total);
}

RunResult run_sampler(const Problem & prob, const Denoiser & denoiser,
                      const CorruptionProcess & process, const SamplerConfig & cfg) {
    cfg.validate();
    if (prob.op == nullptr) {
        throw std::invalid_argument("run_sampler: missing forward operator");
    }
    if (prob.vocab.k != process.vocab().k ||
        prob.vocab.mask_index != process.vocab().mask_index) {
        throw std::invalid_argument("run_sampler: problem and process vocabularies disagree");
    }
    const std::size_t length = static_cast<std::size_t>(prob.op->grid().size());
    PosteriorPotential pot(*prob.op, prob.vocab, prob.measurement, prob.potential, denoiser,
                           prob.surrogate);

    RunResult result;
    TokenSequence zt = terminal_state(process, length, cfg.seed);
    const int t_steps = cfg.outer_steps;
    for (int r = t_steps; r >= 1; --r) {
        const double t = static_cast<double>(r) / static_cast<double>(t_steps);
        const double s = static_cast<double>(r - 1) / static_cast<double>(t_steps);
        const int outer_index = t_steps - r;

        pot.set_context(zt, t);
        Rng init_rng = substream(cfg.seed, { kStreamInit, static_cast<std::uint64_t>(r) });
        TokenSequence z0_init = sample_clean(pot.denoiser_output(), init_rng, cfg.init_mode);

        SamplerConfig step_cfg = cfg;
        InnerResult inner = inner_refine(z0_init, pot, prob, step_cfg, outer_index);

        OuterRecord record;
        record.t = t;
        record.zt = zt;
        record.z0_init = std::move(z0_init);
        record.z0_refined = inner.z0;
        record.inner = std::move(inner.records);
        record.inner_states = std::move(inner.states);
        result.trace.outer.push_back(std::move(record));

        if (r > 1) {
            Rng renoise_rng =
                substream(cfg.seed, { kStreamRenoise, static_cast<std::uint64_t>(r) });
            zt = process.renoise(inner.z0, s, renoise_rng);
        }
        result.z0 = std::move(inner.z0);
    }
    return result;
}

}  // namespace dlps
