#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dlps/oracle.hpp"
#include "dlps/sampler.hpp"

using namespace dlps;

namespace {

oracle::ExactDistribution product_distribution(const ProposalLogits & logits, int k) {
    oracle::ExactDistribution d;
    d.k = k;
    d.l = static_cast<int>(logits.rows());
    d.probs.assign(oracle::state_count(k, d.l), 1.0);
    std::vector<std::vector<double>> rows;
    for (std::size_t pos = 0; pos < logits.rows(); ++pos) {
        rows.push_back(softmax(logits.row(pos)));
    }
    for (std::size_t id = 0; id < d.probs.size(); ++id) {
        const TokenSequence state = oracle::decode_state(id, k, d.l);
        for (std::size_t pos = 0; pos < rows.size(); ++pos) {
            d.probs[id] *= rows[pos][static_cast<std::size_t>(state[pos])];
        }
    }
    return d;
}

CorruptionProcess uniform_process(int k) {
    return { ProcessKind::kUniform, NoiseSchedule{ ScheduleKind::kLinear, 1e-3 },
             VocabSpec::make(k) };
}

}  // namespace

TEST_CASE("adam preconditioning") {
    const AdamConfig cfg;

    SUBCASE("first step is the bias-corrected sign-like direction") {
        AdamState state;
        const Matrix out = adam_precondition(Matrix(2, 3, 1.0), state, cfg);
        for (double v : out.data()) {
            CHECK(v == doctest::Approx(1.0 / (1.0 + 1e-3)).epsilon(1e-12));
        }
        CHECK(state.step == 1);
    }

    SUBCASE("zero gradients stay zero") {
        AdamState state;
        for (int i = 0; i < 5; ++i) {
            const Matrix out = adam_precondition(Matrix(1, 2, 0.0), state, cfg);
            for (double v : out.data()) {
                CHECK(v == 0.0);
            }
        }
    }

    SUBCASE("constant gradients of different size equalize") {
        AdamState state;
        Matrix g(1, 2, 0.0);
        g(0, 0) = 1.0;
        g(0, 1) = 10.0;
        Matrix out;
        for (int i = 0; i < 200; ++i) {
            out = adam_precondition(g, state, cfg);
        }
        CHECK(std::fabs(out(0, 0) - out(0, 1)) / std::fabs(out(0, 1)) < 0.05);
    }
}

TEST_CASE("index proposal logits") {
    const std::vector<double> g1 = { 1.0 };
    const ProposalLogits r = proposal_logits_index(g1, { 0 }, 0.5, 2);
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
    const std::vector<double> probs = softmax(r.row(0));
    CHECK(probs[0] == doctest::Approx(0.5));

    // zero gradient, huge eta: uniform over K
    const std::vector<double> zero = { 0.0 };
    const ProposalLogits flat = proposal_logits_index(zero, { 1 }, 1e12, 4);
    const std::vector<double> flat_probs = softmax(flat.row(0));
    for (double p : flat_probs) {
        CHECK(p == doctest::Approx(0.25).epsilon(1e-9));
    }

    // tiny eta: the locality penalty pins the current token
    const std::vector<double> g2 = { 3.0 };
    const ProposalLogits tight = proposal_logits_index(g2, { 2 }, 1e-3, 4);
    CHECK(softmax(tight.row(0))[2] > 1.0 - 1e-9);
}

TEST_CASE("one-hot proposal logits") {
    Matrix g(1, 2, 0.0);
    g(0, 1) = 1.0;
    const ProposalLogits r = proposal_logits_onehot(g, { 0 }, 0.25);
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == doctest::Approx(-1.5).epsilon(1e-12));

    // equal gradient entries leave only the flat change penalty
    Matrix flat_g(1, 3, 0.7);
    const ProposalLogits flat = proposal_logits_onehot(flat_g, { 1 }, 0.5);
    CHECK(flat(0, 1) == 0.0);
    CHECK(flat(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(flat(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));

    // matches the enumeration kernel in one-hot geometry
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        TokenSequence z0(3);
        Matrix grad(3, 3, 0.0);
        for (std::size_t pos = 0; pos < 3; ++pos) {
            z0[pos] = static_cast<int>(rng.uniform_index(3));
            for (std::size_t tok = 0; tok < 3; ++tok) {
                grad(pos, tok) = 2.0 * rng.gaussian();
            }
        }
        const double eta = 0.2 + rng.uniform();
        const auto kernel =
            oracle::exact_langevin_kernel(z0, grad, eta, oracle::Geometry::kOneHot, 3);
        const auto product = product_distribution(proposal_logits_onehot(grad, z0, eta), 3);
        CHECK(oracle::tv_distance(product, kernel) < 1e-12);
    }
}

TEST_CASE("embedding proposal logits") {
    const VocabSpec vocab = VocabSpec::make(3);

    SUBCASE("zero gradient and flat deltas leave only the self boost") {
        // one-hot basis codebook: all pairwise distances equal 2
        Matrix basis(3, 3, 0.0);
        for (int i = 0; i < 3; ++i) {
            basis(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
        }
        const Codebook cb = make_codebook(basis);
        const double eta = 0.4;
        const ProposalLogits r = proposal_logits_embedding(Matrix(2, 3, 0.0), Matrix(2, 3, 0.0),
                                                           cb, { 0, 2 }, eta);
        CHECK(r(0, 0) == 0.0);
        CHECK(r(0, 1) == doctest::Approx(-2.0 / (4.0 * eta)).epsilon(1e-12));
        CHECK(r(0, 2) == doctest::Approx(-2.0 / (4.0 * eta)).epsilon(1e-12));
    }

    SUBCASE("one-hot basis codebook reproduces the one-hot prior handling") {
        Matrix basis(3, 3, 0.0);
        for (int i = 0; i < 3; ++i) {
            basis(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
        }
        const Codebook cb = make_codebook(basis);
        Rng rng(19);
        Matrix prior(2, 3, 0.0);
        for (double & v : prior.data()) {
            v = rng.gaussian();
        }
        const TokenSequence z0 = { 1, 0 };
        const double eta = 0.6;
        Matrix deltas(2, 3, 0.0);
        for (std::size_t pos = 0; pos < 2; ++pos) {
            for (std::size_t tok = 0; tok < 3; ++tok) {
                deltas(pos, tok) =
                    prior(pos, tok) - prior(pos, static_cast<std::size_t>(z0[pos]));
            }
        }
        const ProposalLogits emb =
            proposal_logits_embedding(Matrix(2, 3, 0.0), deltas, cb, z0, eta);
        const ProposalLogits onehot = proposal_logits_onehot(prior, z0, eta);
        const auto pe = product_distribution(emb, 3);
        const auto po = product_distribution(onehot, 3);
        CHECK(oracle::tv_distance(pe, po) < 1e-12);
    }

    SUBCASE("tiny eta pins the current token") {
        Matrix entries(3, 2, 0.0);
        entries(0, 0) = 0.0;
        entries(1, 0) = 0.5;
        entries(2, 0) = 1.0;
        entries(0, 1) = 1.0;
        entries(1, 1) = 0.0;
        entries(2, 1) = 0.5;
        const Codebook cb = make_codebook(entries);
        Matrix g(1, 2, 3.0);
        const ProposalLogits r = proposal_logits_embedding(g, Matrix(1, 3, 0.0), cb, { 1 }, 1e-6);
        CHECK(softmax(r.row(0))[1] > 1.0 - 1e-9);
    }

    SUBCASE("constant shifts of the prior logits cancel") {
        const Codebook cb = intensity_codebook(vocab);
        Rng rng(23);
        Matrix g(2, 1, 0.0);
        Matrix logits(2, 3, 0.0);
        for (double & v : g.data()) {
            v = rng.gaussian();
        }
        for (double & v : logits.data()) {
            v = rng.gaussian();
        }
        const TokenSequence z0 = { 0, 2 };
        const auto deltas_of = [&z0](const Matrix & lp) {
            Matrix d(lp.rows(), lp.cols(), 0.0);
            for (std::size_t pos = 0; pos < lp.rows(); ++pos) {
                for (std::size_t tok = 0; tok < lp.cols(); ++tok) {
                    d(pos, tok) = lp(pos, tok) - lp(pos, static_cast<std::size_t>(z0[pos]));
                }
            }
            return d;
        };
        Matrix shifted = logits;
        for (std::size_t tok = 0; tok < 3; ++tok) {
            shifted(0, tok) += 13.7;  // same shift across the row
        }
        const ProposalLogits a = proposal_logits_embedding(g, deltas_of(logits), cb, z0, 0.5);
        const ProposalLogits b = proposal_logits_embedding(g, deltas_of(shifted), cb, z0, 0.5);
        const auto pa = softmax(a.row(0));
        const auto pb = softmax(b.row(0));
        for (std::size_t tok = 0; tok < 3; ++tok) {
            CHECK(pa[tok] == doctest::Approx(pb[tok]).epsilon(1e-12));
        }
    }
}

TEST_CASE("index contraction recovers affine slopes") {
    const VocabSpec vocab = VocabSpec::make(5);
    Matrix g(2, 5, 0.0);
    // row 0 affine in the intensity, row 1 constant
    const double slope = -2.3;
    for (int tok = 0; tok < 5; ++tok) {
        g(0, static_cast<std::size_t>(tok)) = 0.4 + slope * vocab.intensity(tok);
        g(1, static_cast<std::size_t>(tok)) = 7.7;
    }
    const std::vector<double> contracted = contract_index_gradient(g, vocab);
    CHECK(contracted[0] == doctest::Approx(slope * vocab.intensity_step()).epsilon(1e-12));
    CHECK(contracted[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("factorization exactness in all three geometries") {
    Rng rng(29);

    SUBCASE("index") {
        for (int trial = 0; trial < 10; ++trial) {
            TokenSequence z0(4);
            Matrix g(4, 1, 0.0);
            for (std::size_t pos = 0; pos < 4; ++pos) {
                z0[pos] = static_cast<int>(rng.uniform_index(4));
                g(pos, 0) = rng.gaussian();
            }
            const double eta = 0.2 + rng.uniform();
            std::vector<double> g_vec(4);
            for (std::size_t pos = 0; pos < 4; ++pos) {
                g_vec[pos] = g(pos, 0);
            }
            const auto kernel =
                oracle::exact_langevin_kernel(z0, g, eta, oracle::Geometry::kIndex, 4);
            const auto product =
                product_distribution(proposal_logits_index(g_vec, z0, eta, 4), 4);
            CHECK(oracle::tv_distance(product, kernel) < 1e-10);
        }
    }

    SUBCASE("embedding") {
        Matrix entries(3, 2, 0.0);
        for (double & v : entries.data()) {
            v = rng.gaussian();
        }
        const Codebook cb = make_codebook(entries);
        for (int trial = 0; trial < 10; ++trial) {
            TokenSequence z0(3);
            Matrix g(3, 2, 0.0);
            for (std::size_t pos = 0; pos < 3; ++pos) {
                z0[pos] = static_cast<int>(rng.uniform_index(3));
                g(pos, 0) = rng.gaussian();
                g(pos, 1) = rng.gaussian();
            }
            const double eta = 0.2 + rng.uniform();
            const auto kernel = oracle::exact_langevin_kernel(
                z0, g, eta, oracle::Geometry::kEmbedding, 3, &cb);
            const auto product = product_distribution(
                proposal_logits_embedding(g, Matrix(3, 3, 0.0), cb, z0, eta), 3);
            CHECK(oracle::tv_distance(product, kernel) < 1e-10);
        }
    }
}

TEST_CASE("energy ratio form for a potential linear in the one-hot coordinates") {
    Rng rng(31);
    const int k = 2;
    const int l = 4;
    Matrix lp(l, k, 0.0);
    for (std::size_t pos = 0; pos < static_cast<std::size_t>(l); ++pos) {
        for (std::size_t tok = 0; tok < static_cast<std::size_t>(k); ++tok) {
            lp(pos, tok) = rng.gaussian();
        }
        log_normalize_row(lp.row(pos));
    }
    const TokenSequence z0 = { 0, 1, 1, 0 };
    const double eta = 0.7;

    // sampler side: proposal built from the linear extension's gradient
    const auto product = product_distribution(proposal_logits_onehot(lp, z0, eta), k);

    // oracle side: exp(0.5 [U(z') - U(z0)]) times the locality factor
    const auto u_of = [&](const TokenSequence & z) {
        double acc = 0.0;
        for (std::size_t pos = 0; pos < z.size(); ++pos) {
            acc += lp(pos, static_cast<std::size_t>(z[pos]));
        }
        return acc;
    };
    oracle::ExactDistribution ratio;
    ratio.k = k;
    ratio.l = l;
    ratio.probs.resize(oracle::state_count(k, l));
    std::vector<double> logw(ratio.probs.size());
    for (std::size_t id = 0; id < ratio.probs.size(); ++id) {
        const TokenSequence cand = oracle::decode_state(id, k, l);
        int hamming = 0;
        for (std::size_t pos = 0; pos < cand.size(); ++pos) {
            hamming += cand[pos] != z0[pos] ? 1 : 0;
        }
        logw[id] = 0.5 * (u_of(cand) - u_of(z0)) - 2.0 * hamming / (4.0 * eta);
    }
    const double lse = log_sum_exp(logw);
    for (std::size_t id = 0; id < ratio.probs.size(); ++id) {
        ratio.probs[id] = std::exp(logw[id] - lse);
    }
    CHECK(oracle::tv_distance(product, ratio) < 1e-10);
}

TEST_CASE("proposal sampling") {
    SUBCASE("point mass logits are deterministic") {
        Matrix logits(2, 3, -1e8);
        logits(0, 1) = 0.0;
        logits(1, 2) = 0.0;
        const TokenSequence z = sample_proposal(logits, 1.0, StreamKey{ 4, 0, 0 });
        CHECK(z == TokenSequence{ 1, 2 });
    }

    SUBCASE("infinite temperature flattens the proposal") {
        Matrix logits(1, 4, 0.0);
        logits(0, 0) = 5.0;
        logits(0, 1) = -2.0;
        std::vector<int> counts(4, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const TokenSequence z =
                sample_proposal(logits, 1e12, StreamKey{ 7, static_cast<std::uint64_t>(i), 0 });
            counts[static_cast<std::size_t>(z[0])] += 1;
        }
        double chi2 = 0.0;
        for (int c : counts) {
            const double expected = n / 4.0;
            chi2 += (c - expected) * (c - expected) / expected;
        }
        CHECK(chi2 < 16.266);  // df 3 at the 0.001 level
    }

    SUBCASE("frequencies match the tempered softmax") {
        Matrix logits(1, 3, 0.0);
        logits(0, 0) = 0.3;
        logits(0, 1) = -0.8;
        logits(0, 2) = 1.1;
        const double tau = 0.7;
        std::vector<double> scaled = { 0.3, -0.8, 1.1 };
        const std::vector<double> target = softmax(scaled, tau);
        std::vector<int> counts(3, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const TokenSequence z =
                sample_proposal(logits, tau, StreamKey{ 8, static_cast<std::uint64_t>(i), 1 });
            counts[static_cast<std::size_t>(z[0])] += 1;
        }
        for (std::size_t tok = 0; tok < 3; ++tok) {
            CHECK(std::fabs(counts[tok] / double(n) - target[tok]) < 0.005);
        }
    }

    SUBCASE("adding a row constant changes nothing") {
        Matrix logits(1, 3, 0.0);
        logits(0, 1) = 0.9;
        Matrix shifted = logits;
        for (std::size_t tok = 0; tok < 3; ++tok) {
            shifted(0, tok) += 42.0;
        }
        const auto pa = softmax(logits.row(0));
        const auto pb = softmax(shifted.row(0));
        for (std::size_t tok = 0; tok < 3; ++tok) {
            CHECK(pa[tok] == doctest::Approx(pb[tok]).epsilon(1e-12));
        }
        for (int i = 0; i < 50; ++i) {
            const StreamKey key{ 9, static_cast<std::uint64_t>(i), 0 };
            CHECK(sample_proposal(logits, 1.0, key) == sample_proposal(shifted, 1.0, key));
        }
    }
}

TEST_CASE("metropolis correction") {
    Rng rng(37);

    SUBCASE("identical states always pass") {
        const Matrix logits(2, 2, 0.0);
        const MhDecision d =
            mh_accept({ 0, 1 }, { 0, 1 }, -5.0, -5.0, logits, logits, 1.0, rng);
        CHECK(d.accepted);
    }

    SUBCASE("symmetric proposals reduce to the metropolis rule") {
        const Matrix logits(1, 2, 0.0);  // uniform, symmetric
        const double delta_u = -0.5;
        int accepted = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const MhDecision d = mh_accept({ 0 }, { 1 }, 0.0, delta_u, logits, logits, 1.0, rng);
            accepted += d.accepted ? 1 : 0;
        }
        CHECK(std::fabs(accepted / double(n) - std::exp(delta_u)) < 0.01);
        const MhDecision up = mh_accept({ 0 }, { 1 }, -1.0, 2.0, logits, logits, 1.0, rng);
        CHECK(up.accepted);
    }
}

TEST_CASE("schedules") {
    SamplerConfig cfg;
    cfg.outer_steps = 10;
    cfg.inner_steps = 3;
    cfg.beta_start = 0.5;
    cfg.beta_max = 4.0;
    cfg.tau_start = 2.0;
    cfg.tau_end = 0.5;
    cfg.grad_scale_init = 30.0;
    cfg.grad_scale_final = 5.0;
    cfg.alpha_base = 1.0;
    cfg.alpha_min = 0.25;

    const std::vector<double> no_entropy;
    CHECK(schedules(cfg, 0, 0, no_entropy, 2).beta == 0.5);
    CHECK(schedules(cfg, 9, 0, no_entropy, 2).beta == 4.0);
    CHECK(schedules(cfg, 0, 0, no_entropy, 2).grad_scale == 30.0);
    CHECK(schedules(cfg, 9, 0, no_entropy, 2).grad_scale == 5.0);

    CHECK(schedules(cfg, 0, 0, no_entropy, 2).tau == 2.0);
    CHECK(schedules(cfg, 0, 1, no_entropy, 2).tau == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(schedules(cfg, 0, 2, no_entropy, 2).tau == 0.5);

    // maximal entropy rows land exactly on alpha_min
    const std::vector<double> entropies = { std::log(2.0), 0.0 };
    const ScheduleValues s = schedules(cfg, 3, 1, entropies, 2);
    CHECK(s.alpha[0] == 0.25);
    CHECK(s.alpha[1] == 1.0);

    // single-step runs evaluate at the final endpoints
    SamplerConfig one = cfg;
    one.outer_steps = 1;
    one.inner_steps = 1;
    CHECK(schedules(one, 0, 0, no_entropy, 2).beta == 4.0);
    CHECK(schedules(one, 0, 0, no_entropy, 2).tau == 0.5);

    CHECK_THROWS_AS(schedules(cfg, 10, 0, no_entropy, 2), std::out_of_range);
}

TEST_CASE("inner refinement") {
    const auto process = uniform_process(2);
    const VocabSpec vocab = process.vocab();

    SUBCASE("zero steps return the input") {
        ExternalLogitsDenoiser flat({ Matrix(4, 2, 0.0) });
        const ImageGrid grid{ 1, 4, 1 };
        const auto op = make_identity(grid);
        Measurement y;
        y.values = { 0.0, 0.0, 0.0, 0.0 };
        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 1.0;
        PosteriorPotential pot(*op, vocab, y, prob.potential, flat);
        pot.set_context({ 0, 0, 0, 0 }, 0.5);
        SamplerConfig cfg;
        cfg.inner_steps = 0;
        const InnerResult res = inner_refine({ 1, 0, 1, 0 }, pot, prob, cfg, 0);
        CHECK(res.z0 == TokenSequence{ 1, 0, 1, 0 });
    }

    SUBCASE("the beta ramp reaches the potential") {
        ExternalLogitsDenoiser flat({ Matrix(2, 2, 0.0) });
        const ImageGrid grid{ 1, 2, 1 };
        const auto op = make_identity(grid);
        Measurement y;
        y.values = { 1.0, 1.0 };  // residual 1 per coordinate at z0 = [0, 0]
        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 1.0;
        PosteriorPotential pot(*op, vocab, y, prob.potential, flat);
        pot.set_context({ 0, 0 }, 0.5);
        SamplerConfig cfg;
        cfg.outer_steps = 3;
        cfg.inner_steps = 1;
        cfg.beta_start = 0.0;
        cfg.beta_max = 6.0;
        const TokenSequence z0 = { 0, 0 };
        const double u_first = inner_refine(z0, pot, prob, cfg, 0).records[0].u_before;
        const double u_last = inner_refine(z0, pot, prob, cfg, 2).records[0].u_before;
        // data fit is 2, so the ramp separates the values by 6 * 2
        CHECK(u_first - u_last == doctest::Approx(12.0).epsilon(1e-12));
    }

    SUBCASE("a dominant likelihood thresholds the measurement") {
        const int l = 64;
        ExternalLogitsDenoiser flat({ Matrix(l, 2, 0.0) });  // uniform prior
        const ImageGrid grid{ 8, 8, 1 };
        const auto op = make_identity(grid);
        Rng rng(41);
        TokenSequence truth(l);
        for (int & tok : truth) {
            tok = static_cast<int>(rng.uniform_index(2));
        }
        Measurement y = simulate_measurement(*op, decode(truth, vocab), 0.01, rng);

        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 50.0;
        prob.potential.beta = 1.0;
        PosteriorPotential pot(*op, vocab, y, prob.potential, flat);
        pot.set_context(TokenSequence(l, 0), 1.0);

        SamplerConfig cfg;
        cfg.inner_steps = 10;
        cfg.grad_scale_init = cfg.grad_scale_final = 20.0;
        cfg.seed = 5;
        TokenSequence init(l, 0);
        const InnerResult res = inner_refine(init, pot, prob, cfg, 0);
        int match = 0;
        for (int pos = 0; pos < l; ++pos) {
            const int want = y.values[static_cast<std::size_t>(pos)] >= 0.5 ? 1 : 0;
            match += res.z0[static_cast<std::size_t>(pos)] == want ? 1 : 0;
        }
        CHECK(match >= 61);  // at least 95 percent of positions
    }

    SUBCASE("MH chain with the exact prior reaches its stationary law") {
        const std::vector<TokenSequence> patterns = {
            { 0, 0, 0, 1, 1, 1 }, { 1, 1, 0, 0, 1, 1 }, { 0, 1, 0, 1, 0, 1 },
            { 1, 0, 1, 0, 1, 0 },
        };
        EmpiricalBayesDenoiser denoiser(patterns, process, 1e-3);
        const ImageGrid grid{ 1, 6, 1 };
        const auto op = make_identity(grid);
        Measurement y;
        y.values.assign(6, 0.0);

        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 1.0;
        prob.potential.beta = 0.0;  // prior-only target
        prob.potential.prior_mode = PriorMode::kExact;

        PosteriorPotential pot(*op, vocab, y, prob.potential, denoiser);
        const TokenSequence zt = { 0, 1, 1, 0, 1, 0 };
        pot.set_context(zt, 0.5);

        SamplerConfig cfg;
        cfg.inner_steps = 60000;
        cfg.eta = 0.5;
        cfg.beta_start = 0.0;  // the schedule owns beta during refinement
        cfg.beta_max = 0.0;
        cfg.mh = true;
        cfg.adam.enabled = false;
        cfg.record_inner_states = true;
        cfg.seed = 77;

        const InnerResult res = inner_refine(zt, pot, prob, cfg, 0);
        const std::vector<TokenSequence> kept(res.states.begin() + 5000, res.states.end());
        const auto empirical = oracle::empirical_distribution(kept, 2, 6);
        const auto target = oracle::enumerate_posterior(zt, 0.5, denoiser, PriorMode::kExact,
                                                        *op, y, vocab, 0.0, 0.0, 1.0);
        CHECK(oracle::tv_distance(empirical, target) < 0.05);
    }
}

TEST_CASE("full runs") {
    const auto process = uniform_process(2);
    const VocabSpec vocab = process.vocab();

    SUBCASE("degenerate pipeline returns the argmax prediction") {
        Matrix logits(4, 2, 0.0);
        logits(0, 1) = 2.0;
        logits(2, 1) = 1.0;
        ExternalLogitsDenoiser denoiser({ logits });
        const ImageGrid grid{ 1, 4, 1 };
        const auto op = make_identity(grid);
        Measurement y;
        y.values = { 0.0, 0.0, 0.0, 0.0 };
        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 1.0;
        SamplerConfig cfg;
        cfg.outer_steps = 1;
        cfg.inner_steps = 0;
        cfg.init_mode = CleanSampleMode::kArgmax;
        const RunResult res = run_sampler(prob, denoiser, process, cfg);
        CHECK(res.z0 == TokenSequence{ 1, 0, 1, 0 });
        CHECK(res.trace.outer.size() == 1);
    }

    SUBCASE("fixed seeds give identical traces") {
        const std::vector<TokenSequence> items = { { 0, 0, 1, 1 }, { 1, 1, 0, 0 } };
        EmpiricalBayesDenoiser denoiser(items, process, 1e-4);
        const ImageGrid grid{ 1, 4, 1 };
        Rng rng(3);
        const auto op = make_inpaint(grid, random_mask(1, 4, 0.5, rng));
        const Measurement y = simulate_measurement(*op, decode(items[0], vocab), 0.05, rng);

        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = y;
        prob.potential.lambda2 = 200.0;
        SamplerConfig cfg;
        cfg.outer_steps = 6;
        cfg.inner_steps = 4;
        cfg.seed = 9001;
        cfg.mh = true;

        const RunResult a = run_sampler(prob, denoiser, process, cfg);
        const RunResult b = run_sampler(prob, denoiser, process, cfg);
        CHECK(a.z0 == b.z0);
        REQUIRE(a.trace.outer.size() == b.trace.outer.size());
        for (std::size_t r = 0; r < a.trace.outer.size(); ++r) {
            CHECK(a.trace.outer[r].zt == b.trace.outer[r].zt);
            CHECK(a.trace.outer[r].z0_init == b.trace.outer[r].z0_init);
            CHECK(a.trace.outer[r].z0_refined == b.trace.outer[r].z0_refined);
            REQUIRE(a.trace.outer[r].inner.size() == b.trace.outer[r].inner.size());
            for (std::size_t m = 0; m < a.trace.outer[r].inner.size(); ++m) {
                CHECK(a.trace.outer[r].inner[m].u_after == b.trace.outer[r].inner[m].u_after);
                CHECK(a.trace.outer[r].inner[m].accepted == b.trace.outer[r].inner[m].accepted);
            }
        }
    }

    SUBCASE("terminal states") {
        const VocabSpec masked_vocab = VocabSpec::make(3, true);
        CorruptionProcess masked(ProcessKind::kMasked,
                                 NoiseSchedule{ ScheduleKind::kLinear, 1e-3 }, masked_vocab);
        const TokenSequence zm = terminal_state(masked, 5, 1);
        for (int tok : zm) {
            CHECK(tok == 3);
        }
        const TokenSequence zu = terminal_state(process, 1000, 1);
        int ones = 0;
        for (int tok : zu) {
            CHECK(tok >= 0);
            CHECK(tok < 2);
            ones += tok;
        }
        CHECK(ones > 400);
        CHECK(ones < 600);
        CHECK(terminal_state(process, 1000, 1) == zu);
    }
}

TEST_CASE("config validation") {
    SamplerConfig cfg;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SamplerConfig{};
    cfg.alpha_min = 2.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SamplerConfig{};
    cfg.beta_start = 2.0;
    cfg.beta_max = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
