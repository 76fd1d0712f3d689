#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "dlps/oracle.hpp"
#include "dlps/potential.hpp"
#include "dlps/rng.hpp"

using namespace dlps;

namespace {

CorruptionProcess uniform_process() {
    return { ProcessKind::kUniform, NoiseSchedule{ ScheduleKind::kLinear, 0.0 },
             VocabSpec::make(2) };
}

// Test-side extension of U to arbitrary nonnegative weight rows; the
// library path under test never runs through here.
double relaxed_potential(const Matrix & w, const ForwardOp & op, const Measurement & y,
                         const VocabSpec & vocab, const Matrix & log_probs,
                         const PotentialConfig & cfg, const BilinearSurrogate * sur) {
    std::vector<double> x(w.rows(), 0.0);
    for (std::size_t pos = 0; pos < w.rows(); ++pos) {
        for (int tok = 0; tok < vocab.k; ++tok) {
            x[pos] += w(pos, static_cast<std::size_t>(tok)) * vocab.intensity(tok);
        }
    }
    double lik = 0.0;
    if (cfg.likelihood_mode == LikelihoodMode::kExplicit || sur == nullptr) {
        lik = -data_fit_energy(op, x, y, cfg.lambda1, cfg.lambda2);
    } else {
        lik = sur->similarity(x, y.values);
    }
    double prior = 0.0;
    for (std::size_t i = 0; i < w.data().size(); ++i) {
        prior += w.data()[i] * log_probs.data()[i];
    }
    return cfg.beta * lik + prior;
}

}  // namespace

TEST_CASE("potential value composes likelihood and prior") {
    const auto process = uniform_process();
    const VocabSpec vocab = process.vocab();
    EmpiricalBayesDenoiser denoiser({ { 0, 0 }, { 1, 1 } }, process, 1e-6);
    const ImageGrid grid{ 1, 2, 1 };
    const auto op = make_identity(grid);
    Measurement y;
    y.values = { 1.0, 1.0 };
    y.sigma = 0.0;

    PotentialConfig cfg;
    cfg.lambda2 = 1.0;
    cfg.beta = 0.0;
    PosteriorPotential pot(*op, vocab, y, cfg, denoiser);
    pot.set_context({ 0, 1 }, 0.5);
    const TokenSequence z0 = { 1, 1 };
    const double joint = joint_log_prob(denoiser, pot.denoiser_output(), z0, { 0, 1 }, 0.5,
                                        PriorMode::kFactorized);
    CHECK(pot.value(z0) == doctest::Approx(joint).epsilon(1e-12));

    // beta on but the residual is zero: same answer
    PotentialConfig on = cfg;
    on.beta = 3.0;
    PosteriorPotential pot_on(*op, vocab, y, on, denoiser);
    pot_on.set_context({ 0, 1 }, 0.5);
    CHECK(pot_on.value(z0) == doctest::Approx(joint).epsilon(1e-12));
}

TEST_CASE("exponentiated potential matches the enumerated posterior") {
    const auto process = uniform_process();
    const VocabSpec vocab = process.vocab();
    const std::vector<TokenSequence> items = {
        { 0, 0, 1, 1 }, { 1, 0, 1, 0 }, { 0, 1, 0, 1 }, { 1, 1, 1, 1 },
    };
    EmpiricalBayesDenoiser denoiser(items, process, 1e-4);
    const ImageGrid grid{ 1, 4, 1 };
    Rng rng(3);
    const auto op = make_inpaint(grid, random_mask(1, 4, 0.5, rng));
    const Measurement meas = simulate_measurement(*op, decode(items[1], vocab), 0.1, rng);

    PotentialConfig cfg;
    cfg.lambda2 = 50.0;
    cfg.beta = 1.0;
    PosteriorPotential pot(*op, vocab, meas, cfg, denoiser);
    const TokenSequence zt = { 1, 1, 0, 0 };
    pot.set_context(zt, 0.5);

    std::vector<double> logw(16);
    for (std::size_t id = 0; id < 16; ++id) {
        logw[id] = pot.value(oracle::decode_state(id, 2, 4));
    }
    const double lse = log_sum_exp(logw);
    oracle::ExactDistribution from_potential;
    from_potential.k = 2;
    from_potential.l = 4;
    from_potential.probs.resize(16);
    for (std::size_t id = 0; id < 16; ++id) {
        from_potential.probs[id] = std::exp(logw[id] - lse);
    }

    const auto enumerated = oracle::enumerate_posterior(zt, 0.5, denoiser,
                                                        PriorMode::kFactorized, *op, meas,
                                                        vocab, 1.0, 0.0, 50.0);
    CHECK(oracle::tv_distance(from_potential, enumerated) < 1e-12);
}

TEST_CASE("one-hot gradient reduces to the log-prob matrix at beta 0") {
    const auto process = uniform_process();
    EmpiricalBayesDenoiser denoiser({ { 0, 1 }, { 1, 0 } }, process, 1e-6);
    const ImageGrid grid{ 1, 2, 1 };
    const auto op = make_identity(grid);
    Measurement y;
    y.values = { 0.0, 0.0 };

    PotentialConfig cfg;
    cfg.lambda2 = 1.0;
    cfg.beta = 0.0;
    PosteriorPotential pot(*op, process.vocab(), y, cfg, denoiser);
    pot.set_context({ 0, 0 }, 0.3);
    const Matrix grad = pot.gradient_one_hot({ 0, 1 });
    const Matrix & lp = pot.log_probs();
    for (std::size_t i = 0; i < grad.data().size(); ++i) {
        CHECK(grad.data()[i] == lp.data()[i]);
    }

    PotentialConfig exact_cfg = cfg;
    exact_cfg.prior_mode = PriorMode::kExact;
    PosteriorPotential pot_exact(*op, process.vocab(), y, exact_cfg, denoiser);
    pot_exact.set_context({ 0, 0 }, 0.3);
    CHECK_THROWS_AS(pot_exact.gradient_one_hot({ 0, 1 }), std::logic_error);
}

TEST_CASE("one-hot gradient matches finite differences on the relaxed extension") {
    const auto process = uniform_process();
    const VocabSpec vocab = process.vocab();
    EmpiricalBayesDenoiser denoiser({ { 0, 0, 1, 1 }, { 1, 0, 0, 1 } }, process, 1e-3);
    const ImageGrid grid{ 2, 2, 1 };
    Rng rng(21);
    const auto op = make_hdr(grid);

    Measurement y;
    y.values.resize(4);
    for (double & v : y.values) {
        v = rng.uniform();
    }
    PotentialConfig cfg;
    cfg.lambda1 = 0.4;
    cfg.lambda2 = 1.5;
    cfg.beta = 2.0;
    PosteriorPotential pot(*op, vocab, y, cfg, denoiser);
    pot.set_context({ 0, 1, 1, 0 }, 0.5);

    const TokenSequence z0 = { 0, 1, 0, 1 };
    const Matrix grad = pot.gradient_one_hot(z0);
    Matrix w = to_one_hot(z0, vocab);
    const double h = 1e-4;
    for (std::size_t i = 0; i < w.data().size(); ++i) {
        const double keep = w.data()[i];
        w.data()[i] = keep + h;
        const double up = relaxed_potential(w, *op, y, vocab, pot.log_probs(), cfg, nullptr);
        w.data()[i] = keep - h;
        const double down = relaxed_potential(w, *op, y, vocab, pot.log_probs(), cfg, nullptr);
        w.data()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({ std::fabs(fd), std::fabs(grad.data()[i]), 1e-8 });
        CHECK(std::fabs(grad.data()[i] - fd) / scale < 1e-5);
    }
}

TEST_CASE("zero residual and a uniform prior flatten the gradient") {
    const auto process = uniform_process();
    ExternalLogitsDenoiser flat({ Matrix(2, 2, 0.0) });
    const ImageGrid grid{ 1, 2, 1 };
    const auto op = make_identity(grid);
    Measurement y;
    y.values = { 0.0, 1.0 };
    PotentialConfig cfg;
    cfg.lambda2 = 1.0;
    PosteriorPotential pot(*op, process.vocab(), y, cfg, flat);
    pot.set_context({ 0, 1 }, 1.0);
    const Matrix grad = pot.gradient_one_hot({ 0, 1 });
    for (std::size_t pos = 0; pos < 2; ++pos) {
        CHECK(grad(pos, 0) == doctest::Approx(grad(pos, 1)).epsilon(1e-12));
    }
}

TEST_CASE("prior deltas are logit differences with a zero self column") {
    const auto process = uniform_process();
    Matrix logits(1, 2, 0.0);
    logits(0, 0) = std::log(0.9);
    logits(0, 1) = std::log(0.1);
    ExternalLogitsDenoiser denoiser({ logits });
    const ImageGrid grid{ 1, 1, 1 };
    const auto op = make_identity(grid);
    Measurement y;
    y.values = { 0.0 };
    PotentialConfig cfg;
    cfg.lambda2 = 1.0;
    PosteriorPotential pot(*op, process.vocab(), y, cfg, denoiser);
    pot.set_context({ 0 }, 1.0);

    const Matrix deltas = pot.prior_deltas({ 0 });
    CHECK(deltas(0, 0) == 0.0);
    CHECK(deltas(0, 1) == doctest::Approx(std::log(1.0 / 9.0)).epsilon(1e-12));

    // equals direct factorized joint differences
    const TokenSequence base = { 0 };
    const TokenSequence flipped = { 1 };
    const double direct =
        joint_log_prob(denoiser, pot.denoiser_output(), flipped, base, 1.0,
                       PriorMode::kFactorized) -
        joint_log_prob(denoiser, pot.denoiser_output(), base, base, 1.0,
                       PriorMode::kFactorized);
    CHECK(deltas(0, 1) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("surrogate gradient") {
    const VocabSpec vocab = VocabSpec::make(2);
    Measurement y;
    y.values = { 0.2, 0.3, 0.5 };

    SUBCASE("zero encoders give a zero matrix") {
        BilinearSurrogate sur{ Matrix(2, 4, 0.0), Matrix(2, 3, 0.0), 1.0 };
        const Matrix g = surrogate_gradient(to_one_hot({ 0, 1, 0, 1 }, vocab), y, sur, vocab);
        for (double v : g.data()) {
            CHECK(v == 0.0);
        }
    }

    SUBCASE("rank-one encoders sum the measurement") {
        BilinearSurrogate sur{ Matrix(1, 4, 1.0), Matrix(1, 3, 1.0), 1.0 };
        const Matrix g = surrogate_gradient(to_one_hot({ 0, 1, 0, 1 }, vocab), y, sur, vocab);
        const double sum_y = 1.0;
        for (std::size_t pos = 0; pos < 4; ++pos) {
            CHECK(g(pos, 1) - g(pos, 0) == doctest::Approx(sum_y).epsilon(1e-12));
        }
    }

    SUBCASE("matches finite differences of the similarity") {
        Rng rng(8);
        BilinearSurrogate sur{ Matrix(3, 4, 0.0), Matrix(3, 3, 0.0), 0.7 };
        for (double & v : sur.f.data()) {
            v = rng.gaussian();
        }
        for (double & v : sur.g.data()) {
            v = rng.gaussian();
        }
        Matrix w = to_one_hot({ 1, 0, 1, 0 }, vocab);
        const Matrix g = surrogate_gradient(w, y, sur, vocab);
        const double h = 1e-4;
        for (std::size_t i = 0; i < w.data().size(); ++i) {
            const auto score = [&](const Matrix & weights) {
                std::vector<double> x(4, 0.0);
                for (std::size_t pos = 0; pos < 4; ++pos) {
                    for (int tok = 0; tok < 2; ++tok) {
                        x[pos] += weights(pos, static_cast<std::size_t>(tok)) *
                                  vocab.intensity(tok);
                    }
                }
                return sur.similarity(x, y.values);
            };
            Matrix pert = w;
            pert.data()[i] += h;
            const double up = score(pert);
            pert.data()[i] -= 2.0 * h;
            const double down = score(pert);
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({ std::fabs(fd), std::fabs(g.data()[i]), 1e-10 });
            CHECK(std::fabs(g.data()[i] - fd) / scale < 1e-6);
        }

        // bilinearity: the gradient does not depend on w
        OneHotSequence soft(4, 2, 0.5);
        const Matrix g2 = surrogate_gradient(soft, y, sur, vocab);
        for (std::size_t i = 0; i < g.data().size(); ++i) {
            CHECK(std::fabs(g.data()[i] - g2.data()[i]) < 1e-12);
        }
    }
}

TEST_CASE("infonce fit") {
    SUBCASE("orthogonal pairs become identifiable") {
        const std::vector<std::vector<double>> xs = { { 1.0, 0.0 }, { 0.0, 1.0 } };
        const std::vector<std::vector<double>> ys = { { 2.0, 0.0 }, { 0.0, 2.0 } };
        Rng rng(5);
        const InfoNceFitResult fit = infonce_fit(xs, ys, 2, 1.0, 500, 0.5, rng);
        CHECK(fit.final_loss <= fit.initial_loss);
        CHECK(infonce_correct_mass(fit.surrogate, xs, ys) > 0.9);
    }

    SUBCASE("identical clean inputs stay uninformative") {
        const std::vector<std::vector<double>> xs = { { 1.0, 1.0 }, { 1.0, 1.0 },
                                                      { 1.0, 1.0 } };
        const std::vector<std::vector<double>> ys = { { 1.0, 0.0 }, { 0.0, 1.0 },
                                                      { 1.0, 1.0 } };
        Rng rng(6);
        const InfoNceFitResult fit = infonce_fit(xs, ys, 2, 1.0, 300, 0.2, rng);
        CHECK(infonce_correct_mass(fit.surrogate, xs, ys) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("analytic gradients match finite differences") {
        Rng rng(9);
        std::vector<std::vector<double>> xs(3, std::vector<double>(2));
        std::vector<std::vector<double>> ys(3, std::vector<double>(4));
        for (auto & v : xs) {
            for (double & e : v) {
                e = rng.gaussian();
            }
        }
        for (auto & v : ys) {
            for (double & e : v) {
                e = rng.gaussian();
            }
        }
        BilinearSurrogate sur{ Matrix(2, 2, 0.0), Matrix(2, 4, 0.0), 1.3 };
        for (double & v : sur.f.data()) {
            v = 0.3 * rng.gaussian();
        }
        for (double & v : sur.g.data()) {
            v = 0.3 * rng.gaussian();
        }
        Matrix gf, gg;
        infonce_gradients(sur, xs, ys, gf, gg);
        const double h = 1e-5;
        for (std::size_t i = 0; i < sur.f.data().size(); ++i) {
            BilinearSurrogate pert = sur;
            pert.f.data()[i] += h;
            const double up = infonce_loss(pert, xs, ys);
            pert.f.data()[i] -= 2.0 * h;
            const double down = infonce_loss(pert, xs, ys);
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({ std::fabs(fd), std::fabs(gf.data()[i]), 1e-8 });
            CHECK(std::fabs(gf.data()[i] - fd) / scale < 1e-5);
        }
        for (std::size_t i = 0; i < sur.g.data().size(); ++i) {
            BilinearSurrogate pert = sur;
            pert.g.data()[i] += h;
            const double up = infonce_loss(pert, xs, ys);
            pert.g.data()[i] -= 2.0 * h;
            const double down = infonce_loss(pert, xs, ys);
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({ std::fabs(fd), std::fabs(gg.data()[i]), 1e-8 });
            CHECK(std::fabs(gg.data()[i] - fd) / scale < 1e-5);
        }
    }

    SUBCASE("degenerate batches raise") {
        Rng rng(1);
        CHECK_THROWS_AS(infonce_fit({ { 1.0 } }, { { 1.0 } }, 1, 1.0, 10, 0.1, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("surrogate file round trip") {
    Rng rng(44);
    BilinearSurrogate sur{ Matrix(2, 3, 0.0), Matrix(2, 5, 0.0), 0.5 };
    for (double & v : sur.f.data()) {
        v = static_cast<float>(rng.gaussian());
    }
    for (double & v : sur.g.data()) {
        v = static_cast<float>(rng.gaussian());
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "dlps_surrogate").string();
    save_surrogate(path, sur);
    const BilinearSurrogate loaded = load_surrogate(path, 0.5);
    CHECK(loaded.f.data() == sur.f.data());
    CHECK(loaded.g.data() == sur.g.data());
    std::filesystem::remove(path + ".f");
    std::filesystem::remove(path + ".g");
}

TEST_CASE("beta rescaling leaves the likelihood argmax unchanged") {
    const VocabSpec vocab = VocabSpec::make(2);
    const ImageGrid grid{ 1, 3, 1 };
    const auto op = make_identity(grid);
    Rng rng(10);
    Measurement y;
    y.values = { 0.1, 0.8, 0.4 };

    std::size_t best1 = 0, best2 = 0;
    double hi1 = -1e300, hi2 = -1e300;
    for (std::size_t id = 0; id < 8; ++id) {
        const TokenSequence z = oracle::decode_state(id, 2, 3);
        const double fit = data_fit_energy(*op, decode(z, vocab), y, 0.0, 1.0);
        if (-1.0 * fit > hi1) {
            hi1 = -1.0 * fit;
            best1 = id;
        }
        if (-3.7 * fit > hi2) {
            hi2 = -3.7 * fit;
            best2 = id;
        }
    }
    CHECK(best1 == best2);
}

TEST_CASE("config validation") {
    PotentialConfig cfg;
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.likelihood_mode = LikelihoodMode::kSurrogate;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
