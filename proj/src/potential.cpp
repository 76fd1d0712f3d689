#include "dlps/potential.hpp"

#include <cmath>
#include <stdexcept>

namespace dlps {

void PotentialConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("PotentialConfig: negative data-fit weight");
    }
    if (likelihood_mode == LikelihoodMode::kExplicit && lambda1 == 0.0 && lambda2 == 0.0) {
        throw std::invalid_argument("PotentialConfig: explicit likelihood needs a data-fit term");
    }
    if (beta < 0.0) {
        throw std::invalid_argument("PotentialConfig: beta must be >= 0");
    }
}

double BilinearSurrogate::similarity(std::span<const double> x,
                                     std::span<const double> y) const {
    if (x.size() != f.cols() || y.size() != g.cols()) {
        throw std::invalid_argument("BilinearSurrogate: dimension mismatch");
    }
    double acc = 0.0;
    for (std::size_t e = 0; e < f.rows(); ++e) {
        double fx = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            fx += f(e, i) * x[i];
        }
        double gy = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            gy += g(e, j) * y[j];
        }
        acc += fx * gy;
    }
    return acc / tau;
}

Matrix surrogate_gradient(const OneHotSequence & w, const Measurement & y,
                          const BilinearSurrogate & sur, const VocabSpec & vocab) {
    validate_one_hot(w);
    if (sur.f.cols() != w.rows() || sur.g.cols() != y.values.size()) {
        throw std::invalid_argument("surrogate_gradient: dimension mismatch");
    }
    // d(sim)/dx = F^T (G y) / tau, independent of w by bilinearity.
    std::vector<double> gy(sur.g.rows(), 0.0);
    for (std::size_t e = 0; e < sur.g.rows(); ++e) {
        for (std::size_t j = 0; j < y.values.size(); ++j) {
            gy[e] += sur.g(e, j) * y.values[j];
        }
    }
    std::vector<double> dx(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t e = 0; e < sur.f.rows(); ++e) {
            dx[i] += sur.f(e, i) * gy[e];
        }
        dx[i] /= sur.tau;
    }
    Matrix grad(w.rows(), static_cast<std::size_t>(vocab.k), 0.0);
    for (std::size_t pos = 0; pos < w.rows(); ++pos) {
        for (int tok = 0; tok < vocab.k; ++tok) {
            grad(pos, static_cast<std::size_t>(tok)) = dx[pos] * vocab.intensity(tok);
        }
    }
    return grad;
}

namespace {

Matrix score_table(const BilinearSurrogate & sur,
                   const std::vector<std::vector<double>> & xs,
                   const std::vector<std::vector<double>> & ys) {
    const std::size_t n = xs.size();
    Matrix s(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            s(j, i) = sur.similarity(xs[j], ys[i]);
        }
    }
    return s;
}

void check_batch(const std::vector<std::vector<double>> & xs,
                 const std::vector<std::vector<double>> & ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("infonce: batch sizes differ");
    }
    if (xs.size() < 2) {
        throw std::invalid_argument("infonce: need at least two pairs");
    }
    for (const auto & x : xs) {
        if (x.size() != xs.front().size()) {
            throw std::invalid_argument("infonce: inconsistent x dimension");
        }
    }
    for (const auto & y : ys) {
        if (y.size() != ys.front().size()) {
            throw std::invalid_argument("infonce: inconsistent y dimension");
        }
    }
}

}  // namespace

double infonce_loss(const BilinearSurrogate & sur,
                    const std::vector<std::vector<double>> & xs,
                    const std::vector<std::vector<double>> & ys) {
    check_batch(xs, ys);
    const Matrix s = score_table(sur, xs, ys);
    double loss = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        loss -= s(j, j) - log_sum_exp(s.row(j));
    }
    return loss / static_cast<double>(xs.size());
}

void infonce_gradients(const BilinearSurrogate & sur,
                       const std::vector<std::vector<double>> & xs,
                       const std::vector<std::vector<double>> & ys,
                       Matrix & grad_f, Matrix & grad_g) {
    check_batch(xs, ys);
    const std::size_t n = xs.size();
    const Matrix s = score_table(sur, xs, ys);
    grad_f = Matrix(sur.f.rows(), sur.f.cols(), 0.0);
    grad_g = Matrix(sur.g.rows(), sur.g.cols(), 0.0);
    // dLoss/dS(j,i) = (softmax_i(S(j,:)) - 1{i==j}) / n, and
    // S(j,i) = <F x_j, G y_i> / tau.
    for (std::size_t j = 0; j < n; ++j) {
        const std::vector<double> q = softmax(s.row(j));
        for (std::size_t i = 0; i < n; ++i) {
            const double coef = (q[i] - (i == j ? 1.0 : 0.0)) /
                                (static_cast<double>(n) * sur.tau);
            if (coef == 0.0) {
                continue;
            }
            for (std::size_t e = 0; e < sur.f.rows(); ++e) {
                double gy = 0.0;
                for (std::size_t c = 0; c < sur.g.cols(); ++c) {
                    gy += sur.g(e, c) * ys[i][c];
                }
                double fx = 0.0;
                for (std::size_t c = 0; c < sur.f.cols(); ++c) {
                    fx += sur.f(e, c) * xs[j][c];
                }
                for (std::size_t c = 0; c < sur.f.cols(); ++c) {
                    grad_f(e, c) += coef * gy * xs[j][c];
                }
                for (std::size_t c = 0; c < sur.g.cols(); ++c) {
                    grad_g(e, c) += coef * fx * ys[i][c];
                }
            }
        }
    }
}

InfoNceFitResult infonce_fit(const std::vector<std::vector<double>> & xs,
                             const std::vector<std::vector<double>> & ys,
                             int embed_dim, double tau, int steps, double lr, Rng & rng) {
    check_batch(xs, ys);
    if (embed_dim < 1 || tau <= 0.0 || lr <= 0.0 || steps < 0) {
        throw std::invalid_argument("infonce_fit: bad hyperparameters");
    }
    BilinearSurrogate sur;
    sur.tau = tau;
    sur.f = Matrix(static_cast<std::size_t>(embed_dim), xs.front().size());
    sur.g = Matrix(static_cast<std::size_t>(embed_dim), ys.front().size());
    for (double & v : sur.f.data()) {
        v = 0.1 * rng.gaussian();
    }
    for (double & v : sur.g.data()) {
        v = 0.1 * rng.gaussian();
    }
    InfoNceFitResult result;
    result.initial_loss = infonce_loss(sur, xs, ys);
    Matrix grad_f;
    Matrix grad_g;
    for (int step = 0; step < steps; ++step) {
        infonce_gradients(sur, xs, ys, grad_f, grad_g);
        for (std::size_t i = 0; i < sur.f.data().size(); ++i) {
            sur.f.data()[i] -= lr * grad_f.data()[i];
        }
        for (std::size_t i = 0; i < sur.g.data().size(); ++i) {
            sur.g.data()[i] -= lr * grad_g.data()[i];
        }
    }
    result.final_loss = infonce_loss(sur, xs, ys);
    result.surrogate = std::move(sur);
    return result;
}

double infonce_correct_mass(const BilinearSurrogate & sur,
                            const std::vector<std::vector<double>> & xs,
                            const std::vector<std::vector<double>> & ys) {
    check_batch(xs, ys);
    const Matrix s = score_table(sur, xs, ys);
    double acc = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        acc += softmax(s.row(j))[j];
    }
    return acc / static_cast<double>(xs.size());
}

void save_surrogate(const std::string & path, const BilinearSurrogate & sur) {
    write_logits_file(path + ".f", { sur.f });
    write_logits_file(path + ".g", { sur.g });
}

BilinearSurrogate load_surrogate(const std::string & path, double tau) {
    BilinearSurrogate sur;
    sur.f = read_logits_file(path + ".f").front();
    sur.g = read_logits_file(path + ".g").front();
    sur.tau = tau;
    return sur;
}

PosteriorPotential::PosteriorPotential(const ForwardOp & op, VocabSpec vocab, Measurement y,
                                       PotentialConfig cfg, const Denoiser & denoiser,
                                       const BilinearSurrogate * surrogate)
    : op_(&op), vocab_(std::move(vocab)), y_(std::move(y)), cfg_(cfg),
      denoiser_(&denoiser), surrogate_(surrogate) {
    cfg_.validate();
    if (cfg_.likelihood_mode == LikelihoodMode::kSurrogate && surrogate_ == nullptr) {
        throw std::invalid_argument("PosteriorPotential: surrogate mode needs encoders");
    }
    if (static_cast<std::size_t>(op_->output_dim()) != y_.values.size()) {
        throw std::invalid_argument("PosteriorPotential: measurement length mismatch");
    }
}

void PosteriorPotential::set_context(TokenSequence zt, double t) {
    output_ = denoiser_->denoise(zt, t);
    log_probs_ = output_.log_probs();
    zt_ = std::move(zt);
    t_ = t;
    has_context_ = true;
}

void PosteriorPotential::set_beta(double beta) {
    if (beta < 0.0) {
        throw std::invalid_argument("set_beta: beta must be >= 0");
    }
    cfg_.beta = beta;
}

void PosteriorPotential::require_context() const {
    if (!has_context_) {
        throw std::logic_error("PosteriorPotential: set_context was never called");
    }
}

const DenoiserOutput & PosteriorPotential::denoiser_output() const {
    require_context();
    return output_;
}

const Matrix & PosteriorPotential::log_probs() const {
    require_context();
    return log_probs_;
}

double PosteriorPotential::value(const TokenSequence & z0) const {
    require_context();
    const std::vector<double> x = decode(z0, vocab_);
    double lik = 0.0;
    if (cfg_.likelihood_mode == LikelihoodMode::kExplicit) {
        lik = -data_fit_energy(*op_, x, y_, cfg_.lambda1, cfg_.lambda2);
    } else {
        lik = surrogate_->similarity(x, y_.values);
    }
    double prior = 0.0;
    if (cfg_.prior_mode == PriorMode::kExact) {
        prior = joint_log_prob(*denoiser_, output_, z0, zt_, t_, PriorMode::kExact);
    } else {
        for (std::size_t pos = 0; pos < z0.size(); ++pos) {
            prior += log_probs_(pos, static_cast<std::size_t>(z0[pos]));
        }
    }
    return cfg_.beta * lik + prior;
}

std::vector<double> PosteriorPotential::likelihood_gradient_x(const TokenSequence & z0) const {
    require_context();
    const std::vector<double> x = decode(z0, vocab_);
    std::vector<double> gx;
    if (cfg_.likelihood_mode == LikelihoodMode::kExplicit) {
        gx = residual_gradient(*op_, x, y_, cfg_.lambda1, cfg_.lambda2);
    } else {
        // d(sim)/dx = F^T (G y) / tau
        gx.assign(x.size(), 0.0);
        std::vector<double> gy(surrogate_->g.rows(), 0.0);
        for (std::size_t e = 0; e < surrogate_->g.rows(); ++e) {
            for (std::size_t j = 0; j < y_.values.size(); ++j) {
                gy[e] += surrogate_->g(e, j) * y_.values[j];
            }
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t e = 0; e < surrogate_->f.rows(); ++e) {
                gx[i] += surrogate_->f(e, i) * gy[e];
            }
            gx[i] /= surrogate_->tau;
        }
    }
    for (double & v : gx) {
        v *= cfg_.beta;
    }
    return gx;
}

// The parts are always factorized; proposals fall back to the factorized
// surrogate even when MH evaluates the exact joint.
GradientParts PosteriorPotential::gradient_parts(const TokenSequence & z0) const {
    require_context();
    const std::vector<double> gx = likelihood_gradient_x(z0);
    GradientParts parts;
    parts.likelihood = Matrix(z0.size(), static_cast<std::size_t>(vocab_.k), 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        for (int tok = 0; tok < vocab_.k; ++tok) {
            parts.likelihood(pos, static_cast<std::size_t>(tok)) =
                gx[pos] * vocab_.intensity(tok);
        }
    }
    parts.prior = log_probs_;
    return parts;
}

Matrix PosteriorPotential::gradient_one_hot(const TokenSequence & z0) const {
    if (cfg_.prior_mode == PriorMode::kExact) {
        throw std::logic_error("gradient_one_hot: no continuous extension under the exact prior");
    }
    const GradientParts parts = gradient_parts(z0);
    return parts.likelihood + parts.prior;
}

Matrix PosteriorPotential::prior_deltas(const TokenSequence & z0) const {
    require_context();
    Matrix deltas(z0.size(), log_probs_.cols(), 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        const double self = log_probs_(pos, static_cast<std::size_t>(z0[pos]));
        for (std::size_t tok = 0; tok < log_probs_.cols(); ++tok) {
            deltas(pos, tok) =
                tok == static_cast<std::size_t>(z0[pos]) ? 0.0 : log_probs_(pos, tok) - self;
        }
    }
    return deltas;
}

}  // namespace dlps
