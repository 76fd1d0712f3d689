#pragma once

#include <string>
#include <vector>

#include "dlps/matrix.hpp"
#include "dlps/operators.hpp"
#include "dlps/prior.hpp"
#include "dlps/rng.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

enum class LikelihoodMode { kExplicit, kSurrogate };

struct PotentialConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.5;
    double beta = 1.0;  // multiplies only the data-fit term
    PriorMode prior_mode = PriorMode::kFactorized;
    LikelihoodMode likelihood_mode = LikelihoodMode::kExplicit;

    void validate() const;
};

// Linear encoder pair for contrastive likelihood guidance. The similarity
// <F x, G y> / tau stands in for log p(y | x) up to an x-independent shift.
struct BilinearSurrogate {
    Matrix f;  // d_e x L
    Matrix g;  // d_e x m
    double tau = 1.0;

    double similarity(std::span<const double> x, std::span<const double> y) const;
};

// d(similarity)/dw pulled back through the expected decode; constant in w.
Matrix surrogate_gradient(const OneHotSequence & w, const Measurement & y,
                          const BilinearSurrogate & sur, const VocabSpec & vocab);

double infonce_loss(const BilinearSurrogate & sur,
                    const std::vector<std::vector<double>> & xs,
                    const std::vector<std::vector<double>> & ys);

// Gradients of the InfoNCE cross-entropy with in-batch negatives.
void infonce_gradients(const BilinearSurrogate & sur,
                       const std::vector<std::vector<double>> & xs,
                       const std::vector<std::vector<double>> & ys,
                       Matrix & grad_f, Matrix & grad_g);

struct InfoNceFitResult {
    BilinearSurrogate surrogate;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

InfoNceFitResult infonce_fit(const std::vector<std::vector<double>> & xs,
                             const std::vector<std::vector<double>> & ys,
                             int embed_dim, double tau, int steps, double lr, Rng & rng);

// Mean softmax mass assigned to each pair's own measurement.
double infonce_correct_mass(const BilinearSurrogate & sur,
                            const std::vector<std::vector<double>> & xs,
                            const std::vector<std::vector<double>> & ys);

// Encoders stored as two consecutive logits-format blocks (F then G).
void save_surrogate(const std::string & path, const BilinearSurrogate & sur);
BilinearSurrogate load_surrogate(const std::string & path, double tau);

struct GradientParts {
    Matrix likelihood;  // includes beta
    Matrix prior;       // log-probability matrix of the denoiser
};

// U(z0; zt, y) = -beta * (l1 + l2 data fit) + log p_theta(z0; zt), with the
// denoiser context fixed per outer step via set_context.
class PosteriorPotential {
  public:
    PosteriorPotential(const ForwardOp & op, VocabSpec vocab, Measurement y,
                       PotentialConfig cfg, const Denoiser & denoiser,
                       const BilinearSurrogate * surrogate = nullptr);

    void set_context(TokenSequence zt, double t);
    // Scheduled likelihood weight; overrides the constructed value.
    void set_beta(double beta);
    const TokenSequence & zt() const { return zt_; }
    double t() const { return t_; }
    const DenoiserOutput & denoiser_output() const;
    const Matrix & log_probs() const;
    const PotentialConfig & config() const { return cfg_; }
    const Measurement & measurement() const { return y_; }
    const VocabSpec & vocab() const { return vocab_; }
    const ForwardOp & op() const { return *op_; }

    double value(const TokenSequence & z0) const;

    // Likelihood part of dU/dw at the hard one-hot of z0 (beta included)
    // plus the prior part, which is the log-prob matrix itself.
    GradientParts gradient_parts(const TokenSequence & z0) const;
    Matrix gradient_one_hot(const TokenSequence & z0) const;

    // Finite differences of the factorized prior under single-token edits;
    // the column of z0's own tokens is exactly zero.
    Matrix prior_deltas(const TokenSequence & z0) const;

    // beta-scaled d(likelihood term)/dx at the decoded z0.
    std::vector<double> likelihood_gradient_x(const TokenSequence & z0) const;

  private:
    void require_context() const;

    const ForwardOp * op_;
    VocabSpec vocab_;
    Measurement y_;
    PotentialConfig cfg_;
    const Denoiser * denoiser_;
    const BilinearSurrogate * surrogate_;

    bool has_context_ = false;
    TokenSequence zt_;
    double t_ = 1.0;
    DenoiserOutput output_;
    Matrix log_probs_;
};

}  // namespace dlps
