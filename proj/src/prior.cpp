#include "dlps/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dlps {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

Matrix DenoiserOutput::log_probs() const {
    Matrix out = logits;
    for (std::size_t pos = 0; pos < out.rows(); ++pos) {
        log_normalize_row(out.row(pos));
    }
    return out;
}

double Denoiser::exact_joint_log_prob(const TokenSequence &, const TokenSequence &,
                                      double) const {
    throw std::logic_error("this denoiser exposes no exact joint");
}

double joint_log_prob(const Denoiser & denoiser, const DenoiserOutput & output,
                      const TokenSequence & z0, const TokenSequence & zt, double t,
                      PriorMode mode) {
    if (mode == PriorMode::kExact) {
        if (!denoiser.has_exact_joint()) {
            throw std::logic_error("joint_log_prob: exact mode unsupported by this denoiser");
        }
        return denoiser.exact_joint_log_prob(z0, zt, t);
    }
    const Matrix lp = output.log_probs();
    double total = 0.0;
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        total += lp(pos, static_cast<std::size_t>(z0[pos]));
    }
    return total;
}

TokenSequence sample_clean(const DenoiserOutput & output, Rng & rng, CleanSampleMode mode) {
    TokenSequence z(output.logits.rows());
    for (std::size_t pos = 0; pos < z.size(); ++pos) {
        auto row = output.logits.row(pos);
        if (mode == CleanSampleMode::kArgmax) {
            std::size_t best = 0;
            for (std::size_t t = 1; t < row.size(); ++t) {
                if (row[t] > row[best]) {
                    best = t;
                }
            }
            z[pos] = static_cast<int>(best);
        } else {
            z[pos] = static_cast<int>(rng.categorical_from_logits(row));
        }
    }
    return z;
}

EmpiricalBayesDenoiser::EmpiricalBayesDenoiser(std::vector<TokenSequence> dataset,
                                               const CorruptionProcess & process,
                                               double smoothing,
                                               std::vector<double> prior_weights)
    : dataset_(std::move(dataset)), process_(&process), smoothing_(smoothing) {
    if (dataset_.empty()) {
        throw std::runtime_error("EmpiricalBayesDenoiser: empty dataset");
    }
    if (smoothing_ < 0.0 || smoothing_ > 1.0) {
        throw std::invalid_argument("EmpiricalBayesDenoiser: smoothing must lie in [0, 1]");
    }
    length_ = dataset_.front().size();
    const int k = process_->vocab().k;
    for (const TokenSequence & item : dataset_) {
        if (item.size() != length_) {
            throw std::invalid_argument("EmpiricalBayesDenoiser: items must share a length");
        }
        for (int tok : item) {
            if (tok < 0 || tok >= k) {
                throw std::invalid_argument("EmpiricalBayesDenoiser: items must be clean");
            }
        }
    }
    if (prior_weights.empty()) {
        prior_weights.assign(dataset_.size(), 1.0 / static_cast<double>(dataset_.size()));
    }
    if (prior_weights.size() != dataset_.size()) {
        throw std::invalid_argument("EmpiricalBayesDenoiser: weight count mismatch");
    }
    double total = 0.0;
    for (double w : prior_weights) {
        if (w < 0.0) {
            throw std::invalid_argument("EmpiricalBayesDenoiser: negative prior weight");
        }
        total += w;
    }
    if (std::fabs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("EmpiricalBayesDenoiser: prior weights must sum to 1");
    }
    prior_weights_ = prior_weights;
    log_prior_weights_.resize(prior_weights.size());
    for (std::size_t i = 0; i < prior_weights.size(); ++i) {
        log_prior_weights_[i] = prior_weights[i] > 0.0 ? std::log(prior_weights[i]) : kNegInf;
    }
}

int EmpiricalBayesDenoiser::vocab_size() const {
    return process_->vocab().k;
}

std::vector<double> EmpiricalBayesDenoiser::item_log_posterior(const TokenSequence & zt,
                                                               double t) const {
    const int kp = process_->model_vocab();
    for (int tok : zt) {
        if (tok < 0 || tok >= kp) {
            throw std::out_of_range("EmpiricalBayesDenoiser: noisy token out of range");
        }
    }
    const Matrix q = process_->cumulative_matrix(t);
    std::vector<double> lw(dataset_.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
        double acc = log_prior_weights_[i];
        for (std::size_t pos = 0; pos < zt.size(); ++pos) {
            const double p = q(static_cast<std::size_t>(dataset_[i][pos]),
                               static_cast<std::size_t>(zt[pos]));
            acc += p > 0.0 ? std::log(p) : kNegInf;
        }
        lw[i] = acc;
    }
    const double lse = log_sum_exp(lw);
    if (!std::isfinite(lse)) {
        throw std::domain_error("EmpiricalBayesDenoiser: every item weight vanished");
    }
    for (double & v : lw) {
        v -= lse;
    }
    return lw;
}

DenoiserOutput EmpiricalBayesDenoiser::denoise(const TokenSequence & zt, double t) const {
    const std::vector<double> lw = item_log_posterior(zt, t);
    const int k = process_->vocab().k;
    Matrix probs(zt.size(), static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
        const double w = std::exp(lw[i]);
        if (w == 0.0) {
            continue;
        }
        for (std::size_t pos = 0; pos < zt.size(); ++pos) {
            probs(pos, static_cast<std::size_t>(dataset_[i][pos])) += w;
        }
    }
    const double unif = smoothing_ / static_cast<double>(k);
    Matrix logits(zt.size(), static_cast<std::size_t>(k), 0.0);
    for (std::size_t pos = 0; pos < zt.size(); ++pos) {
        for (std::size_t tok = 0; tok < static_cast<std::size_t>(k); ++tok) {
            const double p = (1.0 - smoothing_) * probs(pos, tok) + unif;
            logits(pos, tok) = p > 0.0 ? std::log(p) : kNegInf;
        }
    }
    return DenoiserOutput{ std::move(logits) };
}

double EmpiricalBayesDenoiser::exact_joint_log_prob(const TokenSequence & z0,
                                                    const TokenSequence & zt,
                                                    double t) const {
    if (z0.size() != length_) {
        throw std::invalid_argument("exact_joint_log_prob: length mismatch");
    }
    const std::vector<double> lw = item_log_posterior(zt, t);
    double on_support = 0.0;
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
        if (dataset_[i] == z0) {
            on_support += std::exp(lw[i]);
        }
    }
    const int k = process_->vocab().k;
    const double log_uniform =
        -static_cast<double>(length_) * std::log(static_cast<double>(k));
    const double mass = (1.0 - smoothing_) * on_support + smoothing_ * std::exp(log_uniform);
    return mass > 0.0 ? std::log(mass) : kNegInf;
}

ExternalLogitsDenoiser::ExternalLogitsDenoiser(std::vector<Matrix> per_step_logits)
    : table_(std::move(per_step_logits)) {
    if (table_.empty()) {
        throw std::runtime_error("ExternalLogitsDenoiser: empty table");
    }
    for (const Matrix & m : table_) {
        if (!m.same_shape(table_.front())) {
            throw std::invalid_argument("ExternalLogitsDenoiser: inconsistent step shapes");
        }
    }
}

DenoiserOutput ExternalLogitsDenoiser::denoise(const TokenSequence & zt, double t) const {
    if (zt.size() != table_.front().rows()) {
        throw std::invalid_argument("ExternalLogitsDenoiser: sequence length mismatch");
    }
    const double steps = static_cast<double>(table_.size());
    long idx = std::llround(t * steps) - 1;
    idx = std::clamp<long>(idx, 0, static_cast<long>(table_.size()) - 1);
    return DenoiserOutput{ table_[static_cast<std::size_t>(idx)] };
}

int ExternalLogitsDenoiser::vocab_size() const {
    return static_cast<int>(table_.front().cols());
}

namespace {

void put_u32(std::ostream & os, std::uint32_t v) {
    unsigned char b[4] = { static_cast<unsigned char>(v & 0xFF),
                           static_cast<unsigned char>((v >> 8) & 0xFF),
                           static_cast<unsigned char>((v >> 16) & 0xFF),
                           static_cast<unsigned char>((v >> 24) & 0xFF) };
    os.write(reinterpret_cast<const char *>(b), 4);
}

std::uint32_t get_u32(std::istream & is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char *>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream & os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32(std::istream & is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_logits_file(const std::string & path, const std::vector<Matrix> & per_step) {
    if (per_step.empty()) {
        throw std::invalid_argument("write_logits_file: nothing to write");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("write_logits_file: cannot open " + path);
    }
    os.write("DLPS", 4);
    const unsigned char version = 1;
    os.write(reinterpret_cast<const char *>(&version), 1);
    put_u32(os, static_cast<std::uint32_t>(per_step.size()));
    put_u32(os, static_cast<std::uint32_t>(per_step.front().rows()));
    put_u32(os, static_cast<std::uint32_t>(per_step.front().cols()));
    for (const Matrix & m : per_step) {
        if (!m.same_shape(per_step.front())) {
            throw std::invalid_argument("write_logits_file: inconsistent step shapes");
        }
        for (double v : m.data()) {
            put_f32(os, static_cast<float>(v));
        }
    }
    if (!os) {
        throw std::runtime_error("write_logits_file: write failed for " + path);
    }
}

std::vector<Matrix> read_logits_file(const std::string & path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("read_logits_file: cannot open " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DLPS", 4) != 0) {
        throw std::runtime_error("read_logits_file: bad magic in " + path);
    }
    unsigned char version = 0;
    is.read(reinterpret_cast<char *>(&version), 1);
    if (!is || version != 1) {
        throw std::runtime_error("read_logits_file: unsupported version in " + path);
    }
    const std::uint32_t steps = get_u32(is);
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    if (!is || steps == 0 || rows == 0 || cols == 0) {
        throw std::runtime_error("read_logits_file: bad header in " + path);
    }
    std::vector<Matrix> out;
    out.reserve(steps);
    for (std::uint32_t s = 0; s < steps; ++s) {
        Matrix m(rows, cols, 0.0);
        for (double & v : m.data()) {
            v = static_cast<double>(get_f32(is));
        }
        if (!is) {
            throw std::runtime_error("read_logits_file: truncated data in " + path);
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace dlps
