#include "dlps/tokenspace.hpp"

#include <cmath>
#include <stdexcept>

namespace dlps {

VocabSpec VocabSpec::make(int k, bool masked) {
    std::vector<double> intens(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        intens[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(k - 1);
    }
    return make(k, masked, std::move(intens));
}

VocabSpec VocabSpec::make(int k, bool masked, std::vector<double> intensities) {
    if (k < 2) {
        throw std::invalid_argument("VocabSpec: K must be at least 2");
    }
    if (intensities.size() != static_cast<std::size_t>(k)) {
        throw std::invalid_argument("VocabSpec: intensity map size must equal K");
    }
    for (std::size_t i = 1; i < intensities.size(); ++i) {
        if (!(intensities[i] > intensities[i - 1])) {
            throw std::invalid_argument("VocabSpec: intensity map must be strictly increasing");
        }
    }
    VocabSpec v;
    v.k = k;
    v.intensities = std::move(intensities);
    if (masked) {
        v.mask_index = k;
    }
    return v;
}

double VocabSpec::intensity_step() const {
    return (intensities.back() - intensities.front()) / static_cast<double>(k - 1);
}

Codebook make_codebook(Matrix entries) {
    if (entries.rows() == 0 || entries.cols() == 0) {
        throw std::invalid_argument("Codebook: entries must be non-empty");
    }
    for (double v : entries.data()) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("Codebook: entries must be finite");
        }
    }
    return Codebook{ std::move(entries) };
}

Codebook intensity_codebook(const VocabSpec & vocab) {
    Matrix entries(static_cast<std::size_t>(vocab.k), 1);
    for (int t = 0; t < vocab.k; ++t) {
        entries(static_cast<std::size_t>(t), 0) = vocab.intensity(t);
    }
    return make_codebook(std::move(entries));
}

OneHotSequence to_one_hot(const TokenSequence & z, const VocabSpec & vocab) {
    OneHotSequence w(z.size(), static_cast<std::size_t>(vocab.k), 0.0);
    for (std::size_t pos = 0; pos < z.size(); ++pos) {
        if (z[pos] < 0 || z[pos] >= vocab.k) {
            throw std::out_of_range("to_one_hot: token out of range");
        }
        w(pos, static_cast<std::size_t>(z[pos])) = 1.0;
    }
    return w;
}

TokenSequence from_one_hot(const OneHotSequence & w) {
    validate_one_hot(w);
    TokenSequence z(w.rows());
    for (std::size_t pos = 0; pos < w.rows(); ++pos) {
        auto row = w.row(pos);
        std::size_t best = 0;
        for (std::size_t t = 1; t < row.size(); ++t) {
            if (row[t] > row[best]) {  // ties stay at the lowest index
                best = t;
            }
        }
        z[pos] = static_cast<int>(best);
    }
    return z;
}

std::vector<double> decode(const TokenSequence & z, const VocabSpec & vocab) {
    std::vector<double> x(z.size());
    for (std::size_t pos = 0; pos < z.size(); ++pos) {
        if (vocab.mask_index && z[pos] == *vocab.mask_index) {
            throw std::domain_error("decode: mask token has no intensity");
        }
        if (z[pos] < 0 || z[pos] >= vocab.k) {
            throw std::out_of_range("decode: token out of range");
        }
        x[pos] = vocab.intensity(z[pos]);
    }
    return x;
}

std::vector<double> decode_relaxed(const OneHotSequence & w, const VocabSpec & vocab) {
    validate_one_hot(w);
    if (w.cols() != static_cast<std::size_t>(vocab.k)) {
        throw std::invalid_argument("decode_relaxed: width must equal K");
    }
    std::vector<double> x(w.rows(), 0.0);
    for (std::size_t pos = 0; pos < w.rows(); ++pos) {
        auto row = w.row(pos);
        for (std::size_t t = 0; t < row.size(); ++t) {
            x[pos] += row[t] * vocab.intensity(static_cast<int>(t));
        }
    }
    return x;
}

void validate_one_hot(const OneHotSequence & w, double tol) {
    for (std::size_t pos = 0; pos < w.rows(); ++pos) {
        double total = 0.0;
        for (double v : w.row(pos)) {
            if (v < 0.0) {
                throw std::invalid_argument("one-hot row has a negative weight");
            }
            total += v;
        }
        if (std::fabs(total - 1.0) > tol) {
            throw std::invalid_argument("one-hot row does not sum to 1");
        }
    }
}

}  // namespace dlps
