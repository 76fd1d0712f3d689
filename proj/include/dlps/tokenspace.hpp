#pragma once

#include <optional>
#include <vector>

#include "dlps/matrix.hpp"

namespace dlps {

// Token values are 0-based. Clean tokens live in [0, K); a masked process
// appends its absorbing token at index K.
using TokenSequence = std::vector<int>;

struct VocabSpec {
    int k = 2;                          // visible vocabulary size
    std::optional<int> mask_index;      // == k when present
    std::vector<double> intensities;    // strictly increasing, size k

    static VocabSpec make(int k, bool masked = false);
    static VocabSpec make(int k, bool masked, std::vector<double> intensities);

    int model_vocab() const { return k + (mask_index ? 1 : 0); }
    double intensity(int token) const { return intensities[static_cast<std::size_t>(token)]; }
    // Mean intensity change per unit index.
    double intensity_step() const;
};

// L x K matrix with nonnegative rows summing to 1; exactly one-hot rows
// when it represents a hard sequence.
using OneHotSequence = Matrix;

struct Codebook {
    Matrix entries;  // K x d

    int size() const { return static_cast<int>(entries.rows()); }
    int dim() const { return static_cast<int>(entries.cols()); }
    std::span<const double> entry(int token) const {
        return entries.row(static_cast<std::size_t>(token));
    }
};

Codebook make_codebook(Matrix entries);

// Intensity values as a 1-d codebook; makes the embedding proposal
// coincide with the index-space geometry.
Codebook intensity_codebook(const VocabSpec & vocab);

OneHotSequence to_one_hot(const TokenSequence & z, const VocabSpec & vocab);
TokenSequence from_one_hot(const OneHotSequence & w);

std::vector<double> decode(const TokenSequence & z, const VocabSpec & vocab);
std::vector<double> decode_relaxed(const OneHotSequence & w, const VocabSpec & vocab);

// Throws unless every row is nonnegative and sums to 1 within tol.
void validate_one_hot(const OneHotSequence & w, double tol = 1e-9);

}  // namespace dlps
