#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dlps {

// Dense row-major matrix of doubles. Small sizes only (L x K proposal
// tables, K x K transition kernels), so no BLAS backing.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double & operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return { data_.data() + r * cols_, cols_ }; }
    std::span<const double> row(std::size_t r) const { return { data_.data() + r * cols_, cols_ }; }

    std::vector<double> & data() { return data_; }
    const std::vector<double> & data() const { return data_; }

    bool same_shape(const Matrix & other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix & a, const Matrix & b);
Matrix operator*(const Matrix & a, const Matrix & b);

// log(sum(exp(v))) with max subtraction; -inf for empty/all -inf input.
double log_sum_exp(std::span<const double> v);

// In-place row -> row - logsumexp(row).
void log_normalize_row(std::span<double> row);

// softmax(row / tau) into a fresh vector.
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

// Shannon entropy of a probability row (natural log).
double entropy(std::span<const double> probs);

// Solves the small SPD-ish system (A^T A + ridge I) x = A^T b.
std::vector<double> ridge_least_squares(const Matrix & a, std::span<const double> b,
                                        double ridge = 1e-12);

}  // namespace dlps
