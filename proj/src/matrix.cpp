#include "dlps/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlps {

Matrix operator+(const Matrix & a, const Matrix & b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("matrix add: shape mismatch");
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

Matrix operator*(const Matrix & a, const Matrix & b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matrix mul: inner dimension mismatch");
    }
    Matrix out(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        hi = std::max(hi, x);
    }
    if (!std::isfinite(hi)) {
        return hi;  // empty or all -inf (or +inf, which propagates)
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - hi);
    }
    return hi + std::log(acc);
}

void log_normalize_row(std::span<double> row) {
    const double lse = log_sum_exp(row);
    for (double & x : row) {
        x -= lse;
    }
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
    std::vector<double> out(logits.size());
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : logits) {
        hi = std::max(hi, x / tau);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / tau - hi);
        total += out[i];
    }
    for (double & p : out) {
        p /= total;
    }
    return out;
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

std::vector<double> ridge_least_squares(const Matrix & a, std::span<const double> b,
                                        double ridge) {
    if (a.rows() != b.size()) {
        throw std::invalid_argument("ridge_least_squares: size mismatch");
    }
    const std::size_t d = a.cols();
    Matrix normal(d, d, 0.0);
    std::vector<double> rhs(d, 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t p = 0; p < d; ++p) {
            rhs[p] += a(i, p) * b[i];
            for (std::size_t q = 0; q < d; ++q) {
                normal(p, q) += a(i, p) * a(i, q);
            }
        }
    }
    for (std::size_t p = 0; p < d; ++p) {
        normal(p, p) += ridge;
    }
    // Gaussian elimination with partial pivoting; d is tiny.
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) {
        perm[i] = i;
    }
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r) {
            if (std::fabs(normal(r, col)) > std::fabs(normal(piv, col))) {
                piv = r;
            }
        }
        if (piv != col) {
            for (std::size_t c = 0; c < d; ++c) {
                std::swap(normal(col, c), normal(piv, c));
            }
            std::swap(rhs[col], rhs[piv]);
        }
        const double diag = normal(col, col);
        if (diag == 0.0) {
            throw std::domain_error("ridge_least_squares: singular system");
        }
        for (std::size_t r = col + 1; r < d; ++r) {
            const double f = normal(r, col) / diag;
            if (f == 0.0) {
                continue;
            }
            for (std::size_t c = col; c < d; ++c) {
                normal(r, c) -= f * normal(col, c);
            }
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(d, 0.0);
    for (std::size_t ri = d; ri-- > 0;) {
        double acc = rhs[ri];
        for (std::size_t c = ri + 1; c < d; ++c) {
            acc -= normal(ri, c) * x[c];
        }
        x[ri] = acc / normal(ri, ri);
    }
    return x;
}

}  // namespace dlps
