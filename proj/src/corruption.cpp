#include "dlps/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlps {

double NoiseSchedule::alpha(double t) const {
    if (t < 0.0 || t > 1.0) {
        throw std::out_of_range("NoiseSchedule: t must lie in [0, 1]");
    }
    double raw = 1.0;
    switch (kind) {
        case ScheduleKind::kLinear:
            raw = 1.0 - t;
            break;
        case ScheduleKind::kCosine: {
            const double c = std::cos(0.5 * std::numbers::pi * t);
            raw = c * c;
            break;
        }
        case ScheduleKind::kLogLinear:
            if (floor <= 0.0) {
                throw std::invalid_argument("NoiseSchedule: log-linear needs floor > 0");
            }
            raw = std::exp(t * std::log(floor));
            break;
    }
    return std::clamp(raw, floor, 1.0);
}

CorruptionProcess::CorruptionProcess(ProcessKind kind, NoiseSchedule schedule, VocabSpec vocab)
    : kind_(kind), schedule_(schedule), vocab_(std::move(vocab)) {
    if (kind_ == ProcessKind::kGeneric) {
        throw std::invalid_argument("CorruptionProcess: generic kind needs step matrices");
    }
    if (kind_ == ProcessKind::kMasked && !vocab_.mask_index) {
        throw std::invalid_argument("CorruptionProcess: masked kind requires a mask token");
    }
    if (kind_ == ProcessKind::kUniform && vocab_.mask_index) {
        throw std::invalid_argument("CorruptionProcess: uniform kind forbids a mask token");
    }
    model_vocab_ = vocab_.model_vocab();
}

CorruptionProcess::CorruptionProcess(std::vector<Matrix> step_matrices, VocabSpec vocab)
    : kind_(ProcessKind::kGeneric), vocab_(std::move(vocab)),
      step_matrices_(std::move(step_matrices)) {
    if (step_matrices_.empty()) {
        throw std::invalid_argument("CorruptionProcess: empty step matrix list");
    }
    model_vocab_ = static_cast<int>(step_matrices_.front().rows());
    for (const Matrix & q : step_matrices_) {
        if (q.rows() != q.cols() || static_cast<int>(q.rows()) != model_vocab_) {
            throw std::invalid_argument("CorruptionProcess: step matrices must share a square shape");
        }
        for (std::size_t i = 0; i < q.rows(); ++i) {
            double total = 0.0;
            for (double v : q.row(i)) {
                if (v < 0.0) {
                    throw std::invalid_argument("CorruptionProcess: negative transition probability");
                }
                total += v;
            }
            if (std::fabs(total - 1.0) > 1e-12) {
                throw std::invalid_argument("CorruptionProcess: transition row does not sum to 1");
            }
        }
    }
    // Prefix products Q1, Q1*Q2, ...
    cumulative_cache_.reserve(step_matrices_.size());
    Matrix acc = step_matrices_.front();
    cumulative_cache_.push_back(acc);
    for (std::size_t i = 1; i < step_matrices_.size(); ++i) {
        acc = acc * step_matrices_[i];
        cumulative_cache_.push_back(acc);
    }
}

void CorruptionProcess::check_time(double t) const {
    if (t < 0.0 || t > 1.0) {
        throw std::out_of_range("CorruptionProcess: time must lie in [0, 1]");
    }
}

void CorruptionProcess::check_clean(const TokenSequence & z) const {
    for (int tok : z) {
        if (tok < 0 || tok >= vocab_.k) {
            throw std::out_of_range("CorruptionProcess: clean token out of range");
        }
    }
}

int CorruptionProcess::grid_index(double t) const {
    const double steps = static_cast<double>(step_matrices_.size());
    const double pos = t * steps;
    const int idx = static_cast<int>(std::llround(pos));
    if (std::fabs(pos - idx) > 1e-9) {
        throw std::invalid_argument("CorruptionProcess: generic kind requires grid-aligned times");
    }
    return idx;
}

Matrix CorruptionProcess::cumulative_matrix(double t) const {
    check_time(t);
    const std::size_t n = static_cast<std::size_t>(model_vocab_);
    if (kind_ == ProcessKind::kGeneric) {
        const int idx = grid_index(t);
        if (idx == 0) {
            Matrix eye(n, n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                eye(i, i) = 1.0;
            }
            return eye;
        }
        return cumulative_cache_[static_cast<std::size_t>(idx - 1)];
    }
    const double a = schedule_.alpha(t);
    Matrix q(n, n, 0.0);
    if (kind_ == ProcessKind::kMasked) {
        const std::size_t mask = static_cast<std::size_t>(*vocab_.mask_index);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == mask) {
                q(i, mask) = 1.0;  // absorbing
            } else {
                q(i, i) = a;
                q(i, mask) = 1.0 - a;
            }
        }
    } else {
        const double off = (1.0 - a) / static_cast<double>(vocab_.k);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                q(i, j) = off + (i == j ? a : 0.0);
            }
        }
    }
    return q;
}

Matrix CorruptionProcess::conditional_matrix(double s, double t) const {
    check_time(s);
    check_time(t);
    if (s > t) {
        throw std::invalid_argument("conditional_matrix: requires s <= t");
    }
    if (kind_ == ProcessKind::kGeneric) {
        const int si = grid_index(s);
        const int ti = grid_index(t);
        const std::size_t n = static_cast<std::size_t>(model_vocab_);
        Matrix acc(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            acc(i, i) = 1.0;
        }
        for (int step = si + 1; step <= ti; ++step) {
            acc = acc * step_matrices_[static_cast<std::size_t>(step - 1)];
        }
        return acc;
    }
    const double a_s = schedule_.alpha(s);
    const double a_t = schedule_.alpha(t);
    if (a_s <= 0.0) {
        throw std::domain_error("conditional_matrix: alpha(s) vanished");
    }
    const double a_cond = a_t / a_s;
    const std::size_t n = static_cast<std::size_t>(model_vocab_);
    Matrix q(n, n, 0.0);
    if (kind_ == ProcessKind::kMasked) {
        const std::size_t mask = static_cast<std::size_t>(*vocab_.mask_index);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == mask) {
                q(i, mask) = 1.0;
            } else {
                q(i, i) = a_cond;
                q(i, mask) = 1.0 - a_cond;
            }
        }
    } else {
        const double off = (1.0 - a_cond) / static_cast<double>(vocab_.k);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                q(i, j) = off + (i == j ? a_cond : 0.0);
            }
        }
    }
    return q;
}

Matrix CorruptionProcess::marginal_kernel(const TokenSequence & z0, double t) const {
    check_time(t);
    check_clean(z0);
    const Matrix q = cumulative_matrix(t);
    Matrix rows(z0.size(), static_cast<std::size_t>(model_vocab_), 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        auto src = q.row(static_cast<std::size_t>(z0[pos]));
        std::copy(src.begin(), src.end(), rows.row(pos).begin());
    }
    return rows;
}

TokenSequence CorruptionProcess::sample_forward(const TokenSequence & z0, double t,
                                                Rng & rng) const {
    const Matrix rows = marginal_kernel(z0, t);
    TokenSequence zt(z0.size());
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        zt[pos] = static_cast<int>(rng.categorical(rows.row(pos)));
    }
    return zt;
}

Matrix CorruptionProcess::posterior_kernel(const TokenSequence & zt, const TokenSequence & z0,
                                           double s, double t) const {
    if (!(s < t)) {
        throw std::invalid_argument("posterior_kernel: requires s < t");
    }
    check_clean(z0);
    if (zt.size() != z0.size()) {
        throw std::invalid_argument("posterior_kernel: length mismatch");
    }
    const Matrix m_s = cumulative_matrix(s);
    const Matrix m_cond = conditional_matrix(s, t);
    const std::size_t n = static_cast<std::size_t>(model_vocab_);
    Matrix rows(z0.size(), n, 0.0);
    for (std::size_t pos = 0; pos < z0.size(); ++pos) {
        if (zt[pos] < 0 || zt[pos] >= model_vocab_) {
            throw std::out_of_range("posterior_kernel: noisy token out of range");
        }
        const std::size_t from = static_cast<std::size_t>(z0[pos]);
        const std::size_t to = static_cast<std::size_t>(zt[pos]);
        double total = 0.0;
        for (std::size_t mid = 0; mid < n; ++mid) {
            const double w = m_cond(mid, to) * m_s(from, mid);
            rows(pos, mid) = w;
            total += w;
        }
        if (total <= 0.0) {
            throw std::domain_error("posterior_kernel: z_t unreachable from z_0");
        }
        for (std::size_t mid = 0; mid < n; ++mid) {
            rows(pos, mid) /= total;
        }
    }
    return rows;
}

TokenSequence CorruptionProcess::renoise(const TokenSequence & z0, double s, Rng & rng) const {
    return sample_forward(z0, s, rng);
}

}  // namespace dlps
