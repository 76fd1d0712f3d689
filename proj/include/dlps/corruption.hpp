#pragma once

#include <vector>

#include "dlps/matrix.hpp"
#include "dlps/rng.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

enum class ScheduleKind { kLinear, kCosine, kLogLinear };

// alpha(t) is the per-token survival probability; monotone non-increasing
// on [0, 1], clamped to [floor, 1] so conditionals alpha_t / alpha_s stay
// finite.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::kCosine;
    double floor = 1e-3;

    double alpha(double t) const;
};

enum class ProcessKind { kMasked, kUniform, kGeneric };

// Forward corruption chain together with its Bayes inversion. Generic-kind
// matrices are defined on a uniform step grid t_r = r / steps and are not
// interpolated between grid points.
class CorruptionProcess {
  public:
    CorruptionProcess(ProcessKind kind, NoiseSchedule schedule, VocabSpec vocab);
    // Generic kind: one row-stochastic K' x K' matrix per step.
    CorruptionProcess(std::vector<Matrix> step_matrices, VocabSpec vocab);

    ProcessKind kind() const { return kind_; }
    const VocabSpec & vocab() const { return vocab_; }
    const NoiseSchedule & schedule() const { return schedule_; }
    int model_vocab() const { return model_vocab_; }

    // Q-bar(t): marginal transition kernel from time 0 to t.
    Matrix cumulative_matrix(double t) const;
    // Q-bar(s -> t): conditional kernel between two times, s <= t.
    Matrix conditional_matrix(double s, double t) const;

    // Per-position categorical rows of q(z_t | z_0).
    Matrix marginal_kernel(const TokenSequence & z0, double t) const;
    TokenSequence sample_forward(const TokenSequence & z0, double t, Rng & rng) const;

    // Per-position rows of q(z_s | z_t, z_0), s < t.
    Matrix posterior_kernel(const TokenSequence & zt, const TokenSequence & z0,
                            double s, double t) const;

    // z_s ~ q(z_s | z0); returns a refined clean sample to the diffusion
    // trajectory at noise level s.
    TokenSequence renoise(const TokenSequence & z0, double s, Rng & rng) const;

  private:
    void check_time(double t) const;
    void check_clean(const TokenSequence & z) const;
    int grid_index(double t) const;

    ProcessKind kind_;
    NoiseSchedule schedule_;
    VocabSpec vocab_;
    int model_vocab_;
    std::vector<Matrix> step_matrices_;      // generic kind only
    std::vector<Matrix> cumulative_cache_;   // generic kind only
};

}  // namespace dlps
