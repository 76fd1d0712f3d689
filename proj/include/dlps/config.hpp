#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dlps/corruption.hpp"
#include "dlps/potential.hpp"
#include "dlps/sampler.hpp"
#include "dlps/synthetic.hpp"

namespace dlps {

// Line-oriented "[section]" / "key = value" text. Every key must be
// consumed by the typed readers; leftovers fail the load.
class KeyValueConfig {
  public:
    static KeyValueConfig parse_file(const std::string & path);
    static KeyValueConfig parse_text(const std::string & text, const std::string & origin);

    void set(const std::string & key, const std::string & value);
    bool has(const std::string & key) const;

    std::string get_string(const std::string & key, const std::string & fallback);
    double get_double(const std::string & key, double fallback);
    int get_int(const std::string & key, int fallback);
    std::uint64_t get_u64(const std::string & key, std::uint64_t fallback);
    bool get_bool(const std::string & key, bool fallback);

    // Throws if any key was never read.
    void finish() const;

    const std::map<std::string, std::string> & entries() const { return entries_; }

  private:
    std::string take(const std::string & key);

    std::string origin_ = "<inline>";
    std::map<std::string, std::string> entries_;
    std::map<std::string, bool> consumed_;
};

enum class Difficulty { kNone, kEasy, kMedium, kHard };

struct OperatorConfig {
    std::string kind = "identity";
    Difficulty tier = Difficulty::kNone;
    double fraction_hidden = 0.7;
    std::string mask_file;
    int box_x = 0, box_y = 0, box_w = 0, box_h = 0;
    int pair_count = 16;
    int blur_taps = 61;
    double blur_sigma = 3.0;
    std::string kernel_file;
    int factor = 4;
    double sigma_y = 0.05;
};

struct ExperimentConfig {
    // data
    std::string dataset_manifest;  // empty means synthesize
    SyntheticSpec synthetic;
    int n_images = 1;

    // process
    ProcessKind process_kind = ProcessKind::kUniform;
    ScheduleKind schedule_kind = ScheduleKind::kCosine;
    double schedule_floor = 1e-3;

    // prior
    std::string prior_kind = "empirical_bayes";
    double smoothing = 1e-6;
    std::string logits_file;

    OperatorConfig op;

    // potential
    double lambda1 = 0.0;
    double lambda2 = -1.0;  // < 0 means derive 1 / (2 sigma^2)
    PriorMode prior_mode = PriorMode::kFactorized;
    LikelihoodMode likelihood_mode = LikelihoodMode::kExplicit;
    double surrogate_tau = 1.0;
    std::string surrogate_file;

    SamplerConfig sampler;

    // run
    int n_chains = 1;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    double effective_sigma() const;
    double effective_lambda2() const;
    double effective_fraction_hidden() const;
    int effective_box_side(int height, int width) const;

    static ExperimentConfig from_config(KeyValueConfig & kv);
    void echo(const std::string & path) const;
};

}  // namespace dlps
