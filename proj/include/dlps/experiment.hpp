#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlps/config.hpp"
#include "dlps/metrics.hpp"
#include "dlps/oracle.hpp"
#include "dlps/sampler.hpp"

namespace dlps {

struct MetricRow {
    int image = 0;
    int chain = 0;
    double psnr = 0.0;
    double token_accuracy = 0.0;
    double ssim = 0.0;  // nan when the image is too small
    double iou = 0.0;   // nan for non-binary vocabularies
    double f1 = 0.0;
};

struct MetricAggregate {
    double mean = 0.0;
    double std_pooled = 0.0;        // over all (image, chain) rows
    double std_across_images = 0.0; // over per-image means
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    MetricAggregate psnr;
    MetricAggregate token_accuracy;
    MetricAggregate ssim;
    MetricAggregate iou;
    MetricAggregate f1;
    double wall_time_seconds = 0.0;

    void aggregate();
};

// Text measurement container used for the simulate -> sample handoff.
void write_measurement(const std::string & path, const Measurement & m);
Measurement read_measurement(const std::string & path);

// Deterministic per-image operator built from the experiment seed.
std::unique_ptr<ForwardOp> make_operator_for_image(const ExperimentConfig & cfg,
                                                   const ImageGrid & grid, int image_index);

VocabSpec vocab_for(const ExperimentConfig & cfg);

std::unique_ptr<Denoiser> make_denoiser(const ExperimentConfig & cfg,
                                        const std::vector<TokenSequence> & dataset,
                                        const CorruptionProcess & process);

// Stage entry points shared by the CLI subcommands.
void stage_simulate(const ExperimentConfig & cfg);
void stage_sample(const ExperimentConfig & cfg);
MetricsReport stage_evaluate(const ExperimentConfig & cfg);

// simulate + sample + evaluate back to back on the same output directory.
MetricsReport run_experiment(const ExperimentConfig & cfg);

void write_metrics_csv(const std::string & path, const MetricsReport & report);
MetricsReport read_metrics_csv(const std::string & path);
void write_summary(const std::string & path, const MetricsReport & report);

}  // namespace dlps
