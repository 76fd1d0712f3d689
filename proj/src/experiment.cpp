#include "dlps/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dlps/image_io.hpp"
#include "dlps/prior.hpp"

namespace dlps {

namespace {

// Substream purposes for experiment-level randomness.
constexpr std::uint64_t kStreamMask = 100;
constexpr std::uint64_t kStreamNoise = 101;
constexpr std::uint64_t kStreamChain = 102;
constexpr std::uint64_t kStreamPairs = 103;
constexpr std::uint64_t kStreamData = 104;

std::string image_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img%03d", index);
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Dataset load_or_make_dataset(const ExperimentConfig & cfg, const VocabSpec & vocab) {
    if (!cfg.dataset_manifest.empty()) {
        return load_dataset(cfg.dataset_manifest, vocab);
    }
    Rng rng = substream(cfg.seed, { kStreamData });
    return make_synthetic_dataset(cfg.synthetic, rng);
}

std::vector<std::pair<int, int>> random_pairs(int count, int length, Rng & rng) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const int i = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(length)));
        int j = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(length - 1)));
        if (j >= i) {
            j += 1;
        }
        pairs.emplace_back(i, j);
    }
    return pairs;
}

double mean_of(const std::vector<double> & v) {
    if (v.empty()) {
        return std::nan("");
    }
    double acc = 0.0;
    for (double x : v) {
        acc += x;
    }
    return acc / static_cast<double>(v.size());
}

double std_of(const std::vector<double> & v, double mean) {
    if (v.size() < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

MetricAggregate aggregate_metric(const std::vector<MetricRow> & rows,
                                 double MetricRow::* field) {
    std::vector<double> pooled;
    std::map<int, std::vector<double>> per_image;
    for (const MetricRow & row : rows) {
        const double v = row.*field;
        if (std::isnan(v)) {
            continue;
        }
        pooled.push_back(v);
        per_image[row.image].push_back(v);
    }
    MetricAggregate agg;
    agg.mean = mean_of(pooled);
    agg.std_pooled = std_of(pooled, agg.mean);
    std::vector<double> image_means;
    image_means.reserve(per_image.size());
    for (const auto & [_, vals] : per_image) {
        image_means.push_back(mean_of(vals));
    }
    agg.std_across_images = std_of(image_means, mean_of(image_means));
    return agg;
}

}  // namespace

void MetricsReport::aggregate() {
    psnr = aggregate_metric(rows, &MetricRow::psnr);
    token_accuracy = aggregate_metric(rows, &MetricRow::token_accuracy);
    ssim = aggregate_metric(rows, &MetricRow::ssim);
    iou = aggregate_metric(rows, &MetricRow::iou);
    f1 = aggregate_metric(rows, &MetricRow::f1);
}

void write_measurement(const std::string & path, const Measurement & m) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("write_measurement: cannot open " + path);
    }
    os << "DLPS-MEASUREMENT 1\n";
    os << "m " << m.values.size() << "\n";
    os << "sigma " << format_double(m.sigma) << "\n";
    os << "values\n";
    for (double v : m.values) {
        os << format_double(v) << "\n";
    }
}

Measurement read_measurement(const std::string & path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("read_measurement: cannot open " + path);
    }
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "DLPS-MEASUREMENT" || version != 1) {
        throw std::runtime_error("read_measurement: bad header in " + path);
    }
    std::string key;
    std::size_t m = 0;
    Measurement meas;
    while (is >> key) {
        if (key == "m") {
            is >> m;
        } else if (key == "sigma") {
            is >> meas.sigma;
        } else if (key == "values") {
            break;
        } else {
            throw std::runtime_error("read_measurement: unknown key " + key + " in " + path);
        }
    }
    meas.values.resize(m);
    for (double & v : meas.values) {
        if (!(is >> v)) {
            throw std::runtime_error("read_measurement: truncated values in " + path);
        }
    }
    return meas;
}

VocabSpec vocab_for(const ExperimentConfig & cfg) {
    return VocabSpec::make(cfg.synthetic.vocab_size, cfg.process_kind == ProcessKind::kMasked);
}

std::unique_ptr<ForwardOp> make_operator_for_image(const ExperimentConfig & cfg,
                                                   const ImageGrid & grid, int image_index) {
    const std::string & kind = cfg.op.kind;
    if (kind == "identity") {
        return make_identity(grid);
    }
    if (kind == "inpaint") {
        std::vector<bool> observed;
        if (!cfg.op.mask_file.empty()) {
            observed = load_mask_file(cfg.op.mask_file, grid.height, grid.width);
        } else {
            Rng rng = substream(cfg.seed, { kStreamMask, static_cast<std::uint64_t>(image_index) });
            observed = random_mask(grid.height, grid.width, cfg.effective_fraction_hidden(), rng);
        }
        return make_inpaint(grid, std::move(observed));
    }
    if (kind == "box") {
        int w = cfg.op.box_w;
        int h = cfg.op.box_h;
        if (w <= 0 || h <= 0) {
            w = h = cfg.effective_box_side(grid.height, grid.width);
        }
        int x0 = cfg.op.box_w > 0 ? cfg.op.box_x : (grid.width - w) / 2;
        int y0 = cfg.op.box_h > 0 ? cfg.op.box_y : (grid.height - h) / 2;
        return make_box_inpaint(grid, x0, y0, w, h);
    }
    if (kind == "xor" || kind == "and") {
        if (cfg.synthetic.vocab_size != 2) {
            throw std::runtime_error("config: xor/and operators need K = 2");
        }
        Rng rng = substream(cfg.seed, { kStreamPairs, static_cast<std::uint64_t>(image_index) });
        auto pairs = random_pairs(cfg.op.pair_count, grid.size(), rng);
        return kind == "xor" ? make_xor_pairs(grid, std::move(pairs))
                             : make_and_pairs(grid, std::move(pairs));
    }
    if (kind == "gaussian_blur") {
        return make_gaussian_blur(grid, cfg.op.blur_taps, cfg.op.blur_sigma);
    }
    if (kind == "motion_blur") {
        if (cfg.op.kernel_file.empty()) {
            throw std::runtime_error("config: motion_blur needs operator.kernel_file");
        }
        return make_motion_blur(grid, load_kernel_file(cfg.op.kernel_file));
    }
    if (kind == "downsample") {
        return make_downsample(grid, cfg.op.factor);
    }
    if (kind == "hdr") {
        return make_hdr(grid);
    }
    throw std::runtime_error("config: unknown operator kind " + kind);
}

std::unique_ptr<Denoiser> make_denoiser(const ExperimentConfig & cfg,
                                        const std::vector<TokenSequence> & dataset,
                                        const CorruptionProcess & process) {
    if (cfg.prior_kind == "empirical_bayes") {
        return std::make_unique<EmpiricalBayesDenoiser>(dataset, process, cfg.smoothing);
    }
    if (cfg.prior_kind == "external_logits") {
        if (cfg.logits_file.empty()) {
            throw std::runtime_error("config: external_logits prior needs prior.logits_file");
        }
        return std::make_unique<ExternalLogitsDenoiser>(read_logits_file(cfg.logits_file));
    }
    throw std::runtime_error("config: unknown prior kind " + cfg.prior_kind);
}

namespace {

PotentialConfig potential_config(const ExperimentConfig & cfg) {
    PotentialConfig pot;
    pot.lambda1 = cfg.lambda1;
    pot.lambda2 = cfg.effective_lambda2();
    pot.beta = 1.0;  // the sampler schedules beta per outer step
    pot.prior_mode = cfg.prior_mode;
    pot.likelihood_mode = cfg.likelihood_mode;
    return pot;
}

void write_preview(const ExperimentConfig & cfg, const ForwardOp & op, const ImageGrid & grid,
                   const Measurement & meas, const std::string & path) {
    const std::string & kind = cfg.op.kind;
    if (kind == "xor" || kind == "and") {
        return;  // pair outputs are not image shaped
    }
    if (kind == "downsample") {
        const int f = cfg.op.factor;
        const ImageGrid low{ grid.height / f, grid.width / f, grid.channels };
        std::vector<double> vals = meas.values;
        write_image(path, intensities_to_image(vals, low));
        return;
    }
    if (kind == "inpaint" || kind == "box") {
        // Hidden locations render as mid gray.
        std::vector<double> full(static_cast<std::size_t>(grid.size()), 0.5);
        std::vector<double> probe(static_cast<std::size_t>(grid.size()), 0.0);
        std::vector<double> grad(static_cast<std::size_t>(grid.size()), 0.0);
        std::vector<double> ones(meas.values.size(), 1.0);
        op.add_vjp(probe, ones, grad);  // marks observed coordinates
        std::size_t j = 0;
        for (std::size_t i = 0; i < full.size(); ++i) {
            if (grad[i] > 0.0) {
                full[i] = meas.values[j++];
            }
        }
        write_image(path, intensities_to_image(full, grid));
        return;
    }
    write_image(path, intensities_to_image(meas.values, grid));
}

}  // namespace

void stage_simulate(const ExperimentConfig & cfg) {
    const VocabSpec vocab = vocab_for(cfg);
    const Dataset dataset = load_or_make_dataset(cfg, vocab);
    const ImageGrid grid = dataset.grid();
    std::filesystem::create_directories(cfg.out_dir);
    cfg.echo(cfg.out_dir + "/config_echo.txt");

    const int n = std::min(cfg.n_images, static_cast<int>(dataset.items.size()));
    const double sigma = cfg.effective_sigma();
    for (int i = 0; i < n; ++i) {
        const TokenSequence & truth = dataset.items[static_cast<std::size_t>(i)];
        const auto op = make_operator_for_image(cfg, grid, i);
        Rng noise = substream(cfg.seed, { kStreamNoise, static_cast<std::uint64_t>(i) });
        const Measurement meas = simulate_measurement(*op, decode(truth, vocab), sigma, noise);
        const std::string base = cfg.out_dir + "/" + image_name(i);
        write_image(base + "_truth." + (grid.channels == 3 ? "ppm" : "pgm"),
                    tokens_to_image(truth, grid, vocab));
        write_measurement(base + "_meas.txt", meas);
        write_preview(cfg, *op, grid, meas,
                      base + "_meas." + (grid.channels == 3 ? "ppm" : "pgm"));
    }
}

void stage_sample(const ExperimentConfig & cfg) {
    const VocabSpec vocab = vocab_for(cfg);
    const Dataset dataset = load_or_make_dataset(cfg, vocab);
    const ImageGrid grid = dataset.grid();
    NoiseSchedule schedule{ cfg.schedule_kind, cfg.schedule_floor };
    CorruptionProcess process(cfg.process_kind, schedule, vocab);
    const auto denoiser = make_denoiser(cfg, dataset.items, process);

    BilinearSurrogate surrogate;
    const bool use_surrogate = cfg.likelihood_mode == LikelihoodMode::kSurrogate;
    if (use_surrogate) {
        if (cfg.surrogate_file.empty()) {
            throw std::runtime_error("config: surrogate likelihood needs potential.surrogate_file");
        }
        surrogate = load_surrogate(cfg.surrogate_file, cfg.surrogate_tau);
    }

    std::ofstream csv(cfg.out_dir + "/samples.csv");
    if (!csv) {
        throw std::runtime_error("stage_sample: cannot open samples.csv in " + cfg.out_dir);
    }
    csv << "image,chain,recon,final_u,accept_rate\n";

    const int n = std::min(cfg.n_images, static_cast<int>(dataset.items.size()));
    const char * ext = grid.channels == 3 ? "ppm" : "pgm";
    for (int i = 0; i < n; ++i) {
        const std::string base = cfg.out_dir + "/" + image_name(i);
        const auto op = make_operator_for_image(cfg, grid, i);
        const Measurement meas = read_measurement(base + "_meas.txt");

        Problem prob;
        prob.op = op.get();
        prob.vocab = vocab;
        prob.measurement = meas;
        prob.potential = potential_config(cfg);
        prob.surrogate = use_surrogate ? &surrogate : nullptr;
        Codebook codebook;
        if (cfg.sampler.proposal_form == ProposalForm::kEmbedding) {
            codebook = intensity_codebook(vocab);
            prob.codebook = &codebook;
        }

        for (int c = 0; c < cfg.n_chains; ++c) {
            SamplerConfig chain_cfg = cfg.sampler;
            chain_cfg.seed = derive_key(derive_key(derive_key(cfg.seed, kStreamChain),
                                                   static_cast<std::uint64_t>(i)),
                                        static_cast<std::uint64_t>(c));
            try {
                const RunResult result = run_sampler(prob, *denoiser, process, chain_cfg);

                std::ostringstream name;
                name << image_name(i) << "_chain" << c << "." << ext;
                write_image(cfg.out_dir + "/" + name.str(),
                            tokens_to_image(result.z0, grid, vocab));

                PosteriorPotential pot(*prob.op, vocab, meas, prob.potential, *denoiser,
                                       prob.surrogate);
                pot.set_context(result.trace.outer.back().zt, result.trace.outer.back().t);
                pot.set_beta(cfg.sampler.beta_max);
                csv << i << "," << c << "," << name.str() << ","
                    << format_double(pot.value(result.z0)) << ","
                    << format_double(result.trace.acceptance_rate()) << "\n";
            } catch (const std::exception & e) {
                // the failed chain is recorded and the run continues
                csv << i << "," << c << ",,nan,nan\n";
                std::fprintf(stderr, "sample: image %d chain %d aborted: %s\n", i, c,
                             e.what());
            }
        }
    }
}

MetricsReport stage_evaluate(const ExperimentConfig & cfg) {
    const VocabSpec vocab = vocab_for(cfg);
    const ImageGrid grid{ cfg.synthetic.height, cfg.synthetic.width, cfg.synthetic.channels };
    MetricsReport report;
    const char * ext = grid.channels == 3 ? "ppm" : "pgm";
    for (int i = 0; i < cfg.n_images; ++i) {
        const std::string base = cfg.out_dir + "/" + image_name(i);
        const std::string truth_path = base + "_truth." + ext;
        if (!std::filesystem::exists(truth_path)) {
            break;
        }
        const TokenSequence truth = image_to_tokens(read_image(truth_path), vocab);
        const std::vector<double> x_truth = decode(truth, vocab);
        for (int c = 0; c < cfg.n_chains; ++c) {
            std::ostringstream name;
            name << base << "_chain" << c << "." << ext;
            if (!std::filesystem::exists(name.str())) {
                continue;
            }
            const TokenSequence recon = image_to_tokens(read_image(name.str()), vocab);
            const std::vector<double> x_recon = decode(recon, vocab);
            MetricRow row;
            row.image = i;
            row.chain = c;
            row.psnr = psnr(x_truth, x_recon);
            row.token_accuracy = token_accuracy(truth, recon);
            row.ssim = (grid.height >= 11 && grid.width >= 11)
                           ? ssim(x_truth, x_recon, grid)
                           : std::nan("");
            if (vocab.k == 2) {
                // Occupied class is token 0.
                std::vector<bool> b(truth.size());
                std::vector<bool> b_hat(truth.size());
                for (std::size_t p = 0; p < truth.size(); ++p) {
                    b[p] = truth[p] == 0;
                    b_hat[p] = recon[p] == 0;
                }
                const auto [iou, f1] = iou_f1(b, b_hat);
                row.iou = iou;
                row.f1 = f1;
            } else {
                row.iou = std::nan("");
                row.f1 = std::nan("");
            }
            report.rows.push_back(row);
        }
    }
    report.aggregate();
    write_metrics_csv(cfg.out_dir + "/metrics.csv", report);
    write_summary(cfg.out_dir + "/summary.txt", report);
    return report;
}

MetricsReport run_experiment(const ExperimentConfig & cfg) {
    const auto start = std::chrono::steady_clock::now();
    stage_simulate(cfg);
    stage_sample(cfg);
    MetricsReport report = stage_evaluate(cfg);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_summary(cfg.out_dir + "/summary.txt", report);
    return report;
}

void write_metrics_csv(const std::string & path, const MetricsReport & report) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("write_metrics_csv: cannot open " + path);
    }
    os << "image,chain,psnr,token_accuracy,ssim,iou,f1\n";
    for (const MetricRow & row : report.rows) {
        os << row.image << "," << row.chain << "," << format_double(row.psnr) << ","
           << format_double(row.token_accuracy) << "," << format_double(row.ssim) << ","
           << format_double(row.iou) << "," << format_double(row.f1) << "\n";
    }
}

MetricsReport read_metrics_csv(const std::string & path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("read_metrics_csv: cannot open " + path);
    }
    MetricsReport report;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row_is(line);
        std::string field;
        MetricRow row;
        std::getline(row_is, field, ',');
        row.image = std::stoi(field);
        std::getline(row_is, field, ',');
        row.chain = std::stoi(field);
        std::getline(row_is, field, ',');
        row.psnr = std::stod(field);
        std::getline(row_is, field, ',');
        row.token_accuracy = std::stod(field);
        std::getline(row_is, field, ',');
        row.ssim = std::stod(field);
        std::getline(row_is, field, ',');
        row.iou = std::stod(field);
        std::getline(row_is, field, ',');
        row.f1 = std::stod(field);
        report.rows.push_back(row);
    }
    report.aggregate();
    return report;
}

void write_summary(const std::string & path, const MetricsReport & report) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("write_summary: cannot open " + path);
    }
    os << "rows " << report.rows.size() << "\n";
    const auto line = [&os](const char * name, const MetricAggregate & a) {
        os << name << " mean " << format_double(a.mean) << " std_pooled "
           << format_double(a.std_pooled) << " std_across_images "
           << format_double(a.std_across_images) << "\n";
    };
    line("psnr", report.psnr);
    line("token_accuracy", report.token_accuracy);
    line("ssim", report.ssim);
    line("iou", report.iou);
    line("f1", report.f1);
    os << "wall_time_seconds " << format_double(report.wall_time_seconds) << "\n";
}

}  // namespace dlps
