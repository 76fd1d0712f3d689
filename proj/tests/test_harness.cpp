#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dlps/config.hpp"
#include "dlps/experiment.hpp"
#include "dlps/image_io.hpp"
#include "dlps/synthetic.hpp"

using namespace dlps;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string & path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

std::string temp_dir(const std::string & name) {
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("pnm round trips are bit exact") {
    Rng rng(12);
    for (const int channels : { 1, 3 }) {
        Image img;
        img.height = 7;
        img.width = 5;
        img.channels = channels;
        img.pixels.resize(static_cast<std::size_t>(7 * 5 * channels));
        for (auto & p : img.pixels) {
            p = static_cast<std::uint8_t>(rng.uniform_index(256));
        }
        const std::string path = (fs::temp_directory_path() / "dlps_img.pnm").string();
        write_image(path, img);
        const Image back = read_image(path);
        CHECK(back.height == img.height);
        CHECK(back.width == img.width);
        CHECK(back.channels == img.channels);
        CHECK(back.pixels == img.pixels);
        fs::remove(path);
    }
}

TEST_CASE("token image round trips") {
    Rng rng(13);
    for (const int k : { 2, 4, 256 }) {
        const VocabSpec vocab = VocabSpec::make(k);
        const ImageGrid grid{ 6, 6, 1 };
        TokenSequence z(36);
        for (int & tok : z) {
            tok = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k)));
        }
        CHECK(image_to_tokens(tokens_to_image(z, grid, vocab), vocab) == z);
    }
}

TEST_CASE("key-value config parsing") {
    KeyValueConfig kv = KeyValueConfig::parse_text(
        "# comment\n[sampler]\nT = 12\nmh = true\n\n[run]\nout = somewhere\n", "test");
    ExperimentConfig cfg;
    CHECK(kv.get_int("sampler.T", 0) == 12);
    CHECK(kv.get_bool("sampler.mh", false));
    CHECK(kv.get_string("run.out", "") == "somewhere");
    CHECK_NOTHROW(kv.finish());

    KeyValueConfig extra = KeyValueConfig::parse_text("[sampler]\nbogus = 1\n", "test");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_config(extra),
                         doctest::Contains("sampler.bogus"), std::runtime_error);

    KeyValueConfig bad = KeyValueConfig::parse_text("[sampler]\nT = soon\n", "test");
    CHECK_THROWS_AS(bad.get_int("sampler.T", 0), std::runtime_error);
}

TEST_CASE("synthetic datasets") {
    SyntheticSpec spec;
    spec.kind = "stripes";
    spec.count = 0;
    Rng rng(1);
    CHECK(make_synthetic_dataset(spec, rng).items.empty());

    spec.count = 16;
    const Dataset stripes = make_synthetic_dataset(spec, rng);
    CHECK(stripes.items.size() == 16);
    for (std::size_t i = 0; i < stripes.items.size(); ++i) {
        for (std::size_t j = i + 1; j < stripes.items.size(); ++j) {
            CHECK(stripes.items[i] != stripes.items[j]);
        }
        for (int tok : stripes.items[i]) {
            CHECK(tok >= 0);
            CHECK(tok < 2);
        }
    }

    const std::string dir = temp_dir("dlps_dataset");
    const VocabSpec vocab = VocabSpec::make(2);
    write_dataset(dir, stripes, vocab);
    const Dataset loaded = load_dataset(dir + "/manifest.txt", vocab);
    REQUIRE(loaded.items.size() == stripes.items.size());
    for (std::size_t i = 0; i < loaded.items.size(); ++i) {
        CHECK(loaded.items[i] == stripes.items[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("measurement files round trip doubles exactly") {
    Measurement m;
    m.sigma = 0.05;
    Rng rng(2);
    m.values.resize(17);
    for (double & v : m.values) {
        v = rng.gaussian();
    }
    const std::string path = (fs::temp_directory_path() / "dlps_meas.txt").string();
    write_measurement(path, m);
    const Measurement back = read_measurement(path);
    CHECK(back.sigma == m.sigma);
    CHECK(back.values == m.values);
    fs::remove(path);
}

namespace {

ExperimentConfig trivial_config(const std::string & out) {
    KeyValueConfig kv = KeyValueConfig::parse_text(
        "[data]\n"
        "synthetic_kind = stripes\n"
        "synthetic_count = 8\n"
        "height = 8\nwidth = 8\nK = 2\nn_images = 2\n"
        "[process]\nkind = uniform\nschedule = linear\n"
        "[operator]\nkind = identity\nsigma_y = 0\n"
        "[potential]\nlambda2 = 50\n"
        "[sampler]\nT = 1\nM = 12\neta = 0.1\ntau_end = 0.2\n"
        "grad_scale_init = 20\ngrad_scale_final = 20\n"
        "[run]\nn_chains = 1\nseed = 4\nout = " + out + "\n",
        "trivial");
    return ExperimentConfig::from_config(kv);
}

}  // namespace

TEST_CASE("identity experiment recovers the dataset") {
    const std::string out = temp_dir("dlps_exp_identity");
    const MetricsReport report = run_experiment(trivial_config(out));
    REQUIRE(report.rows.size() == 2);
    for (const MetricRow & row : report.rows) {
        CHECK(row.psnr == 99.0);
        CHECK(row.token_accuracy == 100.0);
    }
    CHECK(fs::exists(out + "/metrics.csv"));
    CHECK(fs::exists(out + "/summary.txt"));
    CHECK(fs::exists(out + "/config_echo.txt"));
    fs::remove_all(out);
}

TEST_CASE("fixed seeds give identical artifacts") {
    const std::string out1 = temp_dir("dlps_exp_det1");
    const std::string out2 = temp_dir("dlps_exp_det2");
    ExperimentConfig cfg1 = trivial_config(out1);
    ExperimentConfig cfg2 = trivial_config(out2);
    run_experiment(cfg1);
    run_experiment(cfg2);
    CHECK(read_bytes(out1 + "/metrics.csv") == read_bytes(out2 + "/metrics.csv"));
    CHECK(read_bytes(out1 + "/samples.csv") == read_bytes(out2 + "/samples.csv"));
    CHECK(read_bytes(out1 + "/img000_chain0.pgm") == read_bytes(out2 + "/img000_chain0.pgm"));
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("external logits prior drives sampling through the file interface") {
    const std::string dir = temp_dir("dlps_exp_external");
    const VocabSpec vocab = VocabSpec::make(2);

    // one-item dataset on disk
    SyntheticSpec spec;
    spec.kind = "stripes";
    spec.count = 1;
    Rng rng(3);
    Dataset dataset = make_synthetic_dataset(spec, rng);
    write_dataset(dir + "/data", dataset, vocab);

    // a logits table that puts all mass on that item at every step
    const TokenSequence & truth = dataset.items.front();
    std::vector<Matrix> table;
    for (int step = 0; step < 3; ++step) {
        Matrix logits(truth.size(), 2, 0.0);
        for (std::size_t pos = 0; pos < truth.size(); ++pos) {
            logits(pos, static_cast<std::size_t>(truth[pos])) = 25.0;
        }
        table.push_back(std::move(logits));
    }
    write_logits_file(dir + "/steps.bin", table);

    KeyValueConfig kv = KeyValueConfig::parse_text(
        "[data]\ndataset = " + dir + "/data/manifest.txt\n" +
            "height = 8\nwidth = 8\nK = 2\nn_images = 1\n" +
            "[process]\nkind = uniform\nschedule = linear\n" +
            "[prior]\nkind = external_logits\nlogits_file = " + dir + "/steps.bin\n" +
            "[operator]\nkind = inpaint\nfraction_hidden = 0.7\nsigma_y = 0.05\n" +
            "[sampler]\nT = 3\nM = 4\neta = 0.1\ntau_end = 0.2\n" +
            "[run]\nn_chains = 1\nseed = 6\nout = " + dir + "\n",
        "external");
    const ExperimentConfig cfg = ExperimentConfig::from_config(kv);
    const MetricsReport report = run_experiment(cfg);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].token_accuracy == 100.0);
    fs::remove_all(dir);
}

TEST_CASE("csv aggregates match the rows") {
    const std::string out = temp_dir("dlps_exp_csv");
    ExperimentConfig cfg = trivial_config(out);
    cfg.op.sigma_y = 0.1;
    cfg.n_chains = 2;
    const MetricsReport report = run_experiment(cfg);
    const MetricsReport reread = read_metrics_csv(out + "/metrics.csv");
    REQUIRE(reread.rows.size() == report.rows.size());
    CHECK(std::fabs(reread.psnr.mean - report.psnr.mean) < 1e-9);
    CHECK(std::fabs(reread.psnr.std_pooled - report.psnr.std_pooled) < 1e-9);
    CHECK(std::fabs(reread.token_accuracy.mean - report.token_accuracy.mean) < 1e-9);
    CHECK(std::fabs(reread.token_accuracy.std_across_images -
                    report.token_accuracy.std_across_images) < 1e-9);
    fs::remove_all(out);
}
