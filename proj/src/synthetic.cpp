#include "dlps/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dlps {

namespace {

// 8x8 blocky glyphs for 0-9, row-major bit rows.
constexpr std::uint8_t kGlyphs[10][8] = {
    { 0x3C, 0x66, 0x66, 0x66, 0x66, 0x66, 0x66, 0x3C },  // 0
    { 0x18, 0x38, 0x18, 0x18, 0x18, 0x18, 0x18, 0x3C },  // 1
    { 0x3C, 0x66, 0x06, 0x0C, 0x18, 0x30, 0x60, 0x7E },  // 2
    { 0x3C, 0x66, 0x06, 0x1C, 0x06, 0x06, 0x66, 0x3C },  // 3
    { 0x0C, 0x1C, 0x2C, 0x4C, 0x7E, 0x0C, 0x0C, 0x0C },  // 4
    { 0x7E, 0x60, 0x60, 0x7C, 0x06, 0x06, 0x66, 0x3C },  // 5
    { 0x3C, 0x66, 0x60, 0x7C, 0x66, 0x66, 0x66, 0x3C },  // 6
    { 0x7E, 0x06, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x30 },  // 7
    { 0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x66, 0x3C },  // 8
    { 0x3C, 0x66, 0x66, 0x66, 0x3E, 0x06, 0x66, 0x3C },  // 9
};

TokenSequence stripes_pattern(const SyntheticSpec & spec, int variant) {
    // Enumerate (orientation, period, phase) lexicographically.
    const ImageGrid grid{ spec.height, spec.width, spec.channels };
    TokenSequence z(static_cast<std::size_t>(grid.size()), 0);
    int remaining = variant;
    for (int orientation = 0;; orientation = 1 - orientation) {
        for (int period = 1; period <= std::max(spec.height, spec.width); ++period) {
            for (int phase = 0; phase < period; ++phase) {
                if (remaining-- == 0) {
                    for (int c = 0; c < grid.channels; ++c) {
                        for (int y = 0; y < grid.height; ++y) {
                            for (int x = 0; x < grid.width; ++x) {
                                const int coord = orientation == 0 ? y : x;
                                const int on = ((coord + phase) / period) % 2;
                                z[static_cast<std::size_t>(grid.index(c, y, x))] =
                                    on * (spec.vocab_size - 1);
                            }
                        }
                    }
                    return z;
                }
            }
        }
        if (orientation == 1) {
            break;
        }
    }
    return z;
}

TokenSequence boxes_pattern(const SyntheticSpec & spec, Rng & rng) {
    const ImageGrid grid{ spec.height, spec.width, spec.channels };
    TokenSequence z(static_cast<std::size_t>(grid.size()), 0);
    const int n_boxes = 1 + static_cast<int>(rng.uniform_index(3));
    for (int b = 0; b < n_boxes; ++b) {
        const int w = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                              std::max(1, spec.width / 2))));
        const int h = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                              std::max(1, spec.height / 2))));
        const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
            std::max(1, spec.width - w + 1))));
        const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
            std::max(1, spec.height - h + 1))));
        for (int c = 0; c < grid.channels; ++c) {
            for (int y = y0; y < y0 + h; ++y) {
                for (int x = x0; x < x0 + w; ++x) {
                    z[static_cast<std::size_t>(grid.index(c, y, x))] = spec.vocab_size - 1;
                }
            }
        }
    }
    return z;
}

TokenSequence digit_pattern(const SyntheticSpec & spec, int variant) {
    const ImageGrid grid{ spec.height, spec.width, spec.channels };
    TokenSequence z(static_cast<std::size_t>(grid.size()), 0);
    const std::uint8_t * glyph = kGlyphs[variant % 10];
    const int shift = variant / 10;  // cyclic shifts extend the family
    for (int c = 0; c < grid.channels; ++c) {
        for (int y = 0; y < grid.height; ++y) {
            for (int x = 0; x < grid.width; ++x) {
                const int gy = ((y + shift) % grid.height) * 8 / grid.height;
                const int gx = ((x + shift) % grid.width) * 8 / grid.width;
                const bool on = (glyph[gy] >> (7 - gx)) & 1;
                z[static_cast<std::size_t>(grid.index(c, y, x))] =
                    on ? spec.vocab_size - 1 : 0;
            }
        }
    }
    return z;
}

TokenSequence smooth_pattern(const SyntheticSpec & spec, Rng & rng) {
    // Quantized sum of random low-frequency cosines, one field per channel.
    const ImageGrid grid{ spec.height, spec.width, spec.channels };
    TokenSequence z(static_cast<std::size_t>(grid.size()), 0);
    for (int c = 0; c < grid.channels; ++c) {
        const double fy = 1.0 + 2.0 * rng.uniform();
        const double fx = 1.0 + 2.0 * rng.uniform();
        const double py = 2.0 * std::numbers::pi * rng.uniform();
        const double px = 2.0 * std::numbers::pi * rng.uniform();
        for (int y = 0; y < grid.height; ++y) {
            for (int x = 0; x < grid.width; ++x) {
                const double v =
                    0.5 + 0.25 * std::cos(fy * y / grid.height * 2.0 * std::numbers::pi + py) +
                    0.25 * std::cos(fx * x / grid.width * 2.0 * std::numbers::pi + px);
                const int tok = static_cast<int>(std::llround(
                    std::clamp(v, 0.0, 1.0) * static_cast<double>(spec.vocab_size - 1)));
                z[static_cast<std::size_t>(grid.index(c, y, x))] = tok;
            }
        }
    }
    return z;
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec & spec, Rng & rng) {
    if (spec.count < 0 || spec.height < 1 || spec.width < 1 || spec.channels < 1 ||
        spec.vocab_size < 2) {
        throw std::invalid_argument("make_synthetic_dataset: bad spec");
    }
    Dataset ds;
    ds.spec = spec;
    std::set<TokenSequence> seen;
    int variant = 0;
    while (static_cast<int>(ds.items.size()) < spec.count) {
        TokenSequence z;
        if (spec.kind == "stripes") {
            z = stripes_pattern(spec, variant++);
        } else if (spec.kind == "boxes") {
            z = boxes_pattern(spec, rng);
        } else if (spec.kind == "digits") {
            z = digit_pattern(spec, variant++);
        } else if (spec.kind == "smooth") {
            z = smooth_pattern(spec, rng);
        } else {
            throw std::invalid_argument("make_synthetic_dataset: unknown kind " + spec.kind);
        }
        if (seen.insert(z).second) {
            ds.items.push_back(std::move(z));
        }
        if (variant > 10000) {
            throw std::runtime_error("make_synthetic_dataset: cannot produce enough patterns");
        }
    }
    return ds;
}

void write_dataset(const std::string & dir, const Dataset & dataset, const VocabSpec & vocab) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) {
        throw std::runtime_error("write_dataset: cannot open manifest in " + dir);
    }
    const char * ext = dataset.spec.channels == 3 ? "ppm" : "pgm";
    manifest << "DLPS-DATASET 1\n";
    manifest << "kind " << dataset.spec.kind << "\n";
    manifest << "n " << dataset.items.size() << "\n";
    manifest << "height " << dataset.spec.height << " width " << dataset.spec.width
             << " channels " << dataset.spec.channels << "\n";
    manifest << "K " << dataset.spec.vocab_size << "\n";
    manifest << "files\n";
    const ImageGrid grid = dataset.grid();
    for (std::size_t i = 0; i < dataset.items.size(); ++i) {
        std::ostringstream name;
        name << "img" << (i < 100 ? (i < 10 ? "00" : "0") : "") << i << "." << ext;
        write_image(dir + "/" + name.str(), tokens_to_image(dataset.items[i], grid, vocab));
        manifest << name.str() << "\n";
    }
}

Dataset load_dataset(const std::string & manifest_path, const VocabSpec & vocab) {
    std::ifstream is(manifest_path);
    if (!is) {
        throw std::runtime_error("load_dataset: cannot open " + manifest_path);
    }
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "DLPS-DATASET" || version != 1) {
        throw std::runtime_error("load_dataset: bad manifest header");
    }
    Dataset ds;
    std::size_t n = 0;
    std::string key;
    while (is >> key) {
        if (key == "kind") {
            is >> ds.spec.kind;
        } else if (key == "n") {
            is >> n;
        } else if (key == "height") {
            is >> ds.spec.height;
        } else if (key == "width") {
            is >> ds.spec.width;
        } else if (key == "channels") {
            is >> ds.spec.channels;
        } else if (key == "K") {
            is >> ds.spec.vocab_size;
        } else if (key == "files") {
            break;
        } else {
            throw std::runtime_error("load_dataset: unknown manifest key " + key);
        }
    }
    if (ds.spec.vocab_size != vocab.k) {
        throw std::runtime_error("load_dataset: vocabulary size mismatch");
    }
    const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
    std::string file;
    while (is >> file && ds.items.size() < n) {
        const Image img = read_image(dir.empty() ? file : dir + "/" + file);
        ds.items.push_back(image_to_tokens(img, vocab));
    }
    if (ds.items.size() != n) {
        throw std::runtime_error("load_dataset: manifest lists missing files");
    }
    ds.spec.count = static_cast<int>(n);
    return ds;
}

}  // namespace dlps
