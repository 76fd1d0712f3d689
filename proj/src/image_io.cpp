#include "dlps/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dlps {

void write_image(const std::string & path, const Image & img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("write_image: only 1 or 3 channels supported");
    }
    if (img.pixels.size() !=
        static_cast<std::size_t>(img.height * img.width * img.channels)) {
        throw std::invalid_argument("write_image: pixel buffer size mismatch");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("write_image: cannot open " + path);
    }
    os << (img.channels == 1 ? "P5" : "P6") << "\n"
       << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char *>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) {
        throw std::runtime_error("write_image: write failed for " + path);
    }
}

namespace {

int read_pnm_int(std::istream & is) {
    // Skips whitespace and '#' comment lines.
    int c = is.peek();
    while (is && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else {
            is.get();
        }
        c = is.peek();
    }
    int value = -1;
    is >> value;
    return value;
}

}  // namespace

Image read_image(const std::string & path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("read_image: cannot open " + path);
    }
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P6") {
        throw std::runtime_error("read_image: unsupported format in " + path);
    }
    Image img;
    img.channels = magic == "P5" ? 1 : 3;
    img.width = read_pnm_int(is);
    img.height = read_pnm_int(is);
    const int maxval = read_pnm_int(is);
    if (!is || img.width < 1 || img.height < 1 || maxval != 255) {
        throw std::runtime_error("read_image: bad header in " + path);
    }
    is.get();  // single whitespace after maxval
    img.pixels.resize(static_cast<std::size_t>(img.height * img.width * img.channels));
    is.read(reinterpret_cast<char *>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!is) {
        throw std::runtime_error("read_image: truncated data in " + path);
    }
    return img;
}

Image tokens_to_image(const TokenSequence & z, const ImageGrid & grid, const VocabSpec & vocab) {
    if (z.size() != static_cast<std::size_t>(grid.size())) {
        throw std::invalid_argument("tokens_to_image: length mismatch");
    }
    Image img;
    img.height = grid.height;
    img.width = grid.width;
    img.channels = grid.channels;
    img.pixels.resize(z.size());
    for (int c = 0; c < grid.channels; ++c) {
        for (int y = 0; y < grid.height; ++y) {
            for (int x = 0; x < grid.width; ++x) {
                const int tok = z[static_cast<std::size_t>(grid.index(c, y, x))];
                if (vocab.mask_index && tok == *vocab.mask_index) {
                    throw std::domain_error("tokens_to_image: mask token has no pixel value");
                }
                const double v = vocab.intensity(tok);
                img.pixels[static_cast<std::size_t>((y * grid.width + x) * grid.channels + c)] =
                    static_cast<std::uint8_t>(std::llround(v * 255.0));
            }
        }
    }
    return img;
}

TokenSequence image_to_tokens(const Image & img, const VocabSpec & vocab) {
    const ImageGrid grid{ img.height, img.width, img.channels };
    TokenSequence z(static_cast<std::size_t>(grid.size()));
    for (int c = 0; c < grid.channels; ++c) {
        for (int y = 0; y < grid.height; ++y) {
            for (int x = 0; x < grid.width; ++x) {
                const double v = static_cast<double>(img.at(c, y, x)) / 255.0;
                int best = 0;
                double best_d = std::fabs(vocab.intensity(0) - v);
                for (int tok = 1; tok < vocab.k; ++tok) {
                    const double d = std::fabs(vocab.intensity(tok) - v);
                    if (d < best_d) {
                        best = tok;
                        best_d = d;
                    }
                }
                z[static_cast<std::size_t>(grid.index(c, y, x))] = best;
            }
        }
    }
    return z;
}

Image intensities_to_image(const std::vector<double> & x, const ImageGrid & grid) {
    if (x.size() != static_cast<std::size_t>(grid.size())) {
        throw std::invalid_argument("intensities_to_image: length mismatch");
    }
    Image img;
    img.height = grid.height;
    img.width = grid.width;
    img.channels = grid.channels;
    img.pixels.resize(x.size());
    for (int c = 0; c < grid.channels; ++c) {
        for (int y = 0; y < grid.height; ++y) {
            for (int xx = 0; xx < grid.width; ++xx) {
                const double v = std::clamp(x[static_cast<std::size_t>(grid.index(c, y, xx))],
                                            0.0, 1.0);
                img.pixels[static_cast<std::size_t>((y * grid.width + xx) * grid.channels + c)] =
                    static_cast<std::uint8_t>(std::llround(v * 255.0));
            }
        }
    }
    return img;
}

}  // namespace dlps
