#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlps/operators.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

// 8-bit raster image; binary PGM (P5) for one channel, PPM (P6) for three.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;  // interleaved row-major

    std::uint8_t at(int channel, int y, int x) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + channel)];
    }
};

void write_image(const std::string & path, const Image & img);
Image read_image(const std::string & path);

// Token grids map to gray levels via round(intensity * 255); the inverse is
// nearest-intensity, which round-trips exactly for K <= 256.
Image tokens_to_image(const TokenSequence & z, const ImageGrid & grid, const VocabSpec & vocab);
TokenSequence image_to_tokens(const Image & img, const VocabSpec & vocab);

// Unit-range intensities to an 8-bit image (for measurement previews).
Image intensities_to_image(const std::vector<double> & x, const ImageGrid & grid);

}  // namespace dlps
