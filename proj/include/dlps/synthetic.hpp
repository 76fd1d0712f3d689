#pragma once

#include <string>
#include <vector>

#include "dlps/image_io.hpp"
#include "dlps/operators.hpp"
#include "dlps/rng.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

struct SyntheticSpec {
    std::string kind = "stripes";  // stripes | boxes | digits | smooth
    int count = 16;
    int height = 8;
    int width = 8;
    int channels = 1;
    int vocab_size = 2;
};

struct Dataset {
    SyntheticSpec spec;
    std::vector<TokenSequence> items;

    ImageGrid grid() const { return { spec.height, spec.width, spec.channels }; }
};

// Deterministic given the rng seed; stripe and digit patterns are distinct
// by construction.
Dataset make_synthetic_dataset(const SyntheticSpec & spec, Rng & rng);

// Writes one PGM/PPM per item plus a manifest the loader understands.
void write_dataset(const std::string & dir, const Dataset & dataset, const VocabSpec & vocab);
Dataset load_dataset(const std::string & manifest_path, const VocabSpec & vocab);

}  // namespace dlps
