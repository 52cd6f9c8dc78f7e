#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldmshield/image.hpp"

namespace ldms {

// Procedural grouped dataset: each group ("identity") fixes a composition of
// background gradient, stripe field, and a primary shape; images within a
// group jitter position, scale, phase, and hue. Holdout images share the
// identity parameters but never appear in the training split.
struct ToyDatasetSpec {
    int groups = 5;
    int per_group = 20;
    int holdout_per_group = 4;
    int size = 32;
    std::uint64_t seed = 42;

    void validate() const;
};

struct ToyDataset {
    ToyDatasetSpec spec;
    std::vector<std::vector<Image>> train;    // [group][index]
    std::vector<std::vector<Image>> holdout;  // [group][index]
};

Image generate_toy_image(const ToyDatasetSpec& spec, int group, int index);
ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec);

// PNGs plus an index.json with per-file hashes; returns the index path.
std::string write_dataset(const ToyDataset& ds, const std::string& dir);

}  // namespace ldms
