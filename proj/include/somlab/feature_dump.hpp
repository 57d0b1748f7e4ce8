#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "somlab/tensor.hpp"

namespace somlab {

// N x D float matrix with provenance metadata; one container for every
// extractor so grids can be trained from any of them interchangeably.
struct FeatureDump {
    std::string extractor;  // "raw", "scae", "snn", "cnn"
    std::string topology;
    std::uint64_t seed = 0;
    Tensor features;        // {N, D}
};

void save_features(const std::filesystem::path& path, const FeatureDump& dump);
FeatureDump load_features(const std::filesystem::path& path);

}  // namespace somlab
