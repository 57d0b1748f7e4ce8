#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace somlab {

// Raised on malformed IDX input; `kind` distinguishes the failure modes.
struct MnistFormatError : std::runtime_error {
    enum class Kind { bad_magic, truncated, count_mismatch, io };
    Kind kind;
    MnistFormatError(Kind k, const std::string& msg)
        : std::runtime_error(msg), kind(k) {}
};

struct LabeledDataset {
    enum class Split { train, test };

    Split split = Split::train;
    int count = 0;
    int height = 28;
    int width = 28;
    std::vector<float> pixels;          // count*height*width, row-major, in [0,1]
    std::vector<std::uint8_t> labels;   // class ids 0..9

    int image_size() const { return height * width; }
    std::span<const float> image(int i) const {
        return {pixels.data() + static_cast<std::size_t>(i) * image_size(),
                static_cast<std::size_t>(image_size())};
    }
};

struct SubsetSpec {
    double fraction = 1.0;       // in (0, 1]
    std::uint64_t seed = 0;
    bool stratified = false;     // off by default: plain uniform sampling
};

// Parses an IDX image/label file pair. Pixels are scaled to [0,1] by /255.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        LabeledDataset::Split split = LabeledDataset::Split::train);

// Convenience: loads <dir>/train-* or <dir>/t10k-* with the standard names.
LabeledDataset load_mnist_split(const std::filesystem::path& dir,
                                LabeledDataset::Split split);

// round(fraction*N) distinct indices, uniform without replacement; the same
// (labels, spec) always produces the same list. Stratified mode allocates the
// total proportionally to the class histogram.
std::vector<int> subset_indices(int n, const SubsetSpec& spec,
                                const std::vector<std::uint8_t>& labels);

LabeledDataset sample_subset(const LabeledDataset& ds, const SubsetSpec& spec);

// First round(fraction*N) items of a seeded permutation, materialized as a
// dataset; used to cap training-set size in desk-scale runs.
LabeledDataset take_subset(const LabeledDataset& ds, const std::vector<int>& indices);

}  // namespace somlab
