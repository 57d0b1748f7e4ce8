#include "somlab/mnist_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "somlab/rng.hpp"

namespace somlab {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& f, const std::string& what) {
    std::array<unsigned char, 4> b{};
    if (!f.read(reinterpret_cast<char*>(b.data()), 4))
        throw MnistFormatError(MnistFormatError::Kind::truncated,
                               "truncated IDX header while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f)
        throw MnistFormatError(MnistFormatError::Kind::io,
                               "cannot open " + p.string());
    return f;
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        LabeledDataset::Split split) {
    auto imgf = open_binary(images_path);
    const std::uint32_t imagic = read_u32_be(imgf, "images magic");
    if (imagic != kImagesMagic)
        throw MnistFormatError(MnistFormatError::Kind::bad_magic,
                               images_path.string() + ": expected images magic 0x803, got 0x" +
                                   [](std::uint32_t v) {
                                       char buf[16];
                                       std::snprintf(buf, sizeof(buf), "%x", v);
                                       return std::string(buf);
                                   }(imagic));
    const std::uint32_t n_images = read_u32_be(imgf, "image count");
    const std::uint32_t rows = read_u32_be(imgf, "rows");
    const std::uint32_t cols = read_u32_be(imgf, "cols");

    auto lblf = open_binary(labels_path);
    const std::uint32_t lmagic = read_u32_be(lblf, "labels magic");
    if (lmagic != kLabelsMagic)
        throw MnistFormatError(MnistFormatError::Kind::bad_magic,
                               labels_path.string() + ": expected labels magic 0x801");
    const std::uint32_t n_labels = read_u32_be(lblf, "label count");

    if (n_images != n_labels)
        throw MnistFormatError(MnistFormatError::Kind::count_mismatch,
                               "image count " + std::to_string(n_images) +
                                   " != label count " + std::to_string(n_labels));

    LabeledDataset ds;
    ds.split = split;
    ds.count = static_cast<int>(n_images);
    ds.height = static_cast<int>(rows);
    ds.width = static_cast<int>(cols);

    const std::size_t npix = std::size_t(n_images) * rows * cols;
    std::vector<unsigned char> raw(npix);
    if (!imgf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(npix)))
        throw MnistFormatError(MnistFormatError::Kind::truncated,
                               images_path.string() + ": truncated pixel data");
    ds.pixels.resize(npix);
    for (std::size_t i = 0; i < npix; ++i)
        ds.pixels[i] = static_cast<float>(raw[i]) * (1.0f / 255.0f);

    ds.labels.resize(n_labels);
    if (!lblf.read(reinterpret_cast<char*>(ds.labels.data()),
                   static_cast<std::streamsize>(n_labels)))
        throw MnistFormatError(MnistFormatError::Kind::truncated,
                               labels_path.string() + ": truncated label data");
    return ds;
}

LabeledDataset load_mnist_split(const std::filesystem::path& dir,
                                LabeledDataset::Split split) {
    if (split == LabeledDataset::Split::train)
        return load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", split);
    return load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", split);
}

std::vector<int> subset_indices(int n, const SubsetSpec& spec,
                                const std::vector<std::uint8_t>& labels) {
    if (!(spec.fraction > 0.0) || spec.fraction > 1.0)
        throw std::invalid_argument("subset fraction must be in (0,1]");
    const int target = static_cast<int>(std::lround(spec.fraction * n));
    Rng rng(spec.seed);

    if (!spec.stratified) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        // Partial Fisher-Yates: only the first `target` slots are needed.
        for (int i = 0; i < target; ++i) {
            const int j = i + static_cast<int>(rng.below(std::uint64_t(n - i)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(target);
        return idx;
    }

    // Stratified: proportional per-class allocation, remainders to the classes
    // with the largest fractional parts so the total is exactly round(f*N).
    std::vector<std::vector<int>> by_class(10);
    for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    std::vector<int> take(10, 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int c = 0; c < 10; ++c) {
        const double exact = spec.fraction * static_cast<double>(by_class[c].size());
        take[c] = static_cast<int>(exact);
        assigned += take[c];
        rema.push_back({exact - take[c], c});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int i = 0; assigned < target && i < 10; ++i, ++assigned)
        take[rema[i].second] += 1;

    std::vector<int> out;
    out.reserve(target);
    for (int c = 0; c < 10; ++c) {
        auto& pool = by_class[c];
        const int t = std::min<int>(take[c], static_cast<int>(pool.size()));
        for (int i = 0; i < t; ++i) {
            const int j = i + static_cast<int>(rng.below(std::uint64_t(pool.size() - i)));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

LabeledDataset take_subset(const LabeledDataset& ds, const std::vector<int>& indices) {
    LabeledDataset out;
    out.split = ds.split;
    out.height = ds.height;
    out.width = ds.width;
    out.count = static_cast<int>(indices.size());
    const int sz = ds.image_size();
    out.pixels.resize(std::size_t(out.count) * sz);
    out.labels.resize(out.count);
    for (int i = 0; i < out.count; ++i) {
        const auto src = ds.image(indices[i]);
        std::copy(src.begin(), src.end(), out.pixels.begin() + std::size_t(i) * sz);
        out.labels[i] = ds.labels[indices[i]];
    }
    return out;
}

LabeledDataset sample_subset(const LabeledDataset& ds, const SubsetSpec& spec) {
    return take_subset(ds, subset_indices(ds.count, spec, ds.labels));
}

}  // namespace somlab
