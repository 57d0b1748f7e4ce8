#include "somlab/feature_dump.hpp"

#include <fstream>
#include <stdexcept>

namespace somlab {

namespace {
constexpr std::uint32_t kMagic = 0x534c4644;  // "SLFD"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::ifstream& f, T& v) {
    if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw std::runtime_error("feature dump: truncated");
}
void put_str(std::ofstream& f, const std::string& s) {
    put(f, std::uint32_t(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::ifstream& f) {
    std::uint32_t n = 0;
    get(f, n);
    std::string s(n, '\0');
    if (!f.read(s.data(), n)) throw std::runtime_error("feature dump: truncated");
    return s;
}
}  // namespace

void save_features(const std::filesystem::path& path, const FeatureDump& dump) {
    if (dump.features.shape.size() != 2)
        throw std::invalid_argument("feature dump: features must be {N, D}");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("feature dump: cannot open " + path.string());
    put(f, kMagic);
    put(f, kVersion);
    put_str(f, dump.extractor);
    put_str(f, dump.topology);
    put(f, dump.seed);
    put(f, std::uint32_t(dump.features.dim(0)));
    put(f, std::uint32_t(dump.features.dim(1)));
    f.write(reinterpret_cast<const char*>(dump.features.data.data()),
            static_cast<std::streamsize>(dump.features.numel() * sizeof(float)));
    if (!f) throw std::runtime_error("feature dump: write failed");
}

FeatureDump load_features(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("feature dump: cannot open " + path.string());
    std::uint32_t magic = 0, version = 0;
    get(f, magic);
    if (magic != kMagic)
        throw std::runtime_error("feature dump: bad magic in " + path.string());
    get(f, version);
    if (version != kVersion)
        throw std::runtime_error("feature dump: unsupported version");
    FeatureDump d;
    d.extractor = get_str(f);
    d.topology = get_str(f);
    get(f, d.seed);
    std::uint32_t n = 0, dim = 0;
    get(f, n);
    get(f, dim);
    d.features = Tensor({int(n), int(dim)});
    if (!f.read(reinterpret_cast<char*>(d.features.data.data()),
                static_cast<std::streamsize>(d.features.numel() * sizeof(float))))
        throw std::runtime_error("feature dump: truncated data");
    return d;
}

}  // namespace somlab
