#include "pcnet/cifar.hpp"

#include "pcnet/io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

Dataset parse_cifar10(const std::string& bytes, const std::string& source) {
    if (bytes.empty()) throw std::runtime_error(fmt::format("{}: empty CIFAR-10 file", source));
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t whole = bytes.size() / kCifarRecordBytes;
        throw std::runtime_error(fmt::format("{}: truncated record at byte offset {} ({} bytes is not a multiple of {})",
                                             source, whole * kCifarRecordBytes, bytes.size(), kCifarRecordBytes));
    }
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    Dataset d;
    d.images = Tensor({n, 3, kCifarSide, kCifarSide});
    d.labels.resize(n);
    auto px = d.images.data();
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec = raw + r * kCifarRecordBytes;
        if (rec[0] >= kCifarClasses)
            throw std::runtime_error(fmt::format("{}: label {} out of range at byte offset {}", source, int(rec[0]),
                                                 r * kCifarRecordBytes));
        d.labels[r] = rec[0];
        Real* dst = px.data() + r * kCifarPixels;
        for (std::size_t j = 0; j < kCifarPixels; ++j) dst[j] = static_cast<Real>(rec[1 + j]) / Real(255);
    }
    return d;
}

Dataset load_cifar10_batch(const std::filesystem::path& file) { return parse_cifar10(read_file(file), file.string()); }

Dataset load_cifar10(const std::filesystem::path& dir, bool train) {
    std::vector<std::filesystem::path> files;
    if (train) {
        for (int i = 1; i <= 5; ++i) files.push_back(dir / fmt::format("data_batch_{}.bin", i));
    } else {
        files.push_back(dir / "test_batch.bin");
    }
    std::string all;
    for (const auto& f : files) {
        if (!std::filesystem::exists(f))
            throw std::runtime_error(fmt::format("CIFAR-10 file {} not found", f.string()));
        all += read_file(f);
    }
    return parse_cifar10(all, dir.string());
}

std::string encode_cifar10(const Dataset& data) {
    data.validate();
    if (data.image_chw() != Shape{3, kCifarSide, kCifarSide})
        throw std::invalid_argument(fmt::format("encode_cifar10: images must be 3x32x32, got {}",
                                                shape_str(data.image_chw())));
    std::string out(data.size() * kCifarRecordBytes, '\0');
    auto px = data.images.data();
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (data.labels[r] < 0 || static_cast<std::size_t>(data.labels[r]) >= kCifarClasses)
            throw std::invalid_argument(fmt::format("encode_cifar10: label {} at index {}", data.labels[r], r));
        char* rec = out.data() + r * kCifarRecordBytes;
        rec[0] = static_cast<char>(data.labels[r]);
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            const double v = std::lround(static_cast<double>(px[r * kCifarPixels + j]) * 255.0);
            rec[1 + j] = static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

void save_cifar10_batch(const std::filesystem::path& file, const Dataset& data) {
    write_file_atomic(file, encode_cifar10(data));
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
