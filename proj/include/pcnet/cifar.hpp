#pragma once

// CIFAR-10 binary batches: 3073-byte records of one label byte followed by
// 1024 red, 1024 green and 1024 blue bytes (row-major 32x32 planes).

#include "pcnet/dataset.hpp"

#include <filesystem>
#include <string>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;  // 3072
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;        // 3073
inline constexpr std::size_t kCifarRecordsPerBatch = 10000;
inline constexpr std::size_t kCifarClasses = 10;

/// Parses the bytes of one batch file; `source` names it in errors, which
/// carry the byte offset of the first bad record.
Dataset parse_cifar10(const std::string& bytes, const std::string& source);
Dataset load_cifar10_batch(const std::filesystem::path& file);

/// data_batch_1..5.bin (train) or test_batch.bin, concatenated in that order.
Dataset load_cifar10(const std::filesystem::path& dir, bool train);

/// Inverse of parse_cifar10 (values rounded to the nearest byte).
std::string encode_cifar10(const Dataset& data);
void save_cifar10_batch(const std::filesystem::path& file, const Dataset& data);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
