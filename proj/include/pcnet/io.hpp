#pragma once

// Little-endian byte buffers and atomic file writes.

#include "pcnet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

class ByteWriter {
public:
    void bytes(const void* data, std::size_t n);
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v);
    void f32(float v);
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

/// Bounds-checked reader; errors name the source and byte offset.
class ByteReader {
public:
    ByteReader(std::string data, std::string source);

    void bytes(void* out, std::size_t n);
    std::uint8_t u8();
    std::uint32_t u32();
    float f32();

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// 64-bit FNV-1a, used for config and parameter fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
