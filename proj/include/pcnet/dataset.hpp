#pragma once
// In-memory labelled image set.
#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

struct Dataset {
    Tensor images;  // [N,C,H,W], values in [0,1]
    std::vector<std::int32_t> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    Shape image_chw() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

    /// Copies the listed samples, in order.
    Dataset subset(std::span<const std::size_t> indices) const;
    Dataset slice(std::size_t begin, std::size_t count) const;
    /// Concatenation of `times` copies.
    Dataset repeated(std::size_t times) const;
    void validate() const;
};

/// 0..n-1 shuffled by Fisher-Yates with `rng`.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

/// Consecutive [begin, end) ranges of at most `batch` elements.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch);

/// Learnable stand-in for natural images: each class has a smooth random
/// colour template, and samples are templates plus clipped pixel noise.
/// Classes are balanced and interleaved (label = index % classes).
Dataset make_synthetic_dataset(std::size_t n, std::size_t classes, const Shape& chw, std::uint64_t seed);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
