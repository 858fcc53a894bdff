#pragma once
// Gaussian and salt-and-pepper image noise at fixed severity levels.
#include "pcnet/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

enum class NoiseKind { clean, gaussian, salt_pepper };
std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// level 0 is clean; levels 1..3 map to sigma 0.2/0.4/0.8 (gaussian) or
/// pixel fraction 0.02/0.04/0.08 (salt_pepper).
struct NoiseSpec {
    NoiseKind kind = NoiseKind::clean;
    int level = 0;
    std::uint64_t seed = 0;

    /// sigma or pixel fraction; 0 for clean or level 0. Throws on a bad level.
    double param() const;
    bool is_clean() const { return kind == NoiseKind::clean || level == 0; }
    /// "clean", "gaussian-2", ...
    std::string label() const;

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

double noise_param(NoiseKind kind, int level);

/// Returns a corrupted copy of images [N,C,H,W] with values in [0,1]. Image
/// n draws from Rng(seed).fork(n), so results do not depend on batching
/// order as long as `first_index` gives the image's position in the dataset.
Tensor corrupt(const Tensor& images, const NoiseSpec& spec, std::size_t first_index = 0);
/// Same, with image n drawing from Rng(seed).fork(image_ids[n]).
Tensor corrupt(const Tensor& images, const NoiseSpec& spec, std::span<const std::size_t> image_ids);

/// Gaussian with an explicit sigma, clamped to [0,1].
Tensor add_gaussian(const Tensor& images, double sigma, std::uint64_t seed, std::size_t first_index = 0);
/// round(p*H*W) pixel positions per image, chosen without replacement and
/// shared across channels; the first half set to 0, the rest to 1.
Tensor add_salt_pepper(const Tensor& images, double p, std::uint64_t seed, std::size_t first_index = 0);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
