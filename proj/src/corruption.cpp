#include "pcnet/corruption.hpp"

#include "pcnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::clean: return "clean";
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::salt_pepper: return "salt_pepper";
    }
    return "?";
}

NoiseKind parse_noise_kind(const std::string& name) {
    if (name == "clean") return NoiseKind::clean;
    if (name == "gaussian") return NoiseKind::gaussian;
    if (name == "salt_pepper") return NoiseKind::salt_pepper;
    throw std::invalid_argument(fmt::format("unknown noise kind '{}'", name));
}

double noise_param(NoiseKind kind, int level) {
    static constexpr double sigma[] = {0.0, 0.2, 0.4, 0.8};
    static constexpr double frac[] = {0.0, 0.02, 0.04, 0.08};
    if (level < 0 || level > 3) throw std::invalid_argument(fmt::format("noise level {} outside 0..3", level));
    if (kind == NoiseKind::clean) {
        if (level != 0) throw std::invalid_argument("clean noise only has level 0");
        return 0.0;
    }
    return kind == NoiseKind::gaussian ? sigma[level] : frac[level];
}

double NoiseSpec::param() const { return noise_param(kind, level); }

std::string NoiseSpec::label() const {
    if (is_clean()) return "clean";
    return fmt::format("{}-{}", to_string(kind), level);
}

namespace {

void check_images(const Tensor& images) {
    if (images.rank() != 4) {
        throw std::invalid_argument(fmt::format("corrupt: expected [N,C,H,W], got {}", shape_str(images.shape())));
    }
    const auto [lo, hi] = std::minmax_element(images.data().begin(), images.data().end());
    if (images.numel() > 0 && (*lo < Real(0) || *hi > Real(1))) {
        throw std::invalid_argument(fmt::format("corrupt: pixel values must lie in [0,1], found [{}, {}]", *lo, *hi));
    }
}

void gaussian_one(std::span<Real> px, double sigma, Rng rng) {
    for (Real& v : px) v = static_cast<Real>(std::clamp(static_cast<double>(v) + sigma * rng.normal(), 0.0, 1.0));
}

void salt_pepper_one(std::span<Real> px, std::size_t channels, std::size_t count, Rng rng,
                     std::vector<std::size_t>& pos) {
    const std::size_t hw = px.size() / channels;
    pos.resize(hw);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    // partial Fisher-Yates: the first `count` entries are a uniform sample
    for (std::size_t i = 0; i < count; ++i) std::swap(pos[i], pos[i + rng.below(hw - i)]);
    for (std::size_t i = 0; i < count; ++i) {
        const Real v = i < count / 2 ? Real(0) : Real(1);
        for (std::size_t ch = 0; ch < channels; ++ch) px[ch * hw + pos[i]] = v;
    }
}

std::size_t salt_pepper_count(double p, std::size_t hw) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument(fmt::format("salt-and-pepper fraction {} outside [0,1]", p));
    return static_cast<std::size_t>(std::llround(p * static_cast<double>(hw)));
}

template <class IdOf>
Tensor apply(const Tensor& images, NoiseKind kind, double param, std::uint64_t seed, IdOf id_of) {
    check_images(images);
    Tensor out = images.clone();
    if (kind == NoiseKind::clean || param == 0.0) return out;
    const std::size_t n = images.dim(0), c = images.dim(1), per = images.numel() / std::max<std::size_t>(n, 1);
    const std::size_t count = kind == NoiseKind::salt_pepper ? salt_pepper_count(param, per / c) : 0;
    if (kind == NoiseKind::salt_pepper && count == 0) return out;
    const Rng root(seed);
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < n; ++i) {
        auto px = out.data().subspan(i * per, per);
        if (kind == NoiseKind::gaussian) {
            gaussian_one(px, param, root.fork(id_of(i)));
        } else {
            salt_pepper_one(px, c, count, root.fork(id_of(i)), pos);
        }
    }
    return out;
}

}  // namespace

Tensor add_gaussian(const Tensor& images, double sigma, std::uint64_t seed, std::size_t first_index) {
    return apply(images, NoiseKind::gaussian, sigma, seed, [&](std::size_t i) { return first_index + i; });
}

Tensor add_salt_pepper(const Tensor& images, double p, std::uint64_t seed, std::size_t first_index) {
    salt_pepper_count(p, 1);
    return apply(images, NoiseKind::salt_pepper, p, seed, [&](std::size_t i) { return first_index + i; });
}

Tensor corrupt(const Tensor& images, const NoiseSpec& spec, std::size_t first_index) {
    return apply(images, spec.kind, spec.param(), spec.seed, [&](std::size_t i) { return first_index + i; });
}

Tensor corrupt(const Tensor& images, const NoiseSpec& spec, std::span<const std::size_t> image_ids) {
    if (images.rank() == 4 && image_ids.size() != images.dim(0)) {
        throw std::invalid_argument(
            fmt::format("corrupt: {} image ids for a batch of {}", image_ids.size(), images.dim(0)));
    }
    return apply(images, spec.kind, spec.param(), spec.seed, [&](std::size_t i) { return image_ids[i]; });
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
