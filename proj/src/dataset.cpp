#include "pcnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

void Dataset::validate() const {
    if (images.rank() != 4 || images.dim(0) != labels.size()) {
        throw std::invalid_argument(fmt::format("dataset: {} labels for images of shape {}", labels.size(),
                                                images.defined() ? shape_str(images.shape()) : "[]"));
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    const std::size_t per = images.numel() / std::max<std::size_t>(size(), 1);
    Dataset out;
    Shape shape = images.shape();
    shape[0] = indices.size();
    out.images = Tensor(shape);
    out.labels.reserve(indices.size());
    auto src = images.data();
    auto dst = out.images.data();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= size()) throw std::out_of_range(fmt::format("dataset index {} >= size {}", i, size()));
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * per), per,
                    dst.begin() + static_cast<std::ptrdiff_t>(k * per));
        out.labels.push_back(labels[i]);
    }
    return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > size()) {
        throw std::out_of_range(fmt::format("dataset slice [{}, {}) beyond size {}", begin, begin + count, size()));
    }
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    return subset(idx);
}

Dataset Dataset::repeated(std::size_t times) const {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < times; ++r)
        for (std::size_t i = 0; i < size(); ++i) idx.push_back(i);
    return subset(idx);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch size must be >= 1");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
    return out;
}

Dataset make_synthetic_dataset(std::size_t n, std::size_t classes, const Shape& chw, std::uint64_t seed) {
    if (classes == 0 || chw.size() != 3) throw std::invalid_argument("synthetic dataset needs classes > 0 and [C,H,W]");
    const std::size_t c = chw[0], h = chw[1], w = chw[2];
    Rng rng(seed);
    // template: a few low-frequency sinusoids per channel
    std::vector<std::vector<double>> templates(classes, std::vector<double>(c * h * w));
    for (std::size_t k = 0; k < classes; ++k) {
        Rng tr = rng.fork(k);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double fy[3], fx[3], ph[3], amp[3];
            for (int j = 0; j < 3; ++j) {
                fy[j] = tr.uniform(0.5, 3.0);
                fx[j] = tr.uniform(0.5, 3.0);
                ph[j] = tr.uniform(0, 2 * std::numbers::pi);
                amp[j] = tr.uniform(0.1, 0.25);
            }
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double v = 0.5;
                    for (int j = 0; j < 3; ++j)
                        v += amp[j] * std::sin(2 * std::numbers::pi * (fy[j] * y / h + fx[j] * x / w) + ph[j]);
                    templates[k][(ch * h + y) * w + x] = v;
                }
        }
    }
    Dataset ds;
    ds.images = Tensor({n, c, h, w});
    ds.labels.resize(n);
    const Rng noise_root = rng.fork(1'000'003);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % classes;
        ds.labels[i] = static_cast<std::int32_t>(k);
        Rng nr = noise_root.fork(i);
        const double gain = nr.uniform(0.7, 1.3);
        for (std::size_t j = 0; j < c * h * w; ++j) {
            const double v = 0.5 + gain * (templates[k][j] - 0.5) + 0.08 * nr.normal();
            ds.images[i * c * h * w + j] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
        }
    }
    return ds;
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
