#include "pcnet/ops.hpp"

#include "pcnet/tape.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {
namespace ops {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

template <typename... Ts>
bool tracking(const Ts&... inputs) {
    if (Tape::active() == nullptr) return false;
    return ((inputs.defined() && inputs.requires_grad()) || ...);
}

Tensor finish(Tensor out, const char* op, bool track) {
    ensure_finite(out, op);
    if (track) out.set_requires_grad(true);
    return out;
}

void record(const char* op, Tape::BackwardFn fn) { Tape::active()->record(op, std::move(fn)); }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw std::invalid_argument(fmt::format("{}: {} must have rank {}, got shape {}", op, what, rank,
                                                shape_str(t.shape())));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        for (std::size_t d = 0; d < std::min(a.rank(), b.rank()); ++d) {
            if (a.dim(d) != b.dim(d)) {
                throw std::invalid_argument(fmt::format("{}: dimension {} differs ({} vs {}); shapes {} and {}", op,
                                                        d, a.dim(d), b.dim(d), shape_str(a.shape()),
                                                        shape_str(b.shape())));
            }
        }
        throw std::invalid_argument(fmt::format("{}: rank differs; shapes {} and {}", op, shape_str(a.shape()),
                                                shape_str(b.shape())));
    }
}

void require_single(const Tensor& s, const char* op) {
    if (s.numel() != 1) {
        throw std::invalid_argument(fmt::format("{}: expected a single-element tensor, got {}", op,
                                                shape_str(s.shape())));
    }
}

// --- convolution geometry -------------------------------------------------

struct ConvGeom {
    std::size_t channels, height, width;  // image side
    std::size_t out_h, out_w;             // column side
    int kernel, stride, padding;
};

// Output columns [lo, hi) whose input column ox*stride - padding + kx lies inside [0, width).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t size, int stride, int padding, int kx) {
    const long off = static_cast<long>(kx) - padding;
    long lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    long hi = static_cast<long>(size) - off <= 0 ? 0 : (static_cast<long>(size) - off + stride - 1) / stride;
    hi = std::min(hi, static_cast<long>(out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col has shape [channels*k*k, out_h*out_w]
void im2col(const Real* img, const ConvGeom& g, Real* col) {
    const std::size_t cols = g.out_h * g.out_w;
    const int k = g.kernel;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            const auto [y0, y1] = valid_range(g.out_h, g.height, g.stride, g.padding, ky);
            for (int kx = 0; kx < k; ++kx) {
                const auto [x0, x1] = valid_range(g.out_w, g.width, g.stride, g.padding, kx);
                Real* row = col + ((c * k + ky) * k + kx) * cols;
                std::fill(row, row + y0 * g.out_w, Real(0));
                std::fill(row + y1 * g.out_w, row + cols, Real(0));
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    const std::size_t iy = oy * g.stride - g.padding + ky;
                    Real* dst = row + oy * g.out_w;
                    const Real* src = img + (c * g.height + iy) * g.width;
                    const long off = kx - g.padding;
                    std::fill(dst, dst + x0, Real(0));
                    std::fill(dst + x1, dst + g.out_w, Real(0));
                    if (g.stride == 1) {
                        if (x1 > x0) std::copy(src + (x0 + off), src + (x1 + off), dst + x0);
                    } else {
                        for (std::size_t ox = x0; ox < x1; ++ox) dst[ox] = src[ox * g.stride + off];
                    }
                }
            }
        }
    }
}

// accumulates col back onto img
void col2im(const Real* col, const ConvGeom& g, Real* img) {
    const std::size_t cols = g.out_h * g.out_w;
    const int k = g.kernel;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            const auto [y0, y1] = valid_range(g.out_h, g.height, g.stride, g.padding, ky);
            for (int kx = 0; kx < k; ++kx) {
                const auto [x0, x1] = valid_range(g.out_w, g.width, g.stride, g.padding, kx);
                const Real* row = col + ((c * k + ky) * k + kx) * cols;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                    const std::size_t iy = oy * g.stride - g.padding + ky;
                    Real* dst = img + (c * g.height + iy) * g.width;
                    const Real* src = row + oy * g.out_w;
                    const long off = kx - g.padding;
                    if (g.stride == 1) {
                        for (std::size_t ox = x0; ox < x1; ++ox) dst[ox + off] += src[ox];
                    } else {
                        for (std::size_t ox = x0; ox < x1; ++ox) dst[ox * g.stride + off] += src[ox];
                    }
                }
            }
        }
    }
}

void check_conv_args(const char* op, const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t weight_in_axis, std::size_t bias_channels, int stride, int padding) {
    require_rank(input, 4, op, "input");
    require_rank(weight, 4, op, "weight");
    if (stride < 1) throw std::invalid_argument(fmt::format("{}: stride must be >= 1, got {}", op, stride));
    if (padding < 0) throw std::invalid_argument(fmt::format("{}: padding must be >= 0, got {}", op, padding));
    if (weight.dim(2) != weight.dim(3)) {
        throw std::invalid_argument(fmt::format("{}: kernel must be square, weight shape {}", op,
                                                shape_str(weight.shape())));
    }
    if (input.dim(1) != weight.dim(weight_in_axis)) {
        throw std::invalid_argument(fmt::format("{}: input channels (dim 1) = {} but weight dim {} = {}", op,
                                                input.dim(1), weight_in_axis, weight.dim(weight_in_axis)));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != bias_channels)) {
        throw std::invalid_argument(fmt::format("{}: bias shape {} does not match {} output channels", op,
                                                shape_str(bias.shape()), bias_channels));
    }
}

void add_bias(Real* out, const Tensor& bias, std::size_t channels, std::size_t plane) {
    if (!bias.defined()) return;
    auto b = bias.data();
    for (std::size_t c = 0; c < channels; ++c) {
        Real* p = out + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
}

void accumulate_bias_grad(const Tensor& grad_out, Tensor bias) {
    if (!bias.defined() || !bias.requires_grad()) return;
    const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
    const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
    auto g = grad_out.grad();
    auto db = bias.grad();
    for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0;
        for (std::size_t ni = 0; ni < n; ++ni) {
            const Real* p = g.data() + (ni * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        }
        db[ci] += static_cast<Real>(acc);
    }
}

// --- bilinear tables ------------------------------------------------------

struct LerpTap {
    std::size_t lo, hi;
    Real w_hi;
};

std::vector<LerpTap> lerp_taps(std::size_t in) {
    std::vector<LerpTap> taps(2 * in);
    for (std::size_t o = 0; o < 2 * in; ++o) {
        double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        if (src < 0) src = 0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[o] = {lo, hi, static_cast<Real>(src - static_cast<double>(lo))};
    }
    return taps;
}

// small [N,C,H,W] -> big [N,C,2H,2W]
void upsample_forward(const Real* small, std::size_t planes, std::size_t h, std::size_t w, Real* big) {
    const auto ty = lerp_taps(h);
    const auto tx = lerp_taps(w);
    const std::size_t bh = 2 * h, bw = 2 * w;
    for (std::size_t p = 0; p < planes; ++p) {
        const Real* s = small + p * h * w;
        Real* b = big + p * bh * bw;
        for (std::size_t oy = 0; oy < bh; ++oy) {
            const auto& y = ty[oy];
            const Real* r0 = s + y.lo * w;
            const Real* r1 = s + y.hi * w;
            for (std::size_t ox = 0; ox < bw; ++ox) {
                const auto& x = tx[ox];
                const Real top = r0[x.lo] + x.w_hi * (r0[x.hi] - r0[x.lo]);
                const Real bot = r1[x.lo] + x.w_hi * (r1[x.hi] - r1[x.lo]);
                b[oy * bw + ox] = top + y.w_hi * (bot - top);
            }
        }
    }
}

// big -> small, accumulating (transpose of upsample_forward's linear map)
void upsample_splat(const Real* big, std::size_t planes, std::size_t h, std::size_t w, Real* small) {
    const auto ty = lerp_taps(h);
    const auto tx = lerp_taps(w);
    const std::size_t bh = 2 * h, bw = 2 * w;
    for (std::size_t p = 0; p < planes; ++p) {
        Real* s = small + p * h * w;
        const Real* b = big + p * bh * bw;
        for (std::size_t oy = 0; oy < bh; ++oy) {
            const auto& y = ty[oy];
            const Real wy1 = y.w_hi, wy0 = Real(1) - y.w_hi;
            for (std::size_t ox = 0; ox < bw; ++ox) {
                const auto& x = tx[ox];
                const Real g = b[oy * bw + ox];
                const Real wx1 = x.w_hi, wx0 = Real(1) - x.w_hi;
                s[y.lo * w + x.lo] += g * wy0 * wx0;
                s[y.lo * w + x.hi] += g * wy0 * wx1;
                s[y.hi * w + x.lo] += g * wy1 * wx0;
                s[y.hi * w + x.hi] += g * wy1 * wx1;
            }
        }
    }
}

}  // namespace

// --- convolutions -----------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    check_conv_args("conv2d", input, weight, bias, 1, weight.rank() == 4 ? weight.dim(0) : 0, stride, padding);
    const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = weight.dim(0);
    const int k = static_cast<int>(weight.dim(2));
    if (static_cast<long>(k) > static_cast<long>(h) + 2 * padding) {
        throw std::invalid_argument(fmt::format("conv2d: kernel {} exceeds padded height (dim 2) {}+2*{}", k, h, padding));
    }
    if (static_cast<long>(k) > static_cast<long>(w) + 2 * padding) {
        throw std::invalid_argument(fmt::format("conv2d: kernel {} exceeds padded width (dim 3) {}+2*{}", k, w, padding));
    }
    const ConvGeom g{cin, h, w, (h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1, k, stride,
                     padding};
    const std::size_t rows = cin * k * k, cols = g.out_h * g.out_w;

    Tensor out({n, cout, g.out_h, g.out_w});
    std::vector<Real> col(rows * cols);
    ConstMapMat wm(weight.data().data(), cout, rows);
    ConstMapMat colm(col.data(), rows, cols);
    for (std::size_t ni = 0; ni < n; ++ni) {
        im2col(input.data().data() + ni * cin * h * w, g, col.data());
        MapMat om(out.data().data() + ni * cout * cols, cout, cols);
        om.noalias() = wm * colm;
        add_bias(om.data(), bias, cout, cols);
    }

    const bool track = tracking(input, weight, bias);
    if (track) {
        record("conv2d", [input = Tensor(input), weight = Tensor(weight), bias = Tensor(bias), out, g, rows, cols]() mutable {
            if (!out.has_grad()) return;
            const std::size_t n = input.dim(0), cout = weight.dim(0);
            const std::size_t img = g.channels * g.height * g.width;
            std::vector<Real> col(rows * cols);
            ConstMapMat wm(weight.data().data(), cout, rows);
            for (std::size_t ni = 0; ni < n; ++ni) {
                ConstMapMat gom(out.grad().data() + ni * cout * cols, cout, cols);
                if (weight.requires_grad()) {
                    im2col(input.data().data() + ni * img, g, col.data());
                    MapMat dw(weight.grad().data(), cout, rows);
                    dw.noalias() += gom * ConstMapMat(col.data(), rows, cols).transpose();
                }
                if (input.requires_grad()) {
                    MapMat dcol(col.data(), rows, cols);
                    dcol.noalias() = wm.transpose() * gom;
                    col2im(col.data(), g, input.grad().data() + ni * img);
                }
            }
            accumulate_bias_grad(out, bias);
        });
    }
    return finish(out, "conv2d", track);
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    check_conv_args("conv_transpose2d", input, weight, bias, 0, weight.rank() == 4 ? weight.dim(1) : 0, stride,
                    padding);
    const std::size_t n = input.dim(0), ca = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cb = weight.dim(1);
    const int k = static_cast<int>(weight.dim(2));
    const long oh = (static_cast<long>(h) - 1) * stride - 2L * padding + k;
    const long ow = (static_cast<long>(w) - 1) * stride - 2L * padding + k;
    if (oh < 1) throw std::invalid_argument(fmt::format("conv_transpose2d: output height (dim 2) would be {}", oh));
    if (ow < 1) throw std::invalid_argument(fmt::format("conv_transpose2d: output width (dim 3) would be {}", ow));
    // the conv2d whose adjoint this is: image side = output, column side = input
    const ConvGeom g{cb, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), h, w, k, stride, padding};
    const std::size_t rows = cb * k * k, cols = h * w;
    const std::size_t plane = g.height * g.width;

    Tensor out({n, cb, g.height, g.width});
    std::vector<Real> col(rows * cols);
    ConstMapMat wm(weight.data().data(), ca, rows);
    for (std::size_t ni = 0; ni < n; ++ni) {
        ConstMapMat xm(input.data().data() + ni * ca * cols, ca, cols);
        MapMat colm(col.data(), rows, cols);
        colm.noalias() = wm.transpose() * xm;
        Real* o = out.data().data() + ni * cb * plane;
        col2im(col.data(), g, o);
        add_bias(o, bias, cb, plane);
    }

    const bool track = tracking(input, weight, bias);
    if (track) {
        record("conv_transpose2d", [input = Tensor(input), weight = Tensor(weight), bias = Tensor(bias), out, g, rows, cols, ca, cb, plane]() mutable {
            if (!out.has_grad()) return;
            const std::size_t n = input.dim(0);
            std::vector<Real> col(rows * cols);
            ConstMapMat wm(weight.data().data(), ca, rows);
            ConstMapMat colm(col.data(), rows, cols);
            for (std::size_t ni = 0; ni < n; ++ni) {
                im2col(out.grad().data() + ni * cb * plane, g, col.data());
                if (input.requires_grad()) {
                    MapMat dx(input.grad().data() + ni * ca * cols, ca, cols);
                    dx.noalias() += wm * colm;
                }
                if (weight.requires_grad()) {
                    ConstMapMat xm(input.data().data() + ni * ca * cols, ca, cols);
                    MapMat dw(weight.grad().data(), ca, rows);
                    dw.noalias() += xm * colm.transpose();
                }
            }
            accumulate_bias_grad(out, bias);
        });
    }
    return finish(out, "conv_transpose2d", track);
}

// --- resampling -------------------------------------------------------------

Tensor upsample_bilinear2x(const Tensor& input) {
    require_rank(input, 4, "upsample_bilinear2x", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h == 0 || w == 0) throw std::invalid_argument("upsample_bilinear2x: empty spatial extent");
    Tensor out({n, c, 2 * h, 2 * w});
    upsample_forward(input.data().data(), n * c, h, w, out.data().data());
    const bool track = tracking(input);
    if (track) {
        record("upsample_bilinear2x", [input = Tensor(input), out, n, c, h, w]() mutable {
            if (!out.has_grad() || !input.requires_grad()) return;
            upsample_splat(out.grad().data(), n * c, h, w, input.grad().data());
        });
    }
    return finish(out, "upsample_bilinear2x", track);
}

Tensor upsample_bilinear2x_adjoint(const Tensor& input) {
    require_rank(input, 4, "upsample_bilinear2x_adjoint", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), bh = input.dim(2), bw = input.dim(3);
    if (bh == 0 || bw == 0 || bh % 2 != 0 || bw % 2 != 0) {
        throw std::invalid_argument(fmt::format("upsample_bilinear2x_adjoint: spatial extents of {} must be even",
                                                shape_str(input.shape())));
    }
    const std::size_t h = bh / 2, w = bw / 2;
    Tensor out({n, c, h, w});
    upsample_splat(input.data().data(), n * c, h, w, out.data().data());
    const bool track = tracking(input);
    if (track) {
        record("upsample_bilinear2x_adjoint", [input = Tensor(input), out, n, c, h, w]() mutable {
            if (!out.has_grad() || !input.requires_grad()) return;
            std::vector<Real> big(n * c * 4 * h * w);
            upsample_forward(out.grad().data(), n * c, h, w, big.data());
            auto dx = input.grad();
            for (std::size_t i = 0; i < big.size(); ++i) dx[i] += big[i];
        });
    }
    return finish(out, "upsample_bilinear2x_adjoint", track);
}

// --- pointwise and pooling --------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);
    const bool track = tracking(x);
    if (track) {
        record("relu", [x = Tensor(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto xv = x.data();
            auto g = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < xv.size(); ++i) {
                if (xv[i] > Real(0)) dx[i] += g[i];
            }
        });
    }
    return finish(out, "relu", track);
}

Tensor maxpool2x2(const Tensor& x) {
    require_rank(x, 4, "maxpool2x2", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) {
        throw std::invalid_argument(fmt::format("maxpool2x2: spatial extents of {} too small", shape_str(x.shape())));
    }
    Tensor out({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
    auto xv = x.data();
    auto ov = out.data();
    std::size_t o = 0;
    for (std::size_t p = 0; p < n * c; ++p) {
        const std::size_t base = p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = base + (2 * oy) * w + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                }
                ov[o] = xv[best];
                (*argmax)[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    const bool track = tracking(x);
    if (track) {
        record("maxpool2x2", [x = Tensor(x), out, argmax]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
        });
    }
    return finish(out, "maxpool2x2", track);
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "dense", "input");
    require_rank(weight, 2, "dense", "weight");
    const std::size_t n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
    if (weight.dim(1) != in) {
        throw std::invalid_argument(
            fmt::format("dense: input features (dim 1) = {} but weight expects {}", in, weight.dim(1)));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outf)) {
        throw std::invalid_argument(
            fmt::format("dense: bias shape {} does not match {} outputs", shape_str(bias.shape()), outf));
    }
    Tensor out({n, outf});
    ConstMapMat xm(x.data().data(), n, in);
    ConstMapMat wm(weight.data().data(), outf, in);
    MapMat om(out.data().data(), n, outf);
    om.noalias() = xm * wm.transpose();
    if (bias.defined()) {
        auto b = bias.data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < outf; ++j) om(i, j) += b[j];
    }
    const bool track = tracking(x, weight, bias);
    if (track) {
        record("dense", [x = Tensor(x), weight = Tensor(weight), bias = Tensor(bias), out, n, in, outf]() mutable {
            if (!out.has_grad()) return;
            ConstMapMat g(out.grad().data(), n, outf);
            if (x.requires_grad()) {
                MapMat dx(x.grad().data(), n, in);
                dx.noalias() += g * ConstMapMat(weight.data().data(), outf, in);
            }
            if (weight.requires_grad()) {
                MapMat dw(weight.grad().data(), outf, in);
                dw.noalias() += g.transpose() * ConstMapMat(x.data().data(), n, in);
            }
            if (bias.defined() && bias.requires_grad()) {
                auto db = bias.grad();
                for (std::size_t j = 0; j < outf; ++j) {
                    double acc = 0;
                    for (std::size_t i = 0; i < n; ++i) acc += g(i, j);
                    db[j] += static_cast<Real>(acc);
                }
            }
        });
    }
    return finish(out, "dense", track);
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 1) throw std::invalid_argument("flatten: rank-0 input");
    const std::size_t n = x.dim(0);
    Tensor out = x.reshape({n, n == 0 ? 0 : x.numel() / n});
    const bool track = tracking(x);
    if (track) {
        record("flatten", [x = Tensor(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        });
    }
    if (track) out.set_requires_grad(true);
    return out;
}

// --- losses -----------------------------------------------------------------

namespace {
void softmax_rows(const Real* logits, std::size_t n, std::size_t c, Real* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const Real* l = logits + i * c;
        Real* o = out + i * c;
        const Real mx = *std::max_element(l, l + c);
        double z = 0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(l[j] - mx));
        for (std::size_t j = 0; j < c; ++j) o[j] = static_cast<Real>(std::exp(static_cast<double>(l[j] - mx)) / z);
    }
}
}  // namespace

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax", "logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor out({n, c});
    softmax_rows(logits.data().data(), n, c, out.data().data());
    const bool track = tracking(logits);
    if (track) {
        record("softmax", [logits = Tensor(logits), out, n, c]() mutable {
            if (!out.has_grad() || !logits.requires_grad()) return;
            auto y = out.data();
            auto g = out.grad();
            auto dx = logits.grad();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    dx[i * c + j] += static_cast<Real>(y[i * c + j] * (g[i * c + j] - dot));
                }
            }
        });
    }
    return finish(out, "softmax", track);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels) {
    require_rank(logits, 2, "cross_entropy", "logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) {
        throw std::invalid_argument(fmt::format("cross_entropy: {} labels for batch of {}", labels.size(), n));
    }
    if (n == 0) throw std::invalid_argument("cross_entropy: empty batch");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw std::out_of_range(fmt::format("cross_entropy: label {} at row {} outside [0,{})", labels[i], i, c));
        }
    }
    auto probs = std::make_shared<std::vector<Real>>(n * c);
    softmax_rows(logits.data().data(), n, c, probs->data());
    auto lv = logits.data();
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real* l = lv.data() + i * c;
        const double mx = *std::max_element(l, l + c);
        double z = 0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(l[j] - mx);
        loss += -(l[labels[i]] - mx - std::log(z));
    }
    Tensor out = Tensor::scalar(static_cast<Real>(loss / static_cast<double>(n)));
    const bool track = tracking(logits);
    if (track) {
        std::vector<std::int32_t> lab(labels.begin(), labels.end());
        record("cross_entropy", [logits = Tensor(logits), out, probs, lab = std::move(lab), n, c]() mutable {
            if (!out.has_grad() || !logits.requires_grad()) return;
            const Real g = out.grad()[0] / static_cast<Real>(n);
            auto dx = logits.grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const Real onehot = static_cast<std::size_t>(lab[i]) == j ? Real(1) : Real(0);
                    dx[i * c + j] += g * ((*probs)[i * c + j] - onehot);
                }
            }
        });
    }
    return finish(out, "cross_entropy", track);
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    const std::size_t count = a.numel();
    if (count == 0) throw std::invalid_argument("mse: empty tensors");
    auto av = a.data();
    auto bv = b.data();
    double acc = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<Real>(acc / static_cast<double>(count)));
    const bool track = tracking(a, b);
    if (track) {
        record("mse", [a = Tensor(a), b = Tensor(b), out, count]() mutable {
            if (!out.has_grad()) return;
            const Real g = Real(2) * out.grad()[0] / static_cast<Real>(count);
            auto av = a.data();
            auto bv = b.data();
            if (a.requires_grad()) {
                auto da = a.grad();
                for (std::size_t i = 0; i < count; ++i) da[i] += g * (av[i] - bv[i]);
            }
            if (b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t i = 0; i < count; ++i) db[i] -= g * (av[i] - bv[i]);
            }
        });
    }
    return finish(out, "mse", track);
}

// --- arithmetic -------------------------------------------------------------

namespace {
Tensor add_signed(const Tensor& a, const Tensor& b, Real sign, const char* op) {
    require_same_shape(a, b, op);
    Tensor out(a.shape());
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + sign * bv[i];
    const bool track = tracking(a, b);
    if (track) {
        record(op, [a = Tensor(a), b = Tensor(b), out, sign]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            if (a.requires_grad()) {
                auto da = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign * g[i];
            }
        });
    }
    return finish(out, op, track);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_signed(a, b, Real(1), "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_signed(a, b, Real(-1), "sub"); }

Tensor scale(const Tensor& x, const Tensor& s) {
    require_single(s, "scale");
    const Real sv = s.item();
    Tensor out(x.shape());
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = sv * xv[i];
    const bool track = tracking(x, s);
    if (track) {
        record("scale", [x = Tensor(x), s = Tensor(s), out]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto xv = x.data();
            if (x.requires_grad()) {
                const Real sv = s.item();
                auto dx = x.grad();
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += sv * g[i];
            }
            if (s.requires_grad()) {
                double acc = 0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * xv[i];
                s.grad()[0] += static_cast<Real>(acc);
            }
        });
    }
    return finish(out, "scale", track);
}

Tensor mul_scalar(const Tensor& x, Real c) {
    Tensor out(x.shape());
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
    const bool track = tracking(x);
    if (track) {
        record("mul_scalar", [x = Tensor(x), out, c]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
        });
    }
    return finish(out, "mul_scalar", track);
}

Tensor sum(const Tensor& x) {
    double acc = 0;
    for (Real v : x.data()) acc += v;
    Tensor out = Tensor::scalar(static_cast<Real>(acc));
    const bool track = tracking(x);
    if (track) {
        record("sum", [x = Tensor(x), out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const Real g = out.grad()[0];
            for (Real& d : x.grad()) d += g;
        });
    }
    return finish(out, "sum", track);
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    return mul_scalar(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor element(const Tensor& x, std::size_t index) {
    if (index >= x.numel()) {
        throw std::out_of_range(fmt::format("element: index {} outside tensor of {} values", index, x.numel()));
    }
    Tensor out = Tensor::scalar(x.data()[index]);
    const bool track = tracking(x);
    if (track) {
        record("element", [x = Tensor(x), out, index]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            x.grad()[index] += out.grad()[0];
        });
    }
    return finish(out, "element", track);
}

}  // namespace ops
}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
