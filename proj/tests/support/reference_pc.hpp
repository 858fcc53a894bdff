#pragma once
// Straight-line double-precision re-implementation of the PC dynamics, written
// with plain loops and no code shared with the library beyond reading its
// weights. Used as an oracle for the unrolled network.
#include "pcnet/hyperparams.hpp"
#include "pcnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pcnet::testing::ref {

struct Arr {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Arr() = default;
    Arr(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
        : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}
    double& at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) { return v[((a * c + b) * h + y) * w + x]; }
    double at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
        return v[((a * c + b) * h + y) * w + x];
    }
    std::size_t per_sample() const { return c * h * w; }
};

inline Arr from_tensor(const Tensor& t) {
    Arr a(t.dim(0), t.rank() > 1 ? t.dim(1) : 1, t.rank() > 2 ? t.dim(2) : 1, t.rank() > 3 ? t.dim(3) : 1);
    for (std::size_t i = 0; i < t.numel(); ++i) a.v[i] = t[i];
    return a;
}

inline std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// weight [cout, cin, k, k]
inline Arr conv(const Arr& x, const Arr& wt, const std::vector<double>& b, int pad) {
    const long k = static_cast<long>(wt.h);
    const long oh = static_cast<long>(x.h) + 2 * pad - k + 1, ow = static_cast<long>(x.w) + 2 * pad - k + 1;
    Arr y(x.n, wt.n, oh, ow);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t co = 0; co < wt.n; ++co)
            for (long oy = 0; oy < oh; ++oy)
                for (long ox = 0; ox < ow; ++ox) {
                    double s = b.empty() ? 0.0 : b[co];
                    for (std::size_t ci = 0; ci < x.c; ++ci)
                        for (long ky = 0; ky < k; ++ky)
                            for (long kx = 0; kx < k; ++kx) {
                                const long iy = oy - pad + ky, ix = ox - pad + kx;
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) || ix >= static_cast<long>(x.w))
                                    continue;
                                s += x.at(n, ci, iy, ix) * wt.at(co, ci, ky, kx);
                            }
                    y.at(n, co, oy, ox) = s;
                }
    return y;
}

// weight [cin(state), cout(target), k, k], stride 1: scatter form
inline Arr conv_t(const Arr& x, const Arr& wt, const std::vector<double>& b, int pad) {
    const long k = static_cast<long>(wt.h);
    const long oh = static_cast<long>(x.h) - 2 * pad + k - 1, ow = static_cast<long>(x.w) - 2 * pad + k - 1;
    Arr y(x.n, wt.c, oh, ow);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t co = 0; co < wt.c; ++co)
            for (long oy = 0; oy < oh; ++oy)
                for (long ox = 0; ox < ow; ++ox) y.at(n, co, oy, ox) = b.empty() ? 0.0 : b[co];
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t ci = 0; ci < x.c; ++ci)
            for (long iy = 0; iy < static_cast<long>(x.h); ++iy)
                for (long ix = 0; ix < static_cast<long>(x.w); ++ix)
                    for (std::size_t co = 0; co < wt.c; ++co)
                        for (long ky = 0; ky < k; ++ky)
                            for (long kx = 0; kx < k; ++kx) {
                                const long oy = iy - pad + ky, ox = ix - pad + kx;
                                if (oy < 0 || ox < 0 || oy >= oh || ox >= ow) continue;
                                y.at(n, co, oy, ox) += x.at(n, ci, iy, ix) * wt.at(ci, co, ky, kx);
                            }
    return y;
}

inline Arr relu(Arr x) {
    for (double& e : x.v) e = std::max(e, 0.0);
    return x;
}

inline Arr pool(const Arr& x) {
    Arr y(x.n, x.c, x.h / 2, x.w / 2);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t oy = 0; oy < y.h; ++oy)
                for (std::size_t ox = 0; ox < y.w; ++ox)
                    y.at(n, c, oy, ox) = std::max({x.at(n, c, 2 * oy, 2 * ox), x.at(n, c, 2 * oy, 2 * ox + 1),
                                                   x.at(n, c, 2 * oy + 1, 2 * ox), x.at(n, c, 2 * oy + 1, 2 * ox + 1)});
    return y;
}

// source taps of output coordinate o for a 2x align_corners=false resize
struct Taps {
    std::size_t i0, i1;
    double w0, w1;
};
inline Taps taps(std::size_t o, std::size_t n_in) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = std::min(static_cast<std::size_t>(src), n_in - 1);
    std::size_t i1 = std::min(i0 + 1, n_in - 1);
    const double lam = src - static_cast<double>(i0);
    return {i0, i1, 1 - lam, lam};
}

inline Arr upsample(const Arr& x) {
    Arr y(x.n, x.c, 2 * x.h, 2 * x.w);
    for (std::size_t n = 0; n < x.n; ++n)
        for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t oy = 0; oy < y.h; ++oy)
                for (std::size_t ox = 0; ox < y.w; ++ox) {
                    const Taps ty = taps(oy, x.h), tx = taps(ox, x.w);
                    y.at(n, c, oy, ox) = ty.w0 * (tx.w0 * x.at(n, c, ty.i0, tx.i0) + tx.w1 * x.at(n, c, ty.i0, tx.i1)) +
                                         ty.w1 * (tx.w0 * x.at(n, c, ty.i1, tx.i0) + tx.w1 * x.at(n, c, ty.i1, tx.i1));
                }
    return y;
}

inline Arr upsample_transpose(const Arr& y) {
    Arr x(y.n, y.c, y.h / 2, y.w / 2);
    for (std::size_t n = 0; n < y.n; ++n)
        for (std::size_t c = 0; c < y.c; ++c)
            for (std::size_t oy = 0; oy < y.h; ++oy)
                for (std::size_t ox = 0; ox < y.w; ++ox) {
                    const Taps ty = taps(oy, x.h), tx = taps(ox, x.w);
                    const double g = y.at(n, c, oy, ox);
                    x.at(n, c, ty.i0, tx.i0) += ty.w0 * tx.w0 * g;
                    x.at(n, c, ty.i0, tx.i1) += ty.w0 * tx.w1 * g;
                    x.at(n, c, ty.i1, tx.i0) += ty.w1 * tx.w0 * g;
                    x.at(n, c, ty.i1, tx.i1) += ty.w1 * tx.w1 * g;
                }
    return x;
}

inline Arr axpy(double a, const Arr& x, Arr y) {
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
    return y;
}

inline double mse(const Arr& a, const Arr& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    return s / static_cast<double>(a.v.size());
}

struct Block {
    Arr ff_w, fb_w;
    std::vector<double> ff_b, fb_b;
    bool pool = true;

    Arr F(const Arr& x) const {
        Arr y = relu(conv(x, ff_w, ff_b, static_cast<int>(ff_w.h / 2)));
        return pool ? ref::pool(y) : y;
    }
    Arr B(const Arr& m) const { return conv_t(pool ? upsample(m) : m, fb_w, fb_b, static_cast<int>(fb_w.h / 2)); }
    // Jacobian-transpose of B applied to r, bias excluded. Transposing the
    // scatter in conv_t gives a gather with fb_w read as [out=state, in=target].
    Arr Bt(const Arr& r) const {
        Arr d = conv(r, fb_w, {}, static_cast<int>(fb_w.h / 2));
        return pool ? upsample_transpose(d) : d;
    }
};

struct Net {
    std::vector<Block> blocks;
    std::vector<std::vector<double>> head_w;  // row-major [out, in]
    std::vector<std::vector<double>> head_b;
    std::vector<std::size_t> head_out;

    std::vector<double> logits(const Arr& top) const {
        std::vector<double> out;
        for (std::size_t n = 0; n < top.n; ++n) {
            std::vector<double> x(top.v.begin() + static_cast<long>(n * top.per_sample()),
                                  top.v.begin() + static_cast<long>((n + 1) * top.per_sample()));
            for (std::size_t l = 0; l < head_w.size(); ++l) {
                std::vector<double> y(head_out[l]);
                for (std::size_t o = 0; o < y.size(); ++o) {
                    double s = head_b[l][o];
                    for (std::size_t i = 0; i < x.size(); ++i) s += head_w[l][o * x.size() + i] * x[i];
                    y[o] = (l + 1 < head_w.size()) ? std::max(s, 0.0) : s;
                }
                x = std::move(y);
            }
            out.insert(out.end(), x.begin(), x.end());
        }
        return out;
    }
};

inline Net from_pcnet(const PCNet& net) {
    Net r;
    for (std::size_t i = 0; i < net.num_pcoders(); ++i) {
        const PCoder& pc = net.pcoder(i);
        r.blocks.push_back({from_tensor(pc.ff().weight), from_tensor(pc.fb().weight), to_vec(pc.ff().bias),
                            to_vec(pc.fb().bias), pc.ff().pool});
    }
    for (std::size_t l = 0; l < net.head().weights.size(); ++l) {
        r.head_w.push_back(to_vec(net.head().weights[l]));
        r.head_b.push_back(to_vec(net.head().biases[l]));
        r.head_out.push_back(net.head().weights[l].dim(0));
    }
    return r;
}

struct Trace {
    std::vector<std::vector<double>> logits;  // [t]
    std::vector<std::vector<double>> eps;     // [t][i]
    std::vector<std::vector<Arr>> states;     // [t][i]
};

/// m_i(t+1) = mu m_i(t) + gamma F_i(m_{i-1}(t+1)) + beta B_{i+1}(m_{i+1}(t))
///            - alpha sqrt(K^2/C) (2/K) B_i^T (B_i(m_i(t)) - m_{i-1}(t))
inline Trace run(const Net& net, const Arr& images, const std::vector<HyperParams>& hps, int T) {
    const std::size_t L = net.blocks.size();
    auto hp = [&](std::size_t i) { return hps.size() == 1 ? hps[0] : hps[i]; };
    std::vector<Arr> m(L);
    for (std::size_t i = 0; i < L; ++i) m[i] = net.blocks[i].F(i == 0 ? images : m[i - 1]);

    Trace tr;
    auto record = [&]() {
        tr.logits.push_back(net.logits(m[L - 1]));
        std::vector<double> e;
        for (std::size_t i = 0; i < L; ++i) e.push_back(mse(net.blocks[i].B(m[i]), i == 0 ? images : m[i - 1]));
        tr.eps.push_back(e);
        tr.states.push_back(m);
    };
    record();
    for (int t = 1; t <= T; ++t) {
        const std::vector<Arr> old = m;
        for (std::size_t i = 0; i < L; ++i) {
            const Block& b = net.blocks[i];
            const Arr& below_old = i == 0 ? images : old[i - 1];
            const Arr& below_new = i == 0 ? images : m[i - 1];
            Arr next(old[i].n, old[i].c, old[i].h, old[i].w);
            next = axpy(hp(i).mu, old[i], next);
            next = axpy(hp(i).gamma, b.F(below_new), next);
            if (i + 1 < L) next = axpy(hp(i).beta, net.blocks[i + 1].B(old[i + 1]), next);
            if (hp(i).alpha != 0) {
                Arr r = axpy(-1.0, below_old, b.B(old[i]));
                const double K = static_cast<double>(below_old.per_sample());
                const double k = static_cast<double>(b.fb_w.h);
                const double C = k * k * static_cast<double>(b.fb_w.c) * (b.pool ? 4.0 : 1.0);
                next = axpy(-hp(i).alpha * std::sqrt(K * K / C) * 2.0 / K, b.Bt(r), next);
            }
            m[i] = next;
        }
        record();
    }
    return tr;
}

/// 2-PCoder toy: [2,8,8] input, pooled 3-channel then unpooled 4-channel 3x3
/// blocks (both states 4x4), dense head to 3 classes.
inline NetSpec toy_spec() {
    NetSpec s;
    s.input_chw = {2, 8, 8};
    s.layers = {{3, 3, true}, {4, 3, false}};
    s.head_hidden = {};
    s.classes = 3;
    return s;
}

}  // namespace pcnet::testing::ref
