#pragma once

// Central finite-difference gradient oracle. Lives in test code only; it
// shares nothing with the reverse pass except the forward primitives.

#include "pcnet/rng.hpp"
#include "pcnet/tape.hpp"
#include "pcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace pcnet::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline double rel_err(double a, double n, double floor) {
    const double scale = std::max({std::abs(a), std::abs(n), floor});
    return std::abs(a - n) / scale;
}

/// Compares d loss / d params from one reverse pass against central
/// differences. `loss` must rebuild the scalar from the current parameter
/// values. With `per_param` > 0 only that many randomly chosen entries of
/// each parameter are probed.
inline GradCheckResult gradcheck(std::vector<Tensor> params, const std::function<Tensor()>& loss, double h,
                                 std::size_t per_param = 0, std::uint64_t seed = 7, double floor = 1e-12) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor l = loss();
        tape.backward(l);
    }
    std::vector<std::vector<Real>> analytic;
    for (auto& p : params) {
        auto g = p.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    auto eval = [&]() {
        Tape::Pause pause;
        return static_cast<double>(loss().item());
    };

    GradCheckResult res;
    Rng rng(seed);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        std::vector<std::size_t> idx;
        if (per_param == 0 || per_param >= p.numel()) {
            for (std::size_t i = 0; i < p.numel(); ++i) idx.push_back(i);
        } else {
            for (std::size_t j = 0; j < per_param; ++j) idx.push_back(rng.below(p.numel()));
        }
        for (std::size_t i : idx) {
            const Real orig = p[i];
            p[i] = static_cast<Real>(orig + h);
            const double up = eval();
            p[i] = static_cast<Real>(orig - h);
            const double down = eval();
            p[i] = orig;
            // the actual step after rounding to Real
            const double step = static_cast<double>(static_cast<Real>(orig + h)) -
                                static_cast<double>(static_cast<Real>(orig - h));
            const double numeric = (up - down) / step;
            const double a = analytic[k][i];
            const double e = rel_err(a, numeric, floor);
            ++res.checked;
            if (e > res.max_rel_err) {
                res.max_rel_err = e;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

inline double inner(const Tensor& a, const Tensor& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

}  // namespace pcnet::testing
