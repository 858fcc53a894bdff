#include "pcnet/optim.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

namespace {
void check_lr(double lr, const char* who) {
    if (!(lr > 0)) throw std::invalid_argument(fmt::format("{}: learning rate must be > 0, got {}", who, lr));
}
}  // namespace

Sgd::Sgd(std::vector<Tensor> params, SgdOptions options) : params_(std::move(params)), opt_(options) {
    check_lr(opt_.lr, "sgd");
    if (opt_.momentum < 0) throw std::invalid_argument("sgd: momentum must be >= 0");
    for (const auto& p : params_) velocity_.emplace_back(p.numel(), Real(0));
}

void Sgd::step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k];
        if (!p.has_grad()) continue;
        auto w = p.data();
        auto g = p.grad();
        auto& v = velocity_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const Real d = g[i] + static_cast<Real>(opt_.weight_decay) * w[i];
            v[i] = static_cast<Real>(opt_.momentum) * v[i] + d;
            w[i] -= static_cast<Real>(opt_.lr) * v[i];
        }
    }
    ++steps_;
}

void Sgd::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<ParamGroup> groups, AdamOptions options) : groups_(std::move(groups)), opt_(options) {
    for (const auto& g : groups_) {
        check_lr(g.lr, "adam");
        auto& gm = m_.emplace_back();
        auto& gv = v_.emplace_back();
        for (const auto& p : g.params) {
            gm.emplace_back(p.numel(), 0.0);
            gv.emplace_back(p.numel(), 0.0);
        }
    }
}

void Adam::step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        auto& group = groups_[gi];
        for (std::size_t k = 0; k < group.params.size(); ++k) {
            Tensor p = group.params[k];
            if (!p.has_grad()) continue;
            auto w = p.data();
            auto g = p.grad();
            auto& m = m_[gi][k];
            auto& v = v_[gi][k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double d = static_cast<double>(g[i]) + opt_.weight_decay * w[i];
                m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * d;
                v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * d * d;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                w[i] = static_cast<Real>(w[i] - group.lr * mhat / (std::sqrt(vhat) + opt_.eps));
            }
        }
    }
}

void Adam::zero_grad() {
    for (auto& g : groups_)
        for (auto& p : g.params) p.zero_grad();
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
