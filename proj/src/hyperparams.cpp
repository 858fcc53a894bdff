#include "pcnet/hyperparams.hpp"

#include "pcnet/ops.hpp"
#include "pcnet/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

bool HyperParams::valid(double tol) const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    return std::isfinite(mu) && std::isfinite(gamma) && std::isfinite(beta) && std::isfinite(alpha) && in01(mu) &&
           in01(gamma) && in01(beta) && alpha >= 0.0 && std::abs(mu + gamma + beta - 1.0) <= tol;
}

void HyperParams::validate(double tol) const {
    if (!valid(tol)) {
        throw std::invalid_argument(fmt::format(
            "invalid hyper-parameters mu={} gamma={} beta={} alpha={} (need mu,gamma,beta in [0,1] summing to 1, "
            "alpha >= 0)",
            mu, gamma, beta, alpha));
    }
}

std::string HPMask::name() const {
    if (zero_beta && zero_alpha) return "zero_beta+zero_alpha";
    if (zero_beta) return "zero_beta";
    if (zero_alpha) return "zero_alpha";
    return "full";
}

HPMask HPMask::parse(const std::string& name) {
    if (name == "full" || name.empty()) return {};
    if (name == "zero_beta") return {true, false};
    if (name == "zero_alpha") return {false, true};
    if (name == "zero_beta+zero_alpha") return {true, true};
    throw std::invalid_argument(fmt::format("unknown mask '{}'", name));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

HyperParams constrain(const AuxParams& aux, const HPMask& mask) {
    const double sm = sigmoid(aux.mu_aux);
    const double sg = sigmoid(aux.gamma_aux);
    const double sb = mask.zero_beta ? 0.0 : sigmoid(aux.beta_aux);
    const double z = sm + sg + sb;
    HyperParams hp;
    hp.mu = sm / z;
    hp.gamma = sg / z;
    hp.beta = sb / z;
    hp.alpha = mask.zero_alpha ? 0.0 : std::max(aux.alpha_raw, 0.0);
    return hp;
}

AuxParams init_uniform(Rng& rng) {
    AuxParams aux;
    aux.mu_aux = logit(rng.uniform_open());
    aux.gamma_aux = logit(rng.uniform_open());
    aux.beta_aux = logit(rng.uniform_open());
    aux.alpha_raw = rng.uniform();
    return aux;
}

HyperParams apply_mask(const HyperParams& hp, const HPMask& mask) {
    HyperParams out = hp;
    if (mask.zero_beta) {
        const double z = hp.mu + hp.gamma;
        if (z <= 0.0) throw std::invalid_argument("apply_mask: zero_beta with mu + gamma = 0 cannot renormalize");
        out.mu = hp.mu / z;
        out.gamma = hp.gamma / z;
        out.beta = 0.0;
    }
    if (mask.zero_alpha) out.alpha = 0.0;
    return out;
}

HPTerms HPTerms::constant(const HyperParams& hp) {
    return {Tensor::scalar(static_cast<Real>(hp.mu)), Tensor::scalar(static_cast<Real>(hp.gamma)),
            Tensor::scalar(static_cast<Real>(hp.beta)), Tensor::scalar(static_cast<Real>(hp.alpha))};
}

HyperParams HPTerms::values() const { return {mu.item(), gamma.item(), beta.item(), alpha.item()}; }

Tensor constrain_simplex(const Tensor& aux, bool zero_beta) {
    if (aux.numel() != 3) {
        throw std::invalid_argument(fmt::format("constrain_simplex: expected 3 values, got {}", aux.numel()));
    }
    std::array<double, 3> s{};
    double z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        s[j] = (zero_beta && j == 2) ? 0.0 : sigmoid(aux[j]);
        z += s[j];
    }
    Tensor out({3}, std::vector<Real>{static_cast<Real>(s[0] / z), static_cast<Real>(s[1] / z),
                                      static_cast<Real>(s[2] / z)});
    ensure_finite(out, "constrain_simplex");
    if (Tape::active() != nullptr && aux.requires_grad()) {
        out.set_requires_grad(true);
        Tape::active()->record("constrain_simplex", [aux = Tensor(aux), out, s, z, zero_beta]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            double dot = 0;
            for (std::size_t k = 0; k < 3; ++k) dot += g[k] * (s[k] / z);
            auto da = aux.grad();
            for (std::size_t j = 0; j < 3; ++j) {
                if (zero_beta && j == 2) continue;
                // d(s_j/z)/d s_j terms collapse to (g_j - <g,y>)/z; ds_j/da_j = s_j(1-s_j)
                da[j] += static_cast<Real>((g[j] - dot) / z * s[j] * (1.0 - s[j]));
            }
        });
    }
    return out;
}

HyperParamVariables::HyperParamVariables(const AuxParams& aux)
    : simplex_aux_({3}, std::vector<Real>{static_cast<Real>(aux.mu_aux), static_cast<Real>(aux.gamma_aux),
                                          static_cast<Real>(aux.beta_aux)}),
      alpha_(Tensor::scalar(static_cast<Real>(aux.alpha_raw))) {
    simplex_aux_.set_requires_grad(true);
    alpha_.set_requires_grad(true);
}

HPTerms HyperParamVariables::terms(const HPMask& mask) const {
    const Tensor simplex = constrain_simplex(simplex_aux_, mask.zero_beta);
    HPTerms t;
    t.mu = ops::element(simplex, 0);
    t.gamma = ops::element(simplex, 1);
    t.beta = mask.zero_beta ? Tensor::scalar(0) : ops::element(simplex, 2);
    t.alpha = mask.zero_alpha ? Tensor::scalar(0) : alpha_;
    return t;
}

AuxParams HyperParamVariables::aux() const {
    return {simplex_aux_[0], simplex_aux_[1], simplex_aux_[2], alpha_[0]};
}

HyperParams HyperParamVariables::constrained(const HPMask& mask) const { return constrain(aux(), mask); }

void HyperParamVariables::clamp_alpha() {
    if (alpha_[0] < Real(0)) alpha_[0] = Real(0);
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
