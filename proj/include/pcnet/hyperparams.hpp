#pragma once

// Predictive-coding hyper-parameters: memory (mu), feed-forward drive
// (gamma), feedback drive (beta) and error-correction rate (alpha).
// mu + gamma + beta = 1 is maintained through a sigmoid-normalized auxiliary
// parameterization; alpha is clamped at zero after every optimizer step.

#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

#include <string>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

struct HyperParams {
    double mu = 0.0;
    double gamma = 1.0;
    double beta = 0.0;
    double alpha = 0.0;

    /// Throws std::invalid_argument unless the simplex and alpha >= 0 hold.
    void validate(double tol = 1e-6) const;
    bool valid(double tol = 1e-6) const;

    /// gamma = 1, everything else 0: the plain feed-forward network.
    static HyperParams feedforward() { return {0.0, 1.0, 0.0, 0.0}; }

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct AuxParams {
    double mu_aux = 0.0;
    double gamma_aux = 0.0;
    double beta_aux = 0.0;
    double alpha_raw = 0.0;

    friend bool operator==(const AuxParams&, const AuxParams&) = default;
};

/// Ablation switches.
struct HPMask {
    bool zero_beta = false;
    bool zero_alpha = false;

    bool empty() const { return !zero_beta && !zero_alpha; }
    /// "full", "zero_beta", "zero_alpha" or "zero_beta+zero_alpha".
    std::string name() const;
    static HPMask parse(const std::string& name);

    friend bool operator==(const HPMask&, const HPMask&) = default;
};

double sigmoid(double x);
double logit(double p);

/// mu = s(mu_aux) / (s(mu_aux) + s(gamma_aux) + s(beta_aux)), likewise gamma
/// and beta; alpha = max(alpha_raw, 0). Masked terms are dropped from the
/// normalization.
HyperParams constrain(const AuxParams& aux, const HPMask& mask = {});

/// Independent uniform(0,1) draws u for the three simplex terms, stored as
/// logit(u) so that sigmoid recovers them; alpha uniform in [0,1].
AuxParams init_uniform(Rng& rng);

/// Zeroes masked fields; a zeroed beta renormalizes (mu, gamma) to sum to 1.
HyperParams apply_mask(const HyperParams& hp, const HPMask& mask);

/// Per-term coefficients as single-element tensors, consumed by the state
/// update. Tensors may require grad.
struct HPTerms {
    Tensor mu, gamma, beta, alpha;

    static HPTerms constant(const HyperParams& hp);
    HyperParams values() const;
};

/// Trainable auxiliary parameters for one hyper-parameter set.
class HyperParamVariables {
public:
    explicit HyperParamVariables(const AuxParams& aux = {});

    /// Coefficients under `mask`, recorded on the active tape.
    HPTerms terms(const HPMask& mask = {}) const;

    AuxParams aux() const;
    HyperParams constrained(const HPMask& mask = {}) const;
    /// alpha_raw <- max(alpha_raw, 0)
    void clamp_alpha();

    Tensor& simplex_aux() { return simplex_aux_; }
    Tensor& alpha() { return alpha_; }

private:
    Tensor simplex_aux_;  // [3] = mu, gamma, beta
    Tensor alpha_;        // [1]
};

/// Differentiable sigmoid-normalization of aux [3] into (mu, gamma, beta).
/// Masked entries are 0 and receive no gradient.
Tensor constrain_simplex(const Tensor& aux, bool zero_beta);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
