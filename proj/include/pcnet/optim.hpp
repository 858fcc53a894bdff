#pragma once

#include "pcnet/tensor.hpp"

#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

/// Parameters sharing one learning rate.
struct ParamGroup {
    std::vector<Tensor> params;
    double lr = 0.01;
};

struct SgdOptions {
    double lr = 0.01;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

/// SGD with heavy-ball momentum: v <- m*v + (g + wd*p); p <- p - lr*v.
class Sgd {
public:
    Sgd(std::vector<Tensor> params, SgdOptions options);

    void step();
    void zero_grad();
    std::size_t steps() const { return steps_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<Real>> velocity_;
    SgdOptions opt_;
    std::size_t steps_ = 0;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam with bias correction and per-group learning rates.
class Adam {
public:
    Adam(std::vector<ParamGroup> groups, AdamOptions options);

    void step();
    void zero_grad();
    std::size_t steps() const { return steps_; }

private:
    std::vector<ParamGroup> groups_;
    std::vector<std::vector<std::vector<double>>> m_, v_;
    AdamOptions opt_;
    std::size_t steps_ = 0;
};

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
