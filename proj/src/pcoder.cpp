#include "pcnet/pcoder.hpp"

#include "pcnet/ops.hpp"
#include "pcnet/tape.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>
#include <type_traits>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
    return t;
}

bool is_constant_zero(const Tensor& s) { return !s.requires_grad() && s.item() == Real(0); }

}  // namespace

ConvBlock::ConvBlock(std::size_t in_channels, const ConvLayerSpec& spec, Rng& rng) : pool(spec.pool) {
    if (spec.out_channels == 0 || spec.kernel < 1 || spec.kernel % 2 == 0) {
        throw std::invalid_argument(
            fmt::format("conv block needs out_channels > 0 and an odd kernel, got {} / {}", spec.out_channels,
                        spec.kernel));
    }
    const auto k = static_cast<std::size_t>(spec.kernel);
    const double fan_in = static_cast<double>(in_channels * k * k);
    weight = uniform_tensor({spec.out_channels, in_channels, k, k}, std::sqrt(6.0 / fan_in), rng);
    bias = Tensor({spec.out_channels});
}

Tensor ConvBlock::forward(const Tensor& x) const {
    Tensor y = ops::relu(ops::conv2d(x, weight, bias, 1, kernel() / 2));
    return pool ? ops::maxpool2x2(y) : y;
}

ConvBlock ConvBlock::clone() const {
    ConvBlock c;
    c.weight = weight.clone().set_requires_grad(weight.requires_grad());
    c.bias = bias.clone().set_requires_grad(bias.requires_grad());
    c.pool = pool;
    return c;
}

Decoder::Decoder(std::size_t state_channels, std::size_t target_channels, int kernel, bool upsample_, Rng& rng)
    : upsample(upsample_) {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("decoder kernel must be odd");
    const auto k = static_cast<std::size_t>(kernel);
    const double fan_in = static_cast<double>(state_channels * k * k);
    weight = uniform_tensor({state_channels, target_channels, k, k}, std::sqrt(3.0 / fan_in), rng);
    bias = Tensor({target_channels});
}

Tensor Decoder::forward(const Tensor& state) const {
    const Tensor up = upsample ? ops::upsample_bilinear2x(state) : state;
    return ops::conv_transpose2d(up, weight, bias, 1, kernel() / 2);
}

Tensor Decoder::adjoint(const Tensor& target_like) const {
    const Tensor down = ops::conv2d(target_like, weight, Tensor(), 1, kernel() / 2);
    return upsample ? ops::upsample_bilinear2x_adjoint(down) : down;
}

Decoder Decoder::clone() const {
    Decoder d;
    d.weight = weight.clone().set_requires_grad(weight.requires_grad());
    d.bias = bias.clone().set_requires_grad(bias.requires_grad());
    d.upsample = upsample;
    return d;
}

PCoder::PCoder(Shape input_chw, const ConvLayerSpec& spec, int decoder_kernel, Rng& rng)
    : PCoder(input_chw, ConvBlock(input_chw.at(0), spec, rng),
             Decoder(spec.out_channels, input_chw.at(0), decoder_kernel, spec.pool, rng)) {}

PCoder::PCoder(Shape input_chw, ConvBlock ff, Decoder fb)
    : input_chw_(std::move(input_chw)), ff_(std::move(ff)), fb_(std::move(fb)) {
    if (input_chw_.size() != 3) throw std::invalid_argument("PCoder input shape must be [C,H,W]");
    if (ff_.weight.dim(1) != input_chw_[0]) {
        throw std::invalid_argument(fmt::format("PCoder: feed-forward weight expects {} input channels, input has {}",
                                                ff_.weight.dim(1), input_chw_[0]));
    }
    if (fb_.weight.dim(0) != ff_.weight.dim(0) || fb_.weight.dim(1) != input_chw_[0]) {
        throw std::invalid_argument(fmt::format("PCoder: decoder weight {} must map {} state channels to {} target "
                                                "channels",
                                                shape_str(fb_.weight.shape()), ff_.weight.dim(0), input_chw_[0]));
    }
    // resolve shapes with a one-sample probe so mismatches surface here
    Tape::Pause pause;
    Tensor probe({1, input_chw_[0], input_chw_[1], input_chw_[2]});
    const Tensor s = ff_.forward(probe);
    state_chw_ = {s.dim(1), s.dim(2), s.dim(3)};
    const Tensor p = fb_.forward(s);
    const Shape pred_chw{p.dim(1), p.dim(2), p.dim(3)};
    if (pred_chw != input_chw_) {
        throw std::invalid_argument(fmt::format("PCoder: decoder predicts {} but the target is {}", shape_str(pred_chw),
                                                shape_str(input_chw_)));
    }
    const std::size_t k = static_cast<std::size_t>(fb_.kernel());
    const std::size_t s2 = fb_.upsample ? 4 : 1;
    c_ = k * k * input_chw_[0] * s2;
}

double PCoder::error_scale() const {
    const double k = static_cast<double>(K());
    return std::sqrt(k * k / static_cast<double>(c_));
}

void PCoder::check_input(const Tensor& below, const char* op) const {
    if (below.rank() != 4 || below.dim(1) != input_chw_[0] || below.dim(2) != input_chw_[1] ||
        below.dim(3) != input_chw_[2]) {
        throw std::invalid_argument(fmt::format("PCoder::{}: input shape {} does not match [N,{},{},{}]", op,
                                                shape_str(below.shape()), input_chw_[0], input_chw_[1],
                                                input_chw_[2]));
    }
}

void PCoder::invalidate() {
    prediction_ = Tensor();
    error_grad_ = Tensor();
    epsilon_.reset();
}

Tensor PCoder::feedforward(const Tensor& below) const {
    check_input(below, "feedforward");
    return ff_.forward(below);
}

const Tensor& PCoder::forward_init(const Tensor& below) {
    state_ = feedforward(below);
    invalidate();
    return state_;
}

const Tensor& PCoder::state() const {
    if (!state_.defined()) throw std::logic_error("PCoder state used before forward_init");
    return state_;
}

void PCoder::set_state(Tensor state) {
    if (state.rank() != 4 || state.dim(1) != state_chw_[0] || state.dim(2) != state_chw_[1] ||
        state.dim(3) != state_chw_[2]) {
        throw std::invalid_argument(fmt::format("PCoder::set_state: shape {} is not [N,{},{},{}]",
                                                shape_str(state.shape()), state_chw_[0], state_chw_[1],
                                                state_chw_[2]));
    }
    state_ = std::move(state);
    invalidate();
}

const Tensor& PCoder::predict() {
    prediction_ = fb_.forward(state());
    epsilon_.reset();
    error_grad_ = Tensor();
    return prediction_;
}

Tensor PCoder::prediction_error(const Tensor& target) {
    if (!prediction_.defined()) predict();
    check_input(target, "prediction_error");
    if (target.dim(0) != prediction_.dim(0)) {
        throw std::invalid_argument(fmt::format("PCoder::prediction_error: batch {} vs prediction batch {}",
                                                target.dim(0), prediction_.dim(0)));
    }
    Tensor eps = ops::mse(prediction_, target);
    epsilon_ = static_cast<double>(eps.item());
    return eps;
}

Tensor PCoder::scaled_error_gradient(const Tensor& target, bool detach) {
    if (!prediction_.defined()) predict();
    check_input(target, "scaled_error_gradient");
    // d eps/dm for one sample is (2/K) B^T(p - target); with the sqrt(K^2/C)
    // factor the K cancels.
    const Real factor = static_cast<Real>(2.0 * error_scale() / static_cast<double>(K()));
    if (detach) {
        Tape::Pause pause;
        error_grad_ = ops::mul_scalar(fb_.adjoint(ops::sub(prediction_, target)), factor);
    } else {
        error_grad_ = ops::mul_scalar(fb_.adjoint(ops::sub(prediction_, target)), factor);
    }
    return error_grad_;
}

const Tensor& PCoder::step(const Tensor& ff_input, const std::optional<Tensor>& feedback, const HPTerms& hp) {
    const HyperParams values = hp.values();
    // beta is meaningless without feedback but the simplex must still hold
    values.validate(std::is_same_v<Real, float> ? 1e-5 : 1e-9);
    const Tensor& m = state();
    if (feedback && feedback->shape() != m.shape()) {
        throw std::invalid_argument(fmt::format("PCoder::step: feedback shape {} vs state {}",
                                                shape_str(feedback->shape()), shape_str(m.shape())));
    }

    Tensor next;
    auto accumulate = [&next](const Tensor& term) { next = next.defined() ? ops::add(next, term) : term; };

    if (!is_constant_zero(hp.mu)) accumulate(ops::scale(m, hp.mu));
    if (!is_constant_zero(hp.gamma)) {
        Tensor drive = feedforward(ff_input);
        if (drive.shape() != m.shape()) {
            throw std::invalid_argument(fmt::format("PCoder::step: feed-forward drive {} vs state {}",
                                                    shape_str(drive.shape()), shape_str(m.shape())));
        }
        accumulate(ops::scale(drive, hp.gamma));
    }
    if (feedback && !is_constant_zero(hp.beta)) accumulate(ops::scale(*feedback, hp.beta));
    if (!is_constant_zero(hp.alpha)) {
        if (!error_grad_.defined()) {
            throw std::logic_error("PCoder::step: alpha > 0 needs scaled_error_gradient() on the current state");
        }
        Tensor correction = ops::scale(error_grad_, hp.alpha);
        next = next.defined() ? ops::sub(next, correction) : ops::mul_scalar(correction, Real(-1));
    }
    if (!next.defined()) next = Tensor(m.shape());

    state_ = next;
    invalidate();
    return state_;
}

PCoder PCoder::clone() const {
    PCoder c(input_chw_, ff_.clone(), fb_.clone());
    if (state_.defined()) c.state_ = state_.clone();
    return c;
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
