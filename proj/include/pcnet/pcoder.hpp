#pragma once

// One predictive-coding block.
//
// The feed-forward map F is conv -> relu -> (2x2 maxpool). The feedback map
// B predicts the block's input from its state: bilinear 2x upsampling (only
// when F pools) followed by a 3x3 transposed convolution back to the input's
// channel count. The state update is
//
//   m(t+1) = mu*m(t) + gamma*F(m_below(t+1)) + beta*B_above(m_above(t))
//            - alpha*g(t)
//
// where g is the gradient of the prediction error with respect to m, scaled
// by sqrt(K^2/C) and taken per sample (independent of the batch size).

#include "pcnet/hyperparams.hpp"
#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

struct ConvLayerSpec {
    std::size_t out_channels = 0;
    int kernel = 5;
    bool pool = true;
};

/// conv (same padding) -> relu -> optional 2x2 maxpool.
struct ConvBlock {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out]
    bool pool = true;

    ConvBlock() = default;
    ConvBlock(std::size_t in_channels, const ConvLayerSpec& spec, Rng& rng);

    Tensor forward(const Tensor& x) const;
    int kernel() const { return static_cast<int>(weight.dim(2)); }
    std::size_t param_count() const { return weight.numel() + bias.numel(); }
    ConvBlock clone() const;
};

/// (upsample 2x) -> 3x3 transposed conv, no nonlinearity.
struct Decoder {
    Tensor weight;  // [state_channels, target_channels, k, k]
    Tensor bias;    // [target_channels]
    bool upsample = true;

    Decoder() = default;
    Decoder(std::size_t state_channels, std::size_t target_channels, int kernel, bool upsample, Rng& rng);

    Tensor forward(const Tensor& state) const;
    /// Linear adjoint of forward() (bias excluded): target-shaped -> state-shaped.
    Tensor adjoint(const Tensor& target_like) const;
    int kernel() const { return static_cast<int>(weight.dim(2)); }
    std::size_t param_count() const { return weight.numel() + bias.numel(); }
    Decoder clone() const;
};

class PCoder {
public:
    /// Block fed by a [C,H,W] input (per sample).
    PCoder(Shape input_chw, const ConvLayerSpec& spec, int decoder_kernel, Rng& rng);
    PCoder(Shape input_chw, ConvBlock ff, Decoder fb);

    const ConvBlock& ff() const { return ff_; }
    ConvBlock& ff() { return ff_; }
    const Decoder& fb() const { return fb_; }
    Decoder& fb() { return fb_; }

    /// Per-sample [C,H,W] of the block input (= prediction target) and state.
    const Shape& input_shape() const { return input_chw_; }
    const Shape& state_shape() const { return state_chw_; }
    /// Elements per sample of the prediction target.
    std::size_t K() const { return shape_numel(input_chw_); }
    /// Target elements influenced by one state element: k*k*c_target*s^2.
    std::size_t C() const { return c_; }
    /// sqrt(K^2 / C)
    double error_scale() const;

    /// F applied to `below` without touching the state.
    Tensor feedforward(const Tensor& below) const;
    /// m(0) = F(below).
    const Tensor& forward_init(const Tensor& below);

    /// B(m): prediction of this block's input from its current state.
    const Tensor& predict();
    /// mse(prediction, target) over all elements, batch included.
    Tensor prediction_error(const Tensor& target);
    /// sqrt(K^2/C) * per-sample d(eps)/dm from the cached prediction. With
    /// `detach` the result is a constant for autodiff.
    Tensor scaled_error_gradient(const Tensor& target, bool detach = false);

    /// One state update. `feedback` is B_above(m_above(t)) or absent for the
    /// top block (beta term dropped). The alpha term uses the error gradient
    /// cached by the last scaled_error_gradient() on the current state; it
    /// is skipped when alpha is a constant zero.
    const Tensor& step(const Tensor& ff_input, const std::optional<Tensor>& feedback, const HPTerms& hp);

    bool has_state() const { return state_.defined(); }
    const Tensor& state() const;
    void set_state(Tensor state);
    const Tensor& prediction() const { return prediction_; }
    const Tensor& error_gradient() const { return error_grad_; }
    std::optional<double> epsilon() const { return epsilon_; }

    PCoder clone() const;

private:
    void check_input(const Tensor& below, const char* op) const;
    void invalidate();

    Shape input_chw_;
    Shape state_chw_;
    ConvBlock ff_;
    Decoder fb_;
    std::size_t c_ = 1;

    Tensor state_;
    Tensor prediction_;
    Tensor error_grad_;
    std::optional<double> epsilon_;
};

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
