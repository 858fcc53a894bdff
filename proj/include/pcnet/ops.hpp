#pragma once

// Differentiable primitives. Every function here records a backward closure
// on the active tape when a tape is installed and at least one input
// requires grad. Outputs are checked for NaN/Inf.

#include "pcnet/tensor.hpp"

#include <cstdint>
#include <span>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {
namespace ops {

/// Cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout]
/// or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Linear adjoint of conv2d with the same weight. input [N,Ca,H,W],
/// weight [Ca,Cb,k,k], bias [Cb] or undefined. Output spatial size is
/// (H-1)*stride - 2*padding + k.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding);

/// Bilinear 2x upsampling, align_corners=false.
Tensor upsample_bilinear2x(const Tensor& input);
/// Adjoint of upsample_bilinear2x: [N,C,2H,2W] -> [N,C,H,W].
Tensor upsample_bilinear2x_adjoint(const Tensor& input);

Tensor relu(const Tensor& x);
/// 2x2 window, stride 2, floor on odd extents. Ties go to the first index
/// in scan order.
Tensor maxpool2x2(const Tensor& x);
/// x [N,in], weight [out,in], bias [out] or undefined.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);

/// Row-wise softmax over [N,C].
Tensor softmax(const Tensor& logits);
/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels);
/// Mean over all elements of (a-b)^2.
Tensor mse(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// x * s where s is a single-element tensor; differentiable in both.
Tensor scale(const Tensor& x, const Tensor& s);
Tensor mul_scalar(const Tensor& x, Real c);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Single element of x as a [1] tensor.
Tensor element(const Tensor& x, std::size_t index);

}  // namespace ops
}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
