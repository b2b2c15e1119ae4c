#pragma once

#include <cstdint>
#include <utility>

#include "captnet/tensor.hpp"

namespace captnet {

/// Accumulates multiply-accumulate counts from instrumented ops. Owned by
/// the caller of one evaluation; never shared between evaluations.
struct MacCounter {
    std::uint64_t macs = 0;
    void reset() { macs = 0; }
};

/// 2-D convolution, stride 1, zero padding k/2 ("same" output size).
/// x: [N,Cin,H,W], w: [Cout, Cin/groups, k, k] with k in {1,3}, b: [Cout].
/// groups must be 1 or Cin; with groups == Cin, Cout must equal Cin
/// (depthwise).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t groups = 1);

/// Normalizes over axis 1 (channels) independently at every other index,
/// then applies per-channel gamma/shift. Rank >= 2.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& shift, double eps = 1e-6);

/// Max-subtracted softmax along the final axis.
Tensor softmax_lastdim(const Tensor& x);

/// Per-batch product of the trailing two dims; leading dims must be equal.
/// Adds batch*m*k*n to `counter` when given.
Tensor batched_matmul(const Tensor& a, const Tensor& b, MacCounter* counter = nullptr);

/// Swaps the trailing two axes.
Tensor transpose_last2(const Tensor& x);

/// [N,C,H,W] -> [N,C*r*r,H/r,W/r]. Output channel c*r*r + i*r + j holds
/// input pixel (y*r + i, x*r + j) of channel c (sub-grid index fastest,
/// row-major within the r x r cell).
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);
/// Exact inverse of pixel_unshuffle under the same channel ordering.
Tensor pixel_shuffle(const Tensor& x, std::size_t r);

enum class ResampleDirection { Shuffle, Unshuffle };
Tensor pixel_resample(const Tensor& x, std::size_t r, ResampleDirection direction);

/// [N,C,H,W] -> [N,C,1,1] spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// Channels [begin, begin+count) of a tensor with rank >= 2.
Tensor channel_slice(const Tensor& x, std::size_t begin, std::size_t count);
std::pair<Tensor, Tensor> channel_chunk2(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Broadcasting rule for the binary ops: the result has a's shape; b is
/// right-aligned against a and each of its dims must equal a's or be 1.
/// Gradients w.r.t. b are summed over the broadcast dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

enum class ElementwiseOp { Add, Mul };
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseOp op, const Tensor& a, double b);

Tensor reshape(const Tensor& x, Shape shape);

/// x / max(||x||_2, eps) along the final axis.
Tensor l2_normalize_lastdim(const Tensor& x, double eps = 1e-12);

/// 1/x with |x| clamped to at least `min_abs` (sign kept, zero maps to
/// +min_abs). Gradient is zero where the clamp is active.
Tensor reciprocal_clamped(const Tensor& x, double min_abs);

Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

} // namespace captnet
