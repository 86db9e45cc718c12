#pragma once

#include "glsgn/tensor.hpp"

namespace glsgn {

enum class Activation { Relu, LeakyRelu, Sigmoid, Tanh, Abs };

inline constexpr double kLeakySlope = 0.2;

// Zero-padded cross-correlation. input (B,C,H,W), weight (O,C,kH,kW), bias (O)
// or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

// align_corners = false, no antialiasing.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, int out_h, int out_w);

// Fixed d(.) of the pyramid code: 2x2 average pooling.
template <typename T>
Tensor<T> downsample2x(const Tensor<T>& input);

// Fixed u(.) of the pyramid code: bilinear x2.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input);

template <typename T>
Tensor<T> apply_elementwise(const Tensor<T>& input, Activation fn);

template <typename T> Tensor<T> relu(const Tensor<T>& x) { return apply_elementwise(x, Activation::Relu); }
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x) { return apply_elementwise(x, Activation::LeakyRelu); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) { return apply_elementwise(x, Activation::Sigmoid); }
template <typename T> Tensor<T> tanh(const Tensor<T>& x) { return apply_elementwise(x, Activation::Tanh); }
template <typename T> Tensor<T> abs(const Tensor<T>& x) { return apply_elementwise(x, Activation::Abs); }

// Clamps to [lo, hi]; gradient passes only strictly inside the interval.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// (B,C,H,W) -> (B,2,H,W): channel 0 is the mean over C, channel 1 the max.
// Max ties route the gradient to the first channel.
template <typename T>
Tensor<T> channel_stats(const Tensor<T>& input);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T value);

// x (N,C,H,W) scaled by s (N,C) per channel.
template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& scale);

// x (N,C,H,W) multiplied by a (N,1,H,W) broadcast over channels.
template <typename T>
Tensor<T> mul_spatial(const Tensor<T>& x, const Tensor<T>& a);

// (N,C,H,W) -> (N,C) sum over H and W.
template <typename T>
Tensor<T> spatial_sum(const Tensor<T>& x);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Mean absolute difference, the L1 loss used throughout.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Rows [begin, end) of the leading dimension.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, int begin, int end);

// Stacks along the leading dimension; every part must share trailing dims.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& parts);

// Weighted sum of scalars, sum_i w_i * s_i.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& scalars, const std::vector<T>& weights);

} // namespace glsgn
