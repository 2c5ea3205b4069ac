#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcnet/tensor.hpp"

// The fixed set of differentiable operations the model is built from. Each op
// records itself on the active tape when at least one input requires a
// gradient; otherwise it is a plain forward computation.
namespace pcnet {

// input [B,C,H,W], kernel [C',C,kh,kw] -> [B,C',H',W'] with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad);

// x [B,C,...] + bias [C] broadcast over every trailing position.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

// 1D cross-channel convolution, odd kernel length, zero padding (k-1)/2, no
// bias. Accepts a single vector [C] or a batch of rows [B,C].
template <typename T>
Tensor<T> conv1d_channels(const Tensor<T>& v, const Tensor<T>& kernel);

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& f);

// x [B,D] (or [D]) times W[N,D] transposed, plus b[N].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Max-subtracted softmax over the last axis of a [N] or [B,N] tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& z);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z);

// Subgradient 0 at the kink.
template <typename T>
Tensor<T> relu(const Tensor<T>& z);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);

// Concatenation along axis 1 (channels); a's channels come first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// f [B,C,H,W] scaled per (b,c) by weights [B,C].
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& f, const Tensor<T>& weights);

// Selects rows along axis 0; repeated indices accumulate gradient.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

// q [B,N], one column per row -> [B]; or q [N] with a single index -> scalar.
template <typename T>
Tensor<T> pick(const Tensor<T>& q, std::span<const std::size_t> columns);

// -log(max(x, 1e-12)) elementwise; zero gradient where the clamp is active.
template <typename T>
Tensor<T> neg_log_clamped(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

inline constexpr double kLogClamp = 1e-12;

}  // namespace pcnet
