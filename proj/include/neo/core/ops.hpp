#pragma once

// Differentiable operations on Tensor. Rank-2 tensors are [rows, cols].

#include <cstdint>
#include <span>
#include <vector>

#include "neo/core/tensor.hpp"

namespace neo::ops {

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// a[r, c] + bias[c]
template <std::floating_point T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);

// Normalises each row of width gamma.numel() (the last dimension).
template <std::floating_point T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gamma, T eps);

template <std::floating_point T>
Tensor<T> silu(const Tensor<T>& x);

// Exact erf form: x * Phi(x).
template <std::floating_point T>
Tensor<T> gelu(const Tensor<T>& x);

// Row softmax over entries with mask 1; forbidden entries get weight 0 and a
// row with nothing allowed is all zeros.
template <std::floating_point T>
Tensor<T> masked_softmax(const Tensor<T>& logits, std::span<const std::uint8_t> mask);

// Mean negative log-likelihood over rows whose target is >= 0. Throws
// ConfigError when no row has a target.
template <std::floating_point T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

// Gathers rows of table [vocab, dim].
template <std::floating_point T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <std::floating_point T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

template <std::floating_point T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count);

// Rotates adjacent channel pairs (2m, 2m+1) of each row of x [rows, d].
// Row r uses angle row r / rows_per_token of cos/sin, each [tokens, d/2].
template <std::floating_point T>
Tensor<T> rotate_pairs(const Tensor<T>& x, std::span<const T> cos, std::span<const T> sin,
                       std::size_t rows_per_token);

// Unfolds a [height*width, channels] grid into [out_h*out_w, k*k*channels]
// patches, column index (ky*k + kx)*channels + c. No padding.
template <std::floating_point T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t height, std::size_t width,
                 std::size_t kernel, std::size_t stride);

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x);

// sum_i x[i] * weights[i] with constant weights.
template <std::floating_point T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights);

}  // namespace neo::ops
