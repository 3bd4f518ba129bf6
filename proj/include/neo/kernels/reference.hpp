#pragma once

// Serial reference versions of kernels.hpp. Kept deliberately plain: the
// parity tests and the benchmark compare the parallel kernels against these.

#include "neo/kernels/kernels.hpp"

namespace neo::kernels::reference {

template <std::floating_point T>
void gemm(GemmOp op, GemmDims dims, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate);

template <std::floating_point T>
void masked_softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> logits,
                         std::span<const std::uint8_t> mask, std::span<T> probs);

template <std::floating_point T>
void masked_softmax_rows_backward(std::size_t rows, std::size_t cols,
                                  std::span<const T> probs, std::span<const T> d_probs,
                                  std::span<T> d_logits);

template <std::floating_point T>
void rmsnorm_rows(std::size_t rows, std::size_t dim, std::span<const T> x,
                  std::span<const T> gamma, T eps, std::span<T> y, std::span<T> inv_rms);

template <std::floating_point T>
void rmsnorm_rows_backward(std::size_t rows, std::size_t dim, std::span<const T> x,
                           std::span<const T> gamma, std::span<const T> inv_rms,
                           std::span<const T> dy, std::span<T> dx, std::span<T> d_gamma);

template <std::floating_point T>
void attention_scores(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                      std::span<const std::uint8_t> mask, T scale, std::span<T> scores);

template <std::floating_point T>
void attention_forward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                       std::span<const T> v, std::span<const std::uint8_t> mask, T scale,
                       std::span<T> probs, std::span<T> out);

template <std::floating_point T>
void attention_backward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                        std::span<const T> v, std::span<const T> probs, T scale,
                        std::span<const T> d_out, QkParts<T> dq, QkParts<T> dk,
                        std::span<T> dv);

}  // namespace neo::kernels::reference
