#pragma once

// Dense inner loops shared by the autograd ops. Every routine here has a
// serial twin in kernels::reference (reference.hpp) with the same contract.
//
// Parallel loops split only over independent output rows (or kv-head groups
// for attention), never over a reduction, so results do not depend on the
// thread count.

#include <array>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>

namespace neo::kernels {

// kNN: C[m,n] = A[m,k] B[k,n]
// kNT: C[m,n] = A[m,k] B[n,k]^T
// kTN: C[m,n] = A[k,m]^T B[k,n]
enum class GemmOp { kNN, kNT, kTN };

struct GemmDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
};

template <std::floating_point T>
void gemm(GemmOp op, GemmDims dims, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate);

// Row-wise softmax over allowed entries (mask value 1). A row with no
// allowed entry produces all zeros.
template <std::floating_point T>
void masked_softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> logits,
                         std::span<const std::uint8_t> mask, std::span<T> probs);

// d_logits = P * (d_probs - rowsum(P * d_probs)); overwrites d_logits.
template <std::floating_point T>
void masked_softmax_rows_backward(std::size_t rows, std::size_t cols,
                                  std::span<const T> probs, std::span<const T> d_probs,
                                  std::span<T> d_logits);

// y = x / sqrt(mean(x^2) + eps) * gamma, per row of width dim.
template <std::floating_point T>
void rmsnorm_rows(std::size_t rows, std::size_t dim, std::span<const T> x,
                  std::span<const T> gamma, T eps, std::span<T> y, std::span<T> inv_rms);

// dx is overwritten, d_gamma is accumulated.
template <std::floating_point T>
void rmsnorm_rows_backward(std::size_t rows, std::size_t dim, std::span<const T> x,
                           std::span<const T> gamma, std::span<const T> inv_rms,
                           std::span<const T> dy, std::span<T> dx, std::span<T> d_gamma);

// Attention over expanded query/key heads. Axis 0/1/2 are the T/H/W parts.
// Query part a is laid out [n, q_heads * d_qk[a]], key part a is
// [n, kv_heads * d_qk[a]], values [n, kv_heads * d_v]. Query head h reads
// kv head h / (q_heads / kv_heads).
struct AttentionDims {
  std::size_t n = 0;
  std::size_t q_heads = 0;
  std::size_t kv_heads = 0;
  std::array<std::size_t, 3> d_qk{};
  std::size_t d_v = 0;

  std::size_t group() const { return q_heads / kv_heads; }
};

template <typename E>
struct QkParts {
  std::array<std::span<E>, 3> part;
};

// scores[h, i, j] = scale * (qT.kT + qH.kH + qW.kW), -inf where forbidden.
template <std::floating_point T>
void attention_scores(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                      std::span<const std::uint8_t> mask, T scale, std::span<T> scores);

// probs: [q_heads, n, n]; out: [n, q_heads * d_v].
template <std::floating_point T>
void attention_forward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                       std::span<const T> v, std::span<const std::uint8_t> mask, T scale,
                       std::span<T> probs, std::span<T> out);

// Gradients are accumulated into dq, dk, dv.
template <std::floating_point T>
void attention_backward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                        std::span<const T> v, std::span<const T> probs, T scale,
                        std::span<const T> d_out, QkParts<T> dq, QkParts<T> dk,
                        std::span<T> dv);

// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace neo::kernels
