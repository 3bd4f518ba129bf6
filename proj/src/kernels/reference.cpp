#include "neo/kernels/reference.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace neo::kernels::reference {

template <std::floating_point T>
void gemm(GemmOp op, GemmDims dims, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate) {
  const auto [m, n, k] = dims;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        T av = 0;
        T bv = 0;
        switch (op) {
          case GemmOp::kNN: av = a[i * k + p]; bv = b[p * n + j]; break;
          case GemmOp::kNT: av = a[i * k + p]; bv = b[j * k + p]; break;
          case GemmOp::kTN: av = a[p * m + i]; bv = b[p * n + j]; break;
        }
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template <std::floating_point T>
void masked_softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> logits,
                         std::span<const std::uint8_t> mask, std::span<T> probs) {
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask[r * cols + j]) {
        any = true;
        if (logits[r * cols + j] > mx) mx = logits[r * cols + j];
      }
    }
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const T e = (any && mask[r * cols + j]) ? std::exp(logits[r * cols + j] - mx) : T{0};
      probs[r * cols + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      probs[r * cols + j] = any ? probs[r * cols + j] / sum : T{0};
    }
  }
}

template <std::floating_point T>
void masked_softmax_rows_backward(std::size_t rows, std::size_t cols,
                                  std::span<const T> probs, std::span<const T> d_probs,
                                  std::span<T> d_logits) {
  for (std::size_t r = 0; r < rows; ++r) {
    T inner = 0;
    for (std::size_t j = 0; j < cols; ++j) inner += probs[r * cols + j] * d_probs[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) {
      d_logits[r * cols + j] = probs[r * cols + j] * (d_probs[r * cols + j] - inner);
    }
  }
}

template <std::floating_point T>
void rmsnorm_rows(std::size_t rows, std::size_t dim, std::span<const T> x,
                  std::span<const T> gamma, T eps, std::span<T> y, std::span<T> inv_rms) {
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t c = 0; c < dim; ++c) ss += x[r * dim + c] * x[r * dim + c];
    const T inv = T{1} / std::sqrt(ss / static_cast<T>(dim) + eps);
    inv_rms[r] = inv;
    for (std::size_t c = 0; c < dim; ++c) y[r * dim + c] = x[r * dim + c] * inv * gamma[c];
  }
}

template <std::floating_point T>
void rmsnorm_rows_backward(std::size_t rows, std::size_t dim, std::span<const T> x,
                           std::span<const T> gamma, std::span<const T> inv_rms,
                           std::span<const T> dy, std::span<T> dx, std::span<T> d_gamma) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T inv = inv_rms[r];
    T inner = 0;
    for (std::size_t c = 0; c < dim; ++c) inner += x[r * dim + c] * (gamma[c] * dy[r * dim + c]);
    const T coef = inv * inv * inv * inner / static_cast<T>(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      dx[r * dim + c] = inv * (gamma[c] * dy[r * dim + c]) - x[r * dim + c] * coef;
    }
  }
  if (d_gamma.empty()) return;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      d_gamma[c] += dy[r * dim + c] * (x[r * dim + c] * inv_rms[r]);
    }
  }
}

namespace {

template <std::floating_point T>
T qk_dot(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k, std::size_t h,
         std::size_t i, std::size_t j) {
  const std::size_t g = h / dims.group();
  T acc = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t d = dims.d_qk[a];
    if (d == 0) continue;
    T part = 0;
    for (std::size_t c = 0; c < d; ++c) {
      part += q.part[a][i * dims.q_heads * d + h * d + c] *
              k.part[a][j * dims.kv_heads * d + g * d + c];
    }
    acc += part;
  }
  return acc;
}

}  // namespace

template <std::floating_point T>
void attention_scores(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                      std::span<const std::uint8_t> mask, T scale, std::span<T> scores) {
  const std::size_t n = dims.n;
  for (std::size_t h = 0; h < dims.q_heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        scores[(h * n + i) * n + j] = mask[i * n + j]
                                          ? qk_dot(dims, q, k, h, i, j) * scale
                                          : -std::numeric_limits<T>::infinity();
      }
    }
  }
}

template <std::floating_point T>
void attention_forward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                       std::span<const T> v, std::span<const std::uint8_t> mask, T scale,
                       std::span<T> probs, std::span<T> out) {
  const std::size_t n = dims.n;
  const std::size_t dv = dims.d_v;
  std::vector<T> scores(dims.q_heads * n * n);
  reference::attention_scores<T>(dims, q, k, mask, scale, scores);
  for (std::size_t h = 0; h < dims.q_heads; ++h) {
    masked_softmax_rows<T>(n, n, std::span<const T>(scores).subspan(h * n * n, n * n), mask,
                           probs.subspan(h * n * n, n * n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < dims.q_heads; ++h) {
      const std::size_t g = h / dims.group();
      for (std::size_t c = 0; c < dv; ++c) {
        T s = 0;
        for (std::size_t j = 0; j < n; ++j) {
          s += probs[(h * n + i) * n + j] * v[j * dims.kv_heads * dv + g * dv + c];
        }
        out[i * dims.q_heads * dv + h * dv + c] = s;
      }
    }
  }
}

template <std::floating_point T>
void attention_backward(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                        std::span<const T> v, std::span<const T> probs, T scale,
                        std::span<const T> d_out, QkParts<T> dq, QkParts<T> dk,
                        std::span<T> dv) {
  const std::size_t n = dims.n;
  const std::size_t dvw = dims.d_v;
  std::vector<T> dp(n * n);
  std::vector<T> ds(n * n);
  for (std::size_t h = 0; h < dims.q_heads; ++h) {
    const std::size_t g = h / dims.group();
    const auto p = probs.subspan(h * n * n, n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T s = 0;
        for (std::size_t c = 0; c < dvw; ++c) {
          s += d_out[i * dims.q_heads * dvw + h * dvw + c] *
               v[j * dims.kv_heads * dvw + g * dvw + c];
        }
        dp[i * n + j] = s;
      }
    }
    masked_softmax_rows_backward<T>(n, n, p, dp, ds);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T w = ds[i * n + j] * scale;
        for (std::size_t c = 0; c < dvw; ++c) {
          dv[j * dims.kv_heads * dvw + g * dvw + c] +=
              p[i * n + j] * d_out[i * dims.q_heads * dvw + h * dvw + c];
        }
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t d = dims.d_qk[a];
          for (std::size_t c = 0; c < d; ++c) {
            dq.part[a][i * dims.q_heads * d + h * d + c] +=
                w * k.part[a][j * dims.kv_heads * d + g * d + c];
            dk.part[a][j * dims.kv_heads * d + g * d + c] +=
                w * q.part[a][i * dims.q_heads * d + h * d + c];
          }
        }
      }
    }
  }
}

#define NEO_INSTANTIATE_REFERENCE(T)                                                    \
  template void gemm<T>(GemmOp, GemmDims, std::span<const T>, std::span<const T>,      \
                        std::span<T>, bool);                                           \
  template void masked_softmax_rows<T>(std::size_t, std::size_t, std::span<const T>,   \
                                       std::span<const std::uint8_t>, std::span<T>);   \
  template void masked_softmax_rows_backward<T>(std::size_t, std::size_t,              \
                                                std::span<const T>, std::span<const T>, \
                                                std::span<T>);                         \
  template void rmsnorm_rows<T>(std::size_t, std::size_t, std::span<const T>,          \
                                std::span<const T>, T, std::span<T>, std::span<T>);    \
  template void rmsnorm_rows_backward<T>(std::size_t, std::size_t, std::span<const T>, \
                                         std::span<const T>, std::span<const T>,       \
                                         std::span<const T>, std::span<T>,             \
                                         std::span<T>);                                \
  template void attention_scores<T>(const AttentionDims&, QkParts<const T>,            \
                                    QkParts<const T>, std::span<const std::uint8_t>,   \
                                    T, std::span<T>);                                  \
  template void attention_forward<T>(const AttentionDims&, QkParts<const T>,           \
                                     QkParts<const T>, std::span<const T>,             \
                                     std::span<const std::uint8_t>, T, std::span<T>,   \
                                     std::span<T>);                                    \
  template void attention_backward<T>(const AttentionDims&, QkParts<const T>,          \
                                      QkParts<const T>, std::span<const T>,            \
                                      std::span<const T>, T, std::span<const T>,       \
                                      QkParts<T>, QkParts<T>, std::span<T>);

NEO_INSTANTIATE_REFERENCE(float)
NEO_INSTANTIATE_REFERENCE(double)
NEO_INSTANTIATE_REFERENCE(long double)

}  // namespace neo::kernels::reference
