#include "neo/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neo::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

template <std::floating_point T>
T dot(const T* a, const T* b, std::size_t len) {
  T acc = 0;
  for (std::size_t c = 0; c < len; ++c) acc += a[c] * b[c];
  return acc;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <std::floating_point T>
void gemm(GemmOp op, GemmDims dims, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate) {
  const auto [m, n, k] = dims;
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  const bool parallel = m * n * k >= kParallelWork && m > 1;
#pragma omp parallel if (parallel)
  {
    std::vector<T> acc(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(m); ++si) {
      const auto i = static_cast<std::size_t>(si);
      std::fill(acc.begin(), acc.end(), T{0});
      switch (op) {
        case GemmOp::kNN:
          for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
          }
          break;
        case GemmOp::kNT:
          for (std::size_t j = 0; j < n; ++j) acc[j] = dot(pa + i * k, pb + j * k, k);
          break;
        case GemmOp::kTN:
          for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[p * m + i];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
          }
          break;
      }
      T* crow = pc + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), crow);
      }
    }
  }
}

template <std::floating_point T>
void masked_softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> logits,
                         std::span<const std::uint8_t> mask, std::span<T> probs) {
  const bool parallel = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(rows); ++si) {
    const auto r = static_cast<std::size_t>(si);
    const T* x = logits.data() + r * cols;
    const std::uint8_t* allowed = mask.data() + r * cols;
    T* p = probs.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed[j]) mx = std::max(mx, x[j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(p, p + cols, T{0});
      continue;
    }
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      p[j] = allowed[j] ? std::exp(x[j] - mx) : T{0};
      sum += p[j];
    }
    for (std::size_t j = 0; j < cols; ++j) p[j] /= sum;
  }
}

template <std::floating_point T>
void masked_softmax_rows_backward(std::size_t rows, std::size_t cols,
                                  std::span<const T> probs, std::span<const T> d_probs,
                                  std::span<T> d_logits) {
  const bool parallel = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(rows); ++si) {
    const auto r = static_cast<std::size_t>(si);
    const T* p = probs.data() + r * cols;
    const T* dp = d_probs.data() + r * cols;
    T* dx = d_logits.data() + r * cols;
    const T inner = dot(p, dp, cols);
    for (std::size_t j = 0; j < cols; ++j) dx[j] = p[j] * (dp[j] - inner);
  }
}

template <std::floating_point T>
void rmsnorm_rows(std::size_t rows, std::size_t dim, std::span<const T> x,
                  std::span<const T> gamma, T eps, std::span<T> y, std::span<T> inv_rms) {
  const bool parallel = rows * dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(rows); ++si) {
    const auto r = static_cast<std::size_t>(si);
    const T* xr = x.data() + r * dim;
    T* yr = y.data() + r * dim;
    const T inv = T{1} / std::sqrt(dot(xr, xr, dim) / static_cast<T>(dim) + eps);
    inv_rms[r] = inv;
    for (std::size_t c = 0; c < dim; ++c) yr[c] = xr[c] * inv * gamma[c];
  }
}

template <std::floating_point T>
void rmsnorm_rows_backward(std::size_t rows, std::size_t dim, std::span<const T> x,
                           std::span<const T> gamma, std::span<const T> inv_rms,
                           std::span<const T> dy, std::span<T> dx, std::span<T> d_gamma) {
  const bool parallel = rows * dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(rows); ++si) {
    const auto r = static_cast<std::size_t>(si);
    const T* xr = x.data() + r * dim;
    const T* dyr = dy.data() + r * dim;
    T* dxr = dx.data() + r * dim;
    const T inv = inv_rms[r];
    T inner = 0;
    for (std::size_t c = 0; c < dim; ++c) inner += xr[c] * (gamma[c] * dyr[c]);
    const T coef = inv * inv * inv * inner / static_cast<T>(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      dxr[c] = inv * (gamma[c] * dyr[c]) - xr[c] * coef;
    }
  }
  // d_gamma reduces over rows; kept serial so the summation order is fixed.
  if (d_gamma.empty()) return;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * dim;
    const T* dyr = dy.data() + r * dim;
    for (std::size_t c = 0; c < dim; ++c) d_gamma[c] += dyr[c] * (xr[c] * inv_rms[r]);
  }
}

template <std::floating_point T>
void attention_scores(const AttentionDims& dims, QkParts<const T> q, QkParts<const T> k,
                      std::span<const std::uint8_t> mask, T scale, std::span<T> scores) {
  const std::size_t n = dims.n;
  const std::size_t group = dims.group();
  const bool parallel = dims.q_heads * n * n >= kParallelWork / 8;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t sh = 0; sh < static_cast<std::ptrdiff_t>(dims.q_heads); ++sh) {
    const auto h = static_cast<std::size_t>(sh);
    const std::size_t g = h / group;
    T* s = scores.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) {
          s[i * n + j] = -std::numeric_limits<T>::infinity();
          continue;
        }
        T acc = 0;
        for (std::size_t a = 0; a < 3; ++a) {
          const std::size_t d = dims.d_qk[a];
          if (d == 0) continue;
          acc += dot(q.part[a].data() + i * dims.q_heads * d + h * d,
                     k.part[a].data() + j * dims.kv_heads * d + g * d, d);
        }
        s[i * n + j] = acc * scale;
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
  const std::size_t group = dims.group();
  attention_scores<T>(dims, q, k, mask, scale, probs);
  const bool parallel = dims.q_heads * n * n >= kParallelWork / 8;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t sh = 0; sh < static_cast<std::ptrdiff_t>(dims.q_heads); ++sh) {
    const auto h = static_cast<std::size_t>(sh);
    const std::size_t g = h / group;
    T* p = probs.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      T* row = p + i * n;
      const std::uint8_t* allowed = mask.data() + i * n;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed[j]) mx = std::max(mx, row[j]);
      }
      T* o = out.data() + i * dims.q_heads * dv + h * dv;
      std::fill(o, o + dv, T{0});
      if (mx == -std::numeric_limits<T>::infinity()) {
        std::fill(row, row + n, T{0});
        continue;
      }
      T sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = allowed[j] ? std::exp(row[j] - mx) : T{0};
        sum += row[j];
      }
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      for (std::size_t j = 0; j < n; ++j) {
        if (row[j] == T{0}) continue;
        const T* vr = v.data() + j * dims.kv_heads * dv + g * dv;
        for (std::size_t c = 0; c < dv; ++c) o[c] += row[j] * vr[c];
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
  const std::size_t group = dims.group();
  const bool parallel = dims.kv_heads > 1 && dims.q_heads * n * n >= kParallelWork / 8;
  // One kv group per iteration: dk/dv rows of a group are written by exactly
  // one thread, in head order, so accumulation order is fixed.
#pragma omp parallel if (parallel)
  {
    std::vector<T> ds(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t sg = 0; sg < static_cast<std::ptrdiff_t>(dims.kv_heads); ++sg) {
      const auto g = static_cast<std::size_t>(sg);
      for (std::size_t h = g * group; h < (g + 1) * group; ++h) {
        const T* p = probs.data() + h * n * n;
        for (std::size_t i = 0; i < n; ++i) {
          const T* pr = p + i * n;
          const T* dor = d_out.data() + i * dims.q_heads * dvw + h * dvw;
          T inner = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T* vr = v.data() + j * dims.kv_heads * dvw + g * dvw;
            ds[j] = pr[j] == T{0} ? T{0} : dot(dor, vr, dvw);
            inner += pr[j] * ds[j];
          }
          for (std::size_t j = 0; j < n; ++j) ds[j] = pr[j] * (ds[j] - inner) * scale;
          for (std::size_t j = 0; j < n; ++j) {
            if (pr[j] == T{0}) continue;
            T* dvr = dv.data() + j * dims.kv_heads * dvw + g * dvw;
            for (std::size_t c = 0; c < dvw; ++c) dvr[c] += pr[j] * dor[c];
            for (std::size_t a = 0; a < 3; ++a) {
              const std::size_t d = dims.d_qk[a];
              if (d == 0) continue;
              const T* qi = q.part[a].data() + i * dims.q_heads * d + h * d;
              const T* kj = k.part[a].data() + j * dims.kv_heads * d + g * d;
              T* dqi = dq.part[a].data() + i * dims.q_heads * d + h * d;
              T* dkj = dk.part[a].data() + j * dims.kv_heads * d + g * d;
              for (std::size_t c = 0; c < d; ++c) {
                dqi[c] += ds[j] * kj[c];
                dkj[c] += ds[j] * qi[c];
              }
            }
          }
        }
      }
    }
  }
}

#define NEO_INSTANTIATE_KERNELS(T)                                                      \
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

NEO_INSTANTIATE_KERNELS(float)
NEO_INSTANTIATE_KERNELS(double)
NEO_INSTANTIATE_KERNELS(long double)

}  // namespace neo::kernels
