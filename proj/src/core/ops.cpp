#include "neo/core/ops.hpp"

#include <cmath>
#include <numbers>

#include "neo/core/errors.hpp"
#include "neo/kernels/kernels.hpp"

namespace neo::ops {

namespace {

template <std::floating_point T>
void require_rank2(const Tensor<T>& x, const char* op, const char* name) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + ": " + name + " must be rank 2, shape is " +
                     shape_string(x.shape()));
  }
}

template <std::floating_point T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": lhs shape " + shape_string(a.shape()) +
                     " != rhs shape " + shape_string(b.shape()));
  }
}

[[noreturn]] void dim_mismatch(const char* op, const std::string& lhs, std::size_t lv,
                               const std::string& rhs, std::size_t rv) {
  throw ShapeError(std::string(op) + ": " + lhs + " (" + std::to_string(lv) + ") != " + rhs +
                   " (" + std::to_string(rv) + ")");
}

}  // namespace

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul", "lhs");
  require_rank2(b, "matmul", "rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) dim_mismatch("matmul", "lhs.cols", k, "rhs.rows", b.rows());
  std::vector<T> out(m * n);
  kernels::gemm<T>(kernels::GemmOp::kNN, {m, n, k}, a.values(), b.values(), out, false);
  return Tensor<T>::from_op(
      {m, n}, std::move(out), {a, b}, [m, n, k](std::span<const T> g, std::span<Tensor<T>> p) {
        if (p[0].requires_grad()) {
          kernels::gemm<T>(kernels::GemmOp::kNT, {m, k, n}, g, p[1].values(),
                           p[0].grad_buffer(), true);
        }
        if (p[1].requires_grad()) {
          kernels::gemm<T>(kernels::GemmOp::kTN, {k, n, m}, p[0].values(), g,
                           p[1].grad_buffer(), true);
        }
      });
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [](std::span<const T> g, std::span<Tensor<T>> p) {
                              for (auto& parent : p) {
                                if (!parent.requires_grad()) continue;
                                auto d = parent.grad_buffer();
                                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                              }
                            });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [](std::span<const T> g, std::span<Tensor<T>> p) {
                              for (int s = 0; s < 2; ++s) {
                                if (!p[s].requires_grad()) continue;
                                auto d = p[s].grad_buffer();
                                const auto other = p[1 - s].values();
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  d[i] += g[i] * other[i];
                                }
                              }
                            });
}

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a},
                            [factor](std::span<const T> g, std::span<Tensor<T>> p) {
                              auto d = p[0].grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
                            });
}

template <std::floating_point T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  require_rank2(a, "add_bias", "input");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (bias.numel() != cols) dim_mismatch("add_bias", "input.cols", cols, "bias.size", bias.numel());
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, bias},
                            [rows, cols](std::span<const T> g, std::span<Tensor<T>> p) {
                              if (p[0].requires_grad()) {
                                auto d = p[0].grad_buffer();
                                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                              }
                              if (p[1].requires_grad()) {
                                auto d = p[1].grad_buffer();
                                for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
                                }
                              }
                            });
}

template <std::floating_point T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gamma, T eps) {
  const std::size_t dim = gamma.numel();
  if (dim == 0 || x.rank() == 0 || x.shape().back() != dim) {
    dim_mismatch("rmsnorm", "input last dim", x.rank() ? x.shape().back() : 0, "gamma.size",
                 dim);
  }
  const std::size_t rows = x.numel() / dim;
  std::vector<T> out(x.numel());
  std::vector<T> inv(rows);
  kernels::rmsnorm_rows<T>(rows, dim, x.values(), gamma.values(), eps, out, inv);
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x, gamma},
      [rows, dim, inv = std::move(inv)](std::span<const T> g, std::span<Tensor<T>> p) {
        std::vector<T> dx(rows * dim);
        std::span<T> dgamma;
        if (p[1].requires_grad()) dgamma = p[1].grad_buffer();
        kernels::rmsnorm_rows_backward<T>(rows, dim, p[0].values(), p[1].values(), inv, g, dx,
                                          dgamma);
        if (p[0].requires_grad()) {
          auto d = p[0].grad_buffer();
          for (std::size_t i = 0; i < dx.size(); ++i) d[i] += dx[i];
        }
      });
}

template <std::floating_point T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (T{1} + std::exp(-xv[i]));
  return Tensor<T>::from_op(x.shape(), std::move(out), {x},
                            [](std::span<const T> g, std::span<Tensor<T>> p) {
                              const auto xv = p[0].values();
                              auto d = p[0].grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                const T s = T{1} / (T{1} + std::exp(-xv[i]));
                                d[i] += g[i] * s * (T{1} + xv[i] * (T{1} - s));
                              }
                            });
}

template <std::floating_point T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T{0.5} * xv[i] * (T{1} + std::erf(xv[i] * inv_sqrt2));
  }
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x}, [inv_sqrt2](std::span<const T> g, std::span<Tensor<T>> p) {
        const auto xv = p[0].values();
        auto d = p[0].grad_buffer();
        const T inv_sqrt_2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T cdf = T{0.5} * (T{1} + std::erf(xv[i] * inv_sqrt2));
          const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * xv[i] * xv[i]);
          d[i] += g[i] * (cdf + xv[i] * pdf);
        }
      });
}

template <std::floating_point T>
Tensor<T> masked_softmax(const Tensor<T>& logits, std::span<const std::uint8_t> mask) {
  require_rank2(logits, "masked_softmax", "logits");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (mask.size() != rows * cols) {
    dim_mismatch("masked_softmax", "mask.size", mask.size(), "logits.size", rows * cols);
  }
  std::vector<T> probs(rows * cols);
  kernels::masked_softmax_rows<T>(rows, cols, logits.values(), mask, probs);
  std::vector<T> saved = probs;
  return Tensor<T>::from_op(
      logits.shape(), std::move(probs), {logits},
      [rows, cols, saved = std::move(saved)](std::span<const T> g, std::span<Tensor<T>> p) {
        std::vector<T> dx(rows * cols);
        kernels::masked_softmax_rows_backward<T>(rows, cols, saved, g, dx);
        auto d = p[0].grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) d[i] += dx[i];
      });
}

template <std::floating_point T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  require_rank2(logits, "cross_entropy", "logits");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (targets.size() != rows) {
    dim_mismatch("cross_entropy", "targets.size", targets.size(), "logits.rows", rows);
  }
  const auto lv = logits.values();
  std::vector<T> probs(rows * cols, T{0});
  std::size_t counted = 0;
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= cols) {
      throw ConfigError("cross_entropy: target " + std::to_string(targets[r]) +
                        " out of range for " + std::to_string(cols) + " classes");
    }
    const T* row = lv.data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(row[c] - mx);
      sum += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= sum;
    total += (mx + std::log(sum)) - row[targets[r]];
    ++counted;
  }
  if (counted == 0) throw ConfigError("cross_entropy: no position carries a target");
  const T inv = T{1} / static_cast<T>(counted);
  std::vector<int> tgt(targets.begin(), targets.end());
  return Tensor<T>::from_op(
      {1}, {total * inv}, {logits},
      [rows, cols, inv, probs = std::move(probs), tgt = std::move(tgt)](
          std::span<const T> g, std::span<Tensor<T>> p) {
        auto d = p[0].grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] < 0) continue;
          for (std::size_t c = 0; c < cols; ++c) {
            const T onehot = static_cast<int>(c) == tgt[r] ? T{1} : T{0};
            d[r * cols + c] += g[0] * inv * (probs[r * cols + c] - onehot);
          }
        }
      });
}

template <std::floating_point T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  require_rank2(table, "embedding", "table");
  const std::size_t vocab = table.rows(), dim = table.cols();
  std::vector<T> out(ids.size() * dim);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ConfigError("embedding: id " + std::to_string(ids[i]) + " out of range for vocab " +
                        std::to_string(vocab));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return Tensor<T>::from_op(
      {ids.size(), dim}, std::move(out), {table},
      [dim, saved = std::move(saved)](std::span<const T> g, std::span<Tensor<T>> p) {
        auto d = p[0].grad_buffer();
        for (std::size_t i = 0; i < saved.size(); ++i) {
          for (std::size_t c = 0; c < dim; ++c) d[saved[i] * dim + c] += g[i * dim + c];
        }
      });
}

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x},
                            [](std::span<const T> g, std::span<Tensor<T>> p) {
                              auto d = p[0].grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                            });
}

template <std::floating_point T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows", "input");
    if (p.cols() != cols) dim_mismatch("concat_rows", "input.cols", p.cols(), "first.cols", cols);
    offsets.push_back(rows * cols);
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor<T>::from_op({rows, cols}, std::move(out),
                            std::vector<Tensor<T>>(parts.begin(), parts.end()),
                            [offsets = std::move(offsets)](std::span<const T> g,
                                                           std::span<Tensor<T>> p) {
                              for (std::size_t s = 0; s < p.size(); ++s) {
                                if (!p[s].requires_grad()) continue;
                                auto d = p[s].grad_buffer();
                                for (std::size_t i = 0; i < d.size(); ++i) {
                                  d[i] += g[offsets[s] + i];
                                }
                              }
                            });
}

template <std::floating_point T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows", "input");
  const std::size_t cols = x.cols();
  if (begin + count > x.rows()) {
    dim_mismatch("slice_rows", "begin+count", begin + count, "input.rows", x.rows());
  }
  const auto xv = x.values();
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return Tensor<T>::from_op({count, cols}, std::move(out), {x},
                            [begin, cols](std::span<const T> g, std::span<Tensor<T>> p) {
                              auto d = p[0].grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) d[begin * cols + i] += g[i];
                            });
}

template <std::floating_point T>
Tensor<T> rotate_pairs(const Tensor<T>& x, std::span<const T> cos, std::span<const T> sin,
                       std::size_t rows_per_token) {
  require_rank2(x, "rotate_pairs", "input");
  const std::size_t rows = x.rows(), d = x.cols(), half = d / 2;
  if (d % 2 != 0) throw ShapeError("rotate_pairs: width (" + std::to_string(d) + ") is odd");
  if (rows_per_token == 0 || rows % rows_per_token != 0) {
    throw ShapeError("rotate_pairs: rows (" + std::to_string(rows) +
                     ") not a multiple of rows_per_token (" + std::to_string(rows_per_token) +
                     ")");
  }
  const std::size_t tokens = rows / rows_per_token;
  if (cos.size() != tokens * half || sin.size() != tokens * half) {
    dim_mismatch("rotate_pairs", "angle table size", cos.size(), "tokens*d/2", tokens * half);
  }
  std::vector<T> out(rows * d);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r / rows_per_token;
    for (std::size_t m = 0; m < half; ++m) {
      const T c = cos[t * half + m], s = sin[t * half + m];
      const T x0 = xv[r * d + 2 * m], x1 = xv[r * d + 2 * m + 1];
      out[r * d + 2 * m] = x0 * c - x1 * s;
      out[r * d + 2 * m + 1] = x0 * s + x1 * c;
    }
  }
  std::vector<T> cs(cos.begin(), cos.end());
  std::vector<T> sn(sin.begin(), sin.end());
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [rows, d, half, rows_per_token, cs = std::move(cs), sn = std::move(sn)](
          std::span<const T> g, std::span<Tensor<T>> p) {
        auto dx = p[0].grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t t = r / rows_per_token;
          for (std::size_t m = 0; m < half; ++m) {
            const T c = cs[t * half + m], s = sn[t * half + m];
            const T g0 = g[r * d + 2 * m], g1 = g[r * d + 2 * m + 1];
            dx[r * d + 2 * m] += g0 * c + g1 * s;
            dx[r * d + 2 * m + 1] += g1 * c - g0 * s;
          }
        }
      });
}

template <std::floating_point T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t height, std::size_t width,
                 std::size_t kernel, std::size_t stride) {
  require_rank2(x, "im2col", "input");
  if (x.rows() != height * width) {
    dim_mismatch("im2col", "input.rows", x.rows(), "height*width", height * width);
  }
  if (kernel == 0 || stride == 0 || height < kernel || width < kernel) {
    throw ShapeError("im2col: kernel " + std::to_string(kernel) + " does not fit a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  const std::size_t ch = x.cols();
  const std::size_t oh = (height - kernel) / stride + 1;
  const std::size_t ow = (width - kernel) / stride + 1;
  const std::size_t patch = kernel * kernel * ch;
  std::vector<T> out(oh * ow * patch);
  const auto xv = x.values();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      T* dst = out.data() + (oy * ow + ox) * patch;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::size_t src = ((oy * stride + ky) * width + (ox * stride + kx)) * ch;
          std::copy_n(xv.data() + src, ch, dst + (ky * kernel + kx) * ch);
        }
      }
    }
  }
  return Tensor<T>::from_op(
      {oh * ow, patch}, std::move(out), {x},
      [=](std::span<const T> g, std::span<Tensor<T>> p) {
        auto dx = p[0].grad_buffer();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* src = g.data() + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const std::size_t dst = ((oy * stride + ky) * width + (ox * stride + kx)) * ch;
                for (std::size_t c = 0; c < ch; ++c) dx[dst + c] += src[(ky * kernel + kx) * ch + c];
              }
            }
          }
        }
      });
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (const T v : x.values()) total += v;
  return Tensor<T>::from_op({1}, {total}, {x}, [](std::span<const T> g, std::span<Tensor<T>> p) {
    auto d = p[0].grad_buffer();
    for (auto& v : d) v += g[0];
  });
}

template <std::floating_point T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  if (weights.size() != x.numel()) {
    dim_mismatch("weighted_sum", "weights.size", weights.size(), "input.size", x.numel());
  }
  T total = 0;
  const auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * weights[i];
  std::vector<T> w(weights.begin(), weights.end());
  return Tensor<T>::from_op({1}, {total}, {x},
                            [w = std::move(w)](std::span<const T> g, std::span<Tensor<T>> p) {
                              auto d = p[0].grad_buffer();
                              for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * w[i];
                            });
}

#define NEO_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                     \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> rmsnorm<T>(const Tensor<T>&, const Tensor<T>&, T);                 \
  template Tensor<T> silu<T>(const Tensor<T>&);                                         \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                         \
  template Tensor<T> masked_softmax<T>(const Tensor<T>&, std::span<const std::uint8_t>); \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const int>);          \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int>);              \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                               \
  template Tensor<T> concat_rows<T>(std::span<const Tensor<T>>);                        \
  template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> rotate_pairs<T>(const Tensor<T>&, std::span<const T>,              \
                                     std::span<const T>, std::size_t);                  \
  template Tensor<T> im2col<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t, \
                               std::size_t);                                            \
  template Tensor<T> sum<T>(const Tensor<T>&);                                          \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, std::span<const T>);

NEO_INSTANTIATE_OPS(float)
NEO_INSTANTIATE_OPS(double)
NEO_INSTANTIATE_OPS(long double)

}  // namespace neo::ops
