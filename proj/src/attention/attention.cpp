#include "neo/attention/attention.hpp"

#include <cmath>
#include <memory>

#include "neo/core/errors.hpp"
#include "neo/core/ops.hpp"
#include "neo/kernels/kernels.hpp"

namespace neo {

namespace {

constexpr const char* kAxisSuffix[3] = {"t", "h", "w"};

std::array<int, 3> part_widths(const NativeAttentionConfig& cfg) {
  return {cfg.d_head_t, cfg.d_head_h, cfg.d_head_w};
}

template <std::floating_point T>
kernels::AttentionDims dims_of(const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg) {
  kernels::AttentionDims dims;
  dims.n = ctx.n;
  dims.q_heads = cfg.n_q_heads;
  dims.kv_heads = cfg.n_kv_heads;
  const auto widths = part_widths(cfg);
  for (int a = 0; a < 3; ++a) dims.d_qk[a] = widths[a];
  dims.d_v = cfg.d_head_t;
  return dims;
}

template <std::floating_point T>
Tensor<T> empty_part(std::size_t n) {
  return Tensor<T>({n, 0}, {});
}

// Norm then rotation, on the [n * heads, d_part] view.
template <std::floating_point T>
Tensor<T> norm_and_rotate(const Tensor<T>& proj, const Tensor<T>& gamma, std::size_t heads,
                          std::size_t d_part, int axis, const SequenceContext<T>& ctx, T eps) {
  const std::size_t n = ctx.n;
  auto y = ops::reshape(proj, {n * heads, d_part});
  y = ops::rmsnorm(y, gamma, eps);
  y = ops::rotate_pairs<T>(y, ctx.cos[axis], ctx.sin[axis], heads);
  return ops::reshape(y, {n, heads * d_part});
}

template <std::floating_point T>
kernels::QkParts<const T> const_parts(const std::array<Tensor<T>, 3>& parts) {
  kernels::QkParts<const T> out;
  for (int a = 0; a < 3; ++a) out.part[a] = parts[a].values();
  return out;
}

template <std::floating_point T>
[[noreturn]] void report_non_finite(const kernels::AttentionDims& dims,
                                    const std::array<Tensor<T>, 3>& q,
                                    const std::array<Tensor<T>, 3>& k,
                                    std::span<const std::uint8_t> mask, T scale) {
  std::vector<T> scores(dims.q_heads * dims.n * dims.n);
  kernels::attention_scores<T>(dims, const_parts(q), const_parts(k), mask, scale, scores);
  for (std::size_t h = 0; h < dims.q_heads; ++h) {
    for (std::size_t i = 0; i < dims.n; ++i) {
      for (std::size_t j = 0; j < dims.n; ++j) {
        const T s = scores[(h * dims.n + i) * dims.n + j];
        if (mask[i * dims.n + j] && !std::isfinite(s)) {
          throw NumericError("non-finite attention logit at head " + std::to_string(h) +
                             ", query token " + std::to_string(i) + ", key token " +
                             std::to_string(j));
        }
      }
    }
  }
  throw NumericError("non-finite attention output with finite logits (check value inputs)");
}

}  // namespace

const char* rope_mode_name(RopeMode mode) { return mode == RopeMode::k1D ? "1d" : "native"; }

RopeMode parse_rope_mode(const std::string& text) {
  if (text == "1d" || text == "1D") return RopeMode::k1D;
  if (text == "native") return RopeMode::kNative;
  throw ConfigError("unknown rope mode '" + text + "' (expected 1d or native)");
}

template <std::floating_point T>
SequenceContext<T> make_context(std::vector<PositionTriple> positions, MaskSpec mask,
                                const NativeRopeTables& tables) {
  if (positions.size() != mask.size()) {
    throw ShapeError("positions cover " + std::to_string(positions.size()) +
                     " tokens, mask covers " + std::to_string(mask.size()));
  }
  SequenceContext<T> ctx;
  ctx.n = positions.size();
  std::array<std::vector<int>, 3> index;
  for (const auto& p : positions) {
    index[0].push_back(p.t);
    index[1].push_back(p.h);
    index[2].push_back(p.w);
  }
  for (int a = 0; a < 3; ++a) tables.axes[a].gather<T>(index[a], ctx.cos[a], ctx.sin[a]);
  ctx.positions = std::move(positions);
  ctx.dense_mask = mask.dense();
  ctx.mask = std::move(mask);
  return ctx;
}

template <std::floating_point T>
SequenceContext<T> make_context(const SequenceLayout& layout, const NativeRopeTables& tables,
                                AttentionMode mode, RopeMode rope) {
  auto positions =
      rope == RopeMode::kNative ? allocate_positions(layout) : allocate_positions_1d(layout);
  return make_context<T>(std::move(positions), build_mask(layout, mode), tables);
}

template <std::floating_point T>
AttentionWeights<T> AttentionWeights<T>::create(ParameterStore<T>& store,
                                                const std::string& prefix,
                                                const NativeAttentionConfig& cfg, Rng& rng,
                                                double init_std) {
  AttentionWeights w;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto nq = static_cast<std::size_t>(cfg.n_q_heads);
  const auto nkv = static_cast<std::size_t>(cfg.n_kv_heads);
  const auto widths = part_widths(cfg);
  for (int a = 0; a < 3; ++a) {
    if (widths[a] == 0) continue;
    const auto dp = static_cast<std::size_t>(widths[a]);
    const std::string s = kAxisSuffix[a];
    // The added H/W key columns start at zero so the block initially
    // behaves like its temporal-only original.
    const InitTag k_tag = a == 0 ? InitTag::kStandard : InitTag::kZero;
    w.wq[a] = store.create(prefix + ".wq_" + s, {d, nq * dp}, InitTag::kStandard, rng, init_std);
    w.wk[a] = store.create(prefix + ".wk_" + s, {d, nkv * dp}, k_tag, rng, init_std);
    w.q_norm[a] = store.create(prefix + ".q_norm_" + s, {dp}, InitTag::kOnes, rng, init_std);
    w.k_norm[a] = store.create(prefix + ".k_norm_" + s, {dp}, InitTag::kOnes, rng, init_std);
  }
  const auto dt = static_cast<std::size_t>(cfg.d_head_t);
  w.wv = store.create(prefix + ".wv", {d, nkv * dt}, InitTag::kStandard, rng, init_std);
  w.wo = store.create(prefix + ".wo", {nq * dt, d}, InitTag::kStandard, rng, init_std);
  return w;
}

template <std::floating_point T>
QkProjection<T> project_qk(const Tensor<T>& x, const AttentionWeights<T>& weights,
                           const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg) {
  if (x.rank() != 2 || x.rows() != ctx.n) {
    throw ShapeError("attention input has shape " + shape_string(x.shape()) + ", context has " +
                     std::to_string(ctx.n) + " tokens");
  }
  const auto widths = part_widths(cfg);
  const T eps = static_cast<T>(cfg.rmsnorm_eps);
  QkProjection<T> out;
  for (int a = 0; a < 3; ++a) {
    if (widths[a] == 0) {
      out.q[a] = empty_part<T>(ctx.n);
      out.k[a] = empty_part<T>(ctx.n);
      continue;
    }
    const auto dp = static_cast<std::size_t>(widths[a]);
    out.q[a] = norm_and_rotate(ops::matmul(x, weights.wq[a]), weights.q_norm[a], cfg.n_q_heads,
                               dp, a, ctx, eps);
    out.k[a] = norm_and_rotate(ops::matmul(x, weights.wk[a]), weights.k_norm[a],
                               cfg.n_kv_heads, dp, a, ctx, eps);
  }
  return out;
}

template <std::floating_point T>
std::vector<T> attention_logits(const QkProjection<T>& qk, const SequenceContext<T>& ctx,
                                const NativeAttentionConfig& cfg) {
  const auto dims = dims_of(ctx, cfg);
  std::vector<T> scores(dims.q_heads * dims.n * dims.n);
  kernels::attention_scores<T>(dims, const_parts(qk.q), const_parts(qk.k), ctx.dense_mask,
                               static_cast<T>(cfg.scale()), scores);
  return scores;
}

template <std::floating_point T>
Tensor<T> attention_core(const QkProjection<T>& qk, const Tensor<T>& v,
                         const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg) {
  const auto dims = dims_of(ctx, cfg);
  const T scale = static_cast<T>(cfg.scale());
  if (v.rank() != 2 || v.rows() != dims.n || v.cols() != dims.kv_heads * dims.d_v) {
    throw ShapeError("attention values have shape " + shape_string(v.shape()) + ", expected [" +
                     std::to_string(dims.n) + ", " + std::to_string(dims.kv_heads * dims.d_v) +
                     "]");
  }
  auto probs = std::make_shared<std::vector<T>>(dims.q_heads * dims.n * dims.n);
  std::vector<T> out(dims.n * dims.q_heads * dims.d_v);
  kernels::attention_forward<T>(dims, const_parts(qk.q), const_parts(qk.k), v.values(),
                                ctx.dense_mask, scale, *probs, out);
  for (T value : out) {
    if (!std::isfinite(value)) report_non_finite(dims, qk.q, qk.k, ctx.dense_mask, scale);
  }

  std::vector<Tensor<T>> parents{qk.q[0], qk.q[1], qk.q[2], qk.k[0], qk.k[1], qk.k[2], v};
  return Tensor<T>::from_op(
      {dims.n, dims.q_heads * dims.d_v}, std::move(out), std::move(parents),
      [dims, scale, probs](std::span<const T> g, std::span<Tensor<T>> p) {
        // Parents that need no gradient still get a scratch sink.
        std::array<std::vector<T>, 7> scratch;
        auto sink = [&](int i) -> std::span<T> {
          if (p[i].requires_grad()) return p[i].grad_buffer();
          scratch[i].assign(p[i].numel(), T(0));
          return scratch[i];
        };
        kernels::QkParts<const T> q, k;
        kernels::QkParts<T> dq, dk;
        for (int a = 0; a < 3; ++a) {
          q.part[a] = p[a].values();
          k.part[a] = p[3 + a].values();
          dq.part[a] = sink(a);
          dk.part[a] = sink(3 + a);
        }
        kernels::attention_backward<T>(dims, q, k, p[6].values(), *probs, scale, g, dq, dk,
                                       sink(6));
      });
}

template <std::floating_point T>
Tensor<T> native_attention(const Tensor<T>& x, const AttentionWeights<T>& weights,
                           const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg) {
  const auto qk = project_qk(x, weights, ctx, cfg);
  const auto v = ops::matmul(x, weights.wv);
  return ops::matmul(attention_core(qk, v, ctx, cfg), weights.wo);
}

ExtraParams count_extra_params(const NativeAttentionConfig& cfg) {
  const long long d = cfg.d_model, nq = cfg.n_q_heads, nkv = cfg.n_kv_heads;
  const long long dt = cfg.d_head_t, dhw = cfg.d_head_h + cfg.d_head_w;
  ExtraParams p;
  const long long attn = d * nq * dt + 2 * d * nkv * dt + nq * dt * d;
  const long long ffn = 3 * d * cfg.ffn_hidden;
  p.baseline = attn + ffn;
  p.extra_projections = d * (nq + nkv) * dhw;
  p.extra_norms = 2 * dhw;
  p.extra = p.extra_projections + p.extra_norms;
  p.fraction = p.baseline > 0 ? static_cast<double>(p.extra) / static_cast<double>(p.baseline) : 0;
  return p;
}

#define NEO_INSTANTIATE(T)                                                                      \
  template SequenceContext<T> make_context<T>(std::vector<PositionTriple>, MaskSpec,            \
                                              const NativeRopeTables&);                         \
  template SequenceContext<T> make_context<T>(const SequenceLayout&, const NativeRopeTables&,   \
                                              AttentionMode, RopeMode);                         \
  template struct AttentionWeights<T>;                                                          \
  template QkProjection<T> project_qk<T>(const Tensor<T>&, const AttentionWeights<T>&,          \
                                         const SequenceContext<T>&,                             \
                                         const NativeAttentionConfig&);                         \
  template std::vector<T> attention_logits<T>(const QkProjection<T>&, const SequenceContext<T>&, \
                                              const NativeAttentionConfig&);                    \
  template Tensor<T> attention_core<T>(const QkProjection<T>&, const Tensor<T>&,                \
                                       const SequenceContext<T>&, const NativeAttentionConfig&); \
  template Tensor<T> native_attention<T>(const Tensor<T>&, const AttentionWeights<T>&,          \
                                         const SequenceContext<T>&, const NativeAttentionConfig&);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)
NEO_INSTANTIATE(long double)
#undef NEO_INSTANTIATE

}  // namespace neo
