#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "neo/attention/mask.hpp"
#include "neo/core/config.hpp"
#include "neo/core/param_store.hpp"
#include "neo/rope/rope.hpp"

namespace neo {

// kNative rotates T/H/W parts by allocate_positions indices; k1D uses the
// token index for T and leaves H/W parts unrotated.
enum class RopeMode { k1D, kNative };

const char* rope_mode_name(RopeMode mode);
RopeMode parse_rope_mode(const std::string& text);

// Per-sequence data shared by every layer: positions, mask, and the
// gathered rotation angles ([n, n_freqs] per axis).
template <std::floating_point T>
struct SequenceContext {
  std::size_t n = 0;
  std::vector<PositionTriple> positions;
  MaskSpec mask;
  std::vector<std::uint8_t> dense_mask;
  std::array<std::vector<T>, 3> cos;
  std::array<std::vector<T>, 3> sin;
};

template <std::floating_point T>
SequenceContext<T> make_context(std::vector<PositionTriple> positions, MaskSpec mask,
                                const NativeRopeTables& tables);

// Positions and mask derived from a marker-expanded layout.
template <std::floating_point T>
SequenceContext<T> make_context(const SequenceLayout& layout, const NativeRopeTables& tables,
                                AttentionMode mode = AttentionMode::kMixed,
                                RopeMode rope = RopeMode::kNative);

// Projections of one attention layer. Weights are [in, out]. Parts with
// zero width have no tensors.
template <std::floating_point T>
struct AttentionWeights {
  std::array<Tensor<T>, 3> wq;      // [d_model, n_q * d_part]
  std::array<Tensor<T>, 3> wk;      // [d_model, n_kv * d_part]; H/W zero at init
  std::array<Tensor<T>, 3> q_norm;  // [d_part], shared across heads
  std::array<Tensor<T>, 3> k_norm;
  Tensor<T> wv;                     // [d_model, n_kv * d_head_t]
  Tensor<T> wo;                     // [n_q * d_head_t, d_model]

  // Registers `<prefix>.wq_t`, `<prefix>.wk_h`, `<prefix>.q_norm_w`, ...
  static AttentionWeights create(ParameterStore<T>& store, const std::string& prefix,
                                 const NativeAttentionConfig& cfg, Rng& rng, double init_std);
};

// Normalised and rotated query/key parts, [n, heads * d_part] per axis.
template <std::floating_point T>
struct QkProjection {
  std::array<Tensor<T>, 3> q;
  std::array<Tensor<T>, 3> k;
};

template <std::floating_point T>
QkProjection<T> project_qk(const Tensor<T>& x, const AttentionWeights<T>& weights,
                           const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg);

// Pre-softmax logits [n_q, n, n] with -inf where the mask forbids.
template <std::floating_point T>
std::vector<T> attention_logits(const QkProjection<T>& qk, const SequenceContext<T>& ctx,
                                const NativeAttentionConfig& cfg);

// Differentiable masked attention over projected parts; returns the
// concatenated head outputs [n, n_q * d_head_t]. Non-finite logits throw
// NumericError naming the head and token pair.
template <std::floating_point T>
Tensor<T> attention_core(const QkProjection<T>& qk, const Tensor<T>& v,
                         const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg);

// Full layer: x [n, d_model] -> [n, d_model].
template <std::floating_point T>
Tensor<T> native_attention(const Tensor<T>& x, const AttentionWeights<T>& weights,
                           const SequenceContext<T>& ctx, const NativeAttentionConfig& cfg);

struct ExtraParams {
  long long baseline = 0;           // Q/K/V/O + SwiGLU on the temporal geometry
  long long extra_projections = 0;  // H/W columns of Wq and Wk
  long long extra_norms = 0;        // H/W query and key norm scales
  long long extra = 0;              // projections + norms
  double fraction = 0;              // extra / baseline
};

// Per-block parameter bookkeeping of the Q/K expansion.
ExtraParams count_extra_params(const NativeAttentionConfig& cfg);

}  // namespace neo
