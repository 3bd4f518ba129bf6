#pragma once

#include <set>
#include <string>
#include <vector>

#include "neo/attention/attention.hpp"
#include "neo/core/checkpoint.hpp"
#include "neo/embedding/embedding.hpp"

namespace neo {

// RMSNorm -> native attention -> residual -> RMSNorm -> SwiGLU -> residual.
template <std::floating_point T>
struct NativeBlock {
  AttentionWeights<T> attn;
  Tensor<T> attn_norm;  // [d_model]
  Tensor<T> ffn_norm;   // [d_model]
  Tensor<T> gate;       // [d_model, ffn_hidden]
  Tensor<T> up;         // [d_model, ffn_hidden]
  Tensor<T> down;       // [ffn_hidden, d_model]

  static NativeBlock create(ParameterStore<T>& store, const std::string& prefix,
                            const NativeAttentionConfig& cfg, Rng& rng, double init_std);

  Tensor<T> forward(const Tensor<T>& x, const SequenceContext<T>& ctx,
                    const NativeAttentionConfig& cfg) const;
};

// Training stages. kLm is the text-only warm-up that stands in for a
// pretrained language model before the three native stages.
enum class Stage { kLm, kPretrain, kMidtrain, kSft };

const char* stage_name(Stage stage);
// Throws ConfigError for anything but lm / pretrain / midtrain / sft.
Stage parse_stage(const std::string& text);

// Whether `name` is trainable under `stage`.
//   lm:       embed.tokens, final_norm, lm_head, postllm.* without the H/W
//             query/key projections and norms
//   pretrain: patch_embed.*, prebuffer.*, and only the H/W query/key
//             projections and norms of postllm blocks
//   midtrain, sft: everything
bool stage_trainable(Stage stage, const std::string& name);

// Only the lm stage bypasses the pre-Buffer.
inline bool stage_uses_prebuffer(Stage stage) { return stage != Stage::kLm; }

// Sets every flag in `store` and returns the trainable names.
template <std::floating_point T>
std::set<std::string> apply_stage_policy(ParameterStore<T>& store, Stage stage);

// Patch embedding, word table, pre-Buffer and post-LLM block stacks, final
// norm and output head, all registered in one ParameterStore.
template <std::floating_point T>
class NativeModel {
 public:
  NativeModel(const ModelConfig& cfg, std::uint64_t seed);
  NativeModel(const NativeModel&) = delete;
  NativeModel& operator=(const NativeModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  const NativeRopeTables& rope_tables() const { return tables_; }
  const TokenEmbedding<T>& words() const { return words_; }
  const PatchEmbed<T>& patches() const { return patches_; }
  const std::vector<NativeBlock<T>>& prebuffer() const { return prebuffer_; }
  const std::vector<NativeBlock<T>>& postllm() const { return postllm_; }

  EmbeddedSequence<T> embed(const SequenceLayout& layout,
                            const std::vector<std::vector<int>>& text_ids,
                            const std::vector<VisualInput>& visuals) const;

  SequenceContext<T> context(const SequenceLayout& expanded_layout,
                             AttentionMode mode = AttentionMode::kMixed,
                             RopeMode rope = RopeMode::kNative) const;

  // Hidden states after the pre-Buffer stack.
  Tensor<T> prebuffer_hidden(const Tensor<T>& x, const SequenceContext<T>& ctx) const;

  // Logits [n, vocab_size].
  Tensor<T> forward(const Tensor<T>& x, const SequenceContext<T>& ctx,
                    bool use_prebuffer = true) const;

 private:
  ModelConfig cfg_;
  ParameterStore<T> store_;
  NativeRopeTables tables_;
  TokenEmbedding<T> words_;
  PatchEmbed<T> patches_;
  std::vector<NativeBlock<T>> prebuffer_;
  std::vector<NativeBlock<T>> postllm_;
  Tensor<T> final_norm_;
  Tensor<T> lm_head_;
};

// True for patch_embed.* and prebuffer.* names.
bool is_prebuffer_asset(const std::string& name);

// Patch embedding plus pre-Buffer entries only.
template <std::floating_point T>
Checkpoint export_prebuffer(const NativeModel<T>& model);

// Loads an exported pre-Buffer. Entries outside the pre-Buffer asset are
// rejected; shape mismatches throw ShapeError naming the entry.
template <std::floating_point T>
void import_prebuffer(NativeModel<T>& model, const Checkpoint& ckpt);

}  // namespace neo
