#pragma once

#include <vector>

#include "neo/core/config.hpp"
#include "neo/core/layout.hpp"
#include "neo/core/param_store.hpp"
#include "neo/embedding/image.hpp"

namespace neo {

// [h * w, dim] table. Channels [0, dim/2) encode the row, [dim/2, dim) the
// column; within a half, pair k uses pos * 10000^(-2k / (dim/2)) with sin
// on the even and cos on the odd channel.
std::vector<double> sinusoidal_pe_2d(int h, int w, int dim);

// Untied word-embedding table `embed.tokens` [vocab, d_model].
template <std::floating_point T>
class TokenEmbedding {
 public:
  TokenEmbedding() = default;
  TokenEmbedding(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

  Tensor<T> forward(std::span<const int> ids) const;
  const Tensor<T>& table() const { return table_; }

 private:
  Tensor<T> table_;
  int vocab_size_ = 0;
};

template <std::floating_point T>
struct PatchTokens {
  Tensor<T> tokens;  // [h_tokens * w_tokens, d_model], raster order
  int h_tokens = 0;
  int w_tokens = 0;
};

// Conv2(GELU(Conv1(I)) + PE): a stride-16 patch convolution, GELU, 2D
// sinusoidal PE over the Conv1 grid, then a stride-2 convolution that folds
// 2x2 neighbourhoods so each output token covers a 32x32 patch.
template <std::floating_point T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

  // Throws ConfigError unless height and width are multiples of the
  // effective patch size.
  PatchTokens<T> forward(const Image& image) const;

 private:
  PatchEmbedConfig cfg_;
  int inner_dim_ = 0;
  int d_model_ = 0;
  Tensor<T> conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

struct PatchGrid {
  int h_tokens = 0;
  int w_tokens = 0;
};

// Token grid an image of the given size folds into; same precondition as
// PatchEmbed::forward.
PatchGrid patch_grid(int height, int width, const PatchEmbedConfig& cfg);

// Wraps every image and every video clip in 1-token `<img>` / `</img>` text
// runs.
SequenceLayout insert_markers(const SequenceLayout& layout);

// Pixels for one visual segment: one frame for an image, n_frames for video.
struct VisualInput {
  std::vector<Image> frames;
};

template <std::floating_point T>
struct EmbeddedSequence {
  Tensor<T> embeddings;  // [n, d_model]
  std::vector<Role> roles;
  SequenceLayout layout;   // with marker runs
  std::vector<int> token_ids;  // -1 for visual tokens
};

// Text runs go through the word table, visual segments through the patch
// embedding, and markers are inserted around each visual segment.
// `text_ids` has one list per TextRun, `visuals` one entry per ImageGrid or
// VideoClip, both in layout order.
template <std::floating_point T>
EmbeddedSequence<T> embed_sequence(const SequenceLayout& layout,
                                   const std::vector<std::vector<int>>& text_ids,
                                   const std::vector<VisualInput>& visuals,
                                   const TokenEmbedding<T>& words, const PatchEmbed<T>& patches);

}  // namespace neo
