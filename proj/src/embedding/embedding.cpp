#include "neo/embedding/embedding.hpp"

#include <cmath>

#include "neo/core/errors.hpp"
#include "neo/core/ops.hpp"
#include "neo/embedding/vocab.hpp"

namespace neo {

std::vector<double> sinusoidal_pe_2d(int h, int w, int dim) {
  if (dim <= 0 || dim % 4 != 0) {
    throw ConfigError("2D sinusoidal PE needs dim divisible by 4, got " + std::to_string(dim));
  }
  if (h <= 0 || w <= 0) throw ConfigError("2D sinusoidal PE needs a non-empty grid");
  const int half = dim / 2;
  std::vector<double> pe(static_cast<std::size_t>(h) * w * dim);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double* row = &pe[(static_cast<std::size_t>(r) * w + c) * dim];
      for (int k = 0; k < half / 2; ++k) {
        const double freq = std::pow(10000.0, -2.0 * k / half);
        row[2 * k] = std::sin(r * freq);
        row[2 * k + 1] = std::cos(r * freq);
        row[half + 2 * k] = std::sin(c * freq);
        row[half + 2 * k + 1] = std::cos(c * freq);
      }
    }
  }
  return pe;
}

template <std::floating_point T>
TokenEmbedding<T>::TokenEmbedding(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng)
    : vocab_size_(cfg.attn.vocab_size) {
  table_ = store.create("embed.tokens",
                        {static_cast<std::size_t>(cfg.attn.vocab_size),
                         static_cast<std::size_t>(cfg.attn.d_model)},
                        InitTag::kStandard, rng, cfg.init_std);
}

template <std::floating_point T>
Tensor<T> TokenEmbedding<T>::forward(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || id >= vocab_size_) {
      throw ConfigError("token id " + std::to_string(id) + " outside vocab_size " +
                        std::to_string(vocab_size_));
    }
  }
  return ops::embedding(table_, ids);
}

template <std::floating_point T>
PatchEmbed<T>::PatchEmbed(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg.patch), inner_dim_(cfg.inner_dim()), d_model_(cfg.attn.d_model) {
  const auto k1 = static_cast<std::size_t>(cfg_.conv1_kernel);
  const auto k2 = static_cast<std::size_t>(cfg_.conv2_kernel);
  const auto inner = static_cast<std::size_t>(inner_dim_);
  const auto d = static_cast<std::size_t>(d_model_);
  conv1_w_ = store.create("patch_embed.conv1.weight",
                          {k1 * k1 * static_cast<std::size_t>(cfg_.in_channels), inner},
                          InitTag::kStandard, rng, cfg.init_std);
  conv1_b_ = store.create("patch_embed.conv1.bias", {inner}, InitTag::kStandard, rng,
                          cfg.init_std);
  conv2_w_ = store.create("patch_embed.conv2.weight", {k2 * k2 * inner, d}, InitTag::kStandard,
                          rng, cfg.init_std);
  conv2_b_ = store.create("patch_embed.conv2.bias", {d}, InitTag::kStandard, rng,
                          cfg.init_std);
}

PatchGrid patch_grid(int height, int width, const PatchEmbedConfig& cfg) {
  const int patch = cfg.effective_patch();
  if (height <= 0 || width <= 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not a positive multiple of the " + std::to_string(patch) + "x" +
                      std::to_string(patch) +
                      " effective patch; resize or pad the image before embedding");
  }
  PatchGrid grid;
  grid.h_tokens = height / patch;
  grid.w_tokens = width / patch;
  return grid;
}

template <std::floating_point T>
PatchTokens<T> PatchEmbed<T>::forward(const Image& image) const {
  const auto grid = patch_grid(image.height, image.width, cfg_);
  if (image.channels != cfg_.in_channels) {
    throw ConfigError("image has " + std::to_string(image.channels) + " channels, patch embed " +
                      "expects " + std::to_string(cfg_.in_channels));
  }
  const auto h1 = static_cast<std::size_t>(image.height / cfg_.conv1_stride);
  const auto w1 = static_cast<std::size_t>(image.width / cfg_.conv1_stride);

  const auto pixels = image_rows<T>(image);
  auto x = ops::im2col(pixels, image.height, image.width, cfg_.conv1_kernel, cfg_.conv1_stride);
  x = ops::gelu(ops::add_bias(ops::matmul(x, conv1_w_), conv1_b_));

  const auto pe = sinusoidal_pe_2d(static_cast<int>(h1), static_cast<int>(w1), inner_dim_);
  x = ops::add(x, Tensor<T>({h1 * w1, static_cast<std::size_t>(inner_dim_)},
                            std::vector<T>(pe.begin(), pe.end())));

  x = ops::im2col(x, h1, w1, cfg_.conv2_kernel, cfg_.conv2_stride);
  x = ops::add_bias(ops::matmul(x, conv2_w_), conv2_b_);
  return {x, grid.h_tokens, grid.w_tokens};
}

SequenceLayout insert_markers(const SequenceLayout& layout) {
  SequenceLayout out;
  for (const auto& segment : layout.segments) {
    if (is_visual(segment)) {
      out.segments.push_back(TextRun{1});
      out.segments.push_back(segment);
      out.segments.push_back(TextRun{1});
    } else {
      out.segments.push_back(segment);
    }
  }
  return out;
}

namespace {

std::string segment_label(std::size_t index) { return "segment " + std::to_string(index); }

}  // namespace

template <std::floating_point T>
EmbeddedSequence<T> embed_sequence(const SequenceLayout& layout,
                                   const std::vector<std::vector<int>>& text_ids,
                                   const std::vector<VisualInput>& visuals,
                                   const TokenEmbedding<T>& words, const PatchEmbed<T>& patches) {
  std::size_t n_text = 0, n_visual = 0;
  for (const auto& segment : layout.segments) (is_visual(segment) ? n_visual : n_text)++;
  if (text_ids.size() != n_text) {
    throw ConfigError("layout has " + std::to_string(n_text) + " text runs but " +
                      std::to_string(text_ids.size()) + " id lists were given");
  }
  if (visuals.size() != n_visual) {
    throw ConfigError("layout has " + std::to_string(n_visual) + " visual segments but " +
                      std::to_string(visuals.size()) + " pixel inputs were given");
  }

  EmbeddedSequence<T> out;
  out.layout = insert_markers(layout);
  std::vector<Tensor<T>> pieces;
  std::size_t next_text = 0, next_visual = 0;

  auto push_text = [&](std::span<const int> ids) {
    pieces.push_back(words.forward(ids));
    for (int id : ids) {
      out.roles.push_back(Role::kText);
      out.token_ids.push_back(id);
    }
  };
  const int start_marker[] = {Vocabulary::kImgStart};
  const int end_marker[] = {Vocabulary::kImgEnd};

  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    const auto& segment = layout.segments[s];
    if (const auto* text = std::get_if<TextRun>(&segment)) {
      const auto& ids = text_ids[next_text++];
      if (ids.size() != static_cast<std::size_t>(text->n_tokens)) {
        throw ConfigError(segment_label(s) + ": text run expects " +
                          std::to_string(text->n_tokens) + " ids, got " +
                          std::to_string(ids.size()));
      }
      push_text(ids);
      continue;
    }

    const auto& frames = visuals[next_visual++].frames;
    int n_frames = 1, h_tokens = 0, w_tokens = 0;
    if (const auto* image = std::get_if<ImageGrid>(&segment)) {
      h_tokens = image->h_tokens;
      w_tokens = image->w_tokens;
    } else {
      const auto& video = std::get<VideoClip>(segment);
      n_frames = video.n_frames;
      h_tokens = video.h_tokens;
      w_tokens = video.w_tokens;
    }
    if (frames.size() != static_cast<std::size_t>(n_frames)) {
      throw ConfigError(segment_label(s) + ": expects " + std::to_string(n_frames) +
                        " frame(s), got " + std::to_string(frames.size()));
    }
    push_text(start_marker);
    for (const auto& frame : frames) {
      auto tokens = patches.forward(frame);
      if (tokens.h_tokens != h_tokens || tokens.w_tokens != w_tokens) {
        throw ConfigError(segment_label(s) + ": pixels fold into " +
                          std::to_string(tokens.h_tokens) + "x" +
                          std::to_string(tokens.w_tokens) + " tokens, layout says " +
                          std::to_string(h_tokens) + "x" + std::to_string(w_tokens));
      }
      pieces.push_back(tokens.tokens);
      for (int i = 0; i < h_tokens * w_tokens; ++i) {
        out.roles.push_back(Role::kVisual);
        out.token_ids.push_back(-1);
      }
    }
    push_text(end_marker);
  }
  out.embeddings = ops::concat_rows<T>(pieces);
  return out;
}

template class TokenEmbedding<float>;
template class TokenEmbedding<double>;
template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class TokenEmbedding<long double>;
template class PatchEmbed<long double>;
template EmbeddedSequence<float> embed_sequence<float>(
    const SequenceLayout&, const std::vector<std::vector<int>>&, const std::vector<VisualInput>&,
    const TokenEmbedding<float>&, const PatchEmbed<float>&);
template EmbeddedSequence<double> embed_sequence<double>(
    const SequenceLayout&, const std::vector<std::vector<int>>&, const std::vector<VisualInput>&,
    const TokenEmbedding<double>&, const PatchEmbed<double>&);
template EmbeddedSequence<long double> embed_sequence<long double>(
    const SequenceLayout&, const std::vector<std::vector<int>>&, const std::vector<VisualInput>&,
    const TokenEmbedding<long double>&, const PatchEmbed<long double>&);

}  // namespace neo
