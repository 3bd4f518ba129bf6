#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace neo {

// Geometry of one native primitive block and of the whole stack.
//
// Query/key heads carry three parts: the original temporal part of width
// d_head_t plus the added height/width parts. Values and the output
// projection stay on d_head_t only.
struct NativeAttentionConfig {
  int d_model = 64;
  int n_q_heads = 4;
  int n_kv_heads = 2;
  int d_head_t = 16;
  int d_head_h = 8;
  int d_head_w = 8;
  double beta_t = 1e6;
  double beta_h = 1e4;
  double beta_w = 1e4;
  int n_prebuffer_layers = 2;
  int n_postllm_layers = 2;
  int ffn_hidden = 128;
  int vocab_size = 64;
  double rmsnorm_eps = 1e-6;
  // Unset means 1/sqrt(d_head_t). Never derived from the expanded width.
  std::optional<double> attn_scale;

  double scale() const;
  int n_layers() const { return n_prebuffer_layers + n_postllm_layers; }
  int group_size() const { return n_q_heads / n_kv_heads; }
  void validate() const;
};

struct PatchEmbedConfig {
  int conv1_kernel = 16;
  int conv1_stride = 16;
  int conv2_kernel = 2;
  int conv2_stride = 2;
  int in_channels = 3;
  // 0 means "same as d_model".
  int inner_dim = 0;

  int effective_patch() const { return conv1_stride * conv2_stride; }
  void validate() const;
};

struct ModelConfig {
  NativeAttentionConfig attn;
  PatchEmbedConfig patch;
  double init_std = 0.02;
  // Largest T/H/W index the cached rotary tables cover.
  int max_positions = 4096;

  int inner_dim() const {
    return patch.inner_dim > 0 ? patch.inner_dim : attn.d_model;
  }
  void validate() const;
};

// The desk-scale configuration used across tests: d_model 64, 4 query
// heads over 2 kv heads, 16-wide temporal parts, 2 pre-Buffer + 2 post-LLM.
ModelConfig toy_config();

// Full-size geometries for parameter bookkeeping only: Qwen3-1.7B and
// Qwen3-8B post-LLMs with 12 and 6 pre-Buffer layers, H/W parts of half the
// temporal width each.
ModelConfig neo_2b_like_config();
ModelConfig neo_9b_like_config();

// `key = value` lines, `#` comments. Unknown keys are rejected.
ModelConfig parse_model_config(const std::string& text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string render_model_config(const ModelConfig& cfg);

}  // namespace neo
