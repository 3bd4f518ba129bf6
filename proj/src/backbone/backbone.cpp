#include "neo/backbone/backbone.hpp"

#include "neo/core/errors.hpp"
#include "neo/core/ops.hpp"

namespace neo {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// postllm.<i>.attn.{wq,wk,q_norm,k_norm}_{h,w}
bool is_added_qk(const std::string& name) {
  if (!starts_with(name, "postllm.") || name.find(".attn.") == std::string::npos) return false;
  for (const char* stem : {"wq", "wk", "q_norm", "k_norm"}) {
    for (const char* axis : {"_h", "_w"}) {
      if (ends_with(name, std::string(".attn.") + stem + axis)) return true;
    }
  }
  return false;
}

}  // namespace

template <std::floating_point T>
NativeBlock<T> NativeBlock<T>::create(ParameterStore<T>& store, const std::string& prefix,
                                      const NativeAttentionConfig& cfg, Rng& rng,
                                      double init_std) {
  NativeBlock b;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.ffn_hidden);
  b.attn_norm = store.create(prefix + ".attn_norm", {d}, InitTag::kOnes, rng, init_std);
  b.attn = AttentionWeights<T>::create(store, prefix + ".attn", cfg, rng, init_std);
  b.ffn_norm = store.create(prefix + ".ffn_norm", {d}, InitTag::kOnes, rng, init_std);
  b.gate = store.create(prefix + ".ffn.gate", {d, f}, InitTag::kStandard, rng, init_std);
  b.up = store.create(prefix + ".ffn.up", {d, f}, InitTag::kStandard, rng, init_std);
  b.down = store.create(prefix + ".ffn.down", {f, d}, InitTag::kStandard, rng, init_std);
  return b;
}

template <std::floating_point T>
Tensor<T> NativeBlock<T>::forward(const Tensor<T>& x, const SequenceContext<T>& ctx,
                                  const NativeAttentionConfig& cfg) const {
  const T eps = static_cast<T>(cfg.rmsnorm_eps);
  auto h = ops::add(x, native_attention(ops::rmsnorm(x, attn_norm, eps), attn, ctx, cfg));
  const auto z = ops::rmsnorm(h, ffn_norm, eps);
  const auto act = ops::mul(ops::silu(ops::matmul(z, gate)), ops::matmul(z, up));
  return ops::add(h, ops::matmul(act, down));
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kLm: return "lm";
    case Stage::kPretrain: return "pretrain";
    case Stage::kMidtrain: return "midtrain";
    case Stage::kSft: return "sft";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (Stage s : {Stage::kLm, Stage::kPretrain, Stage::kMidtrain, Stage::kSft}) {
    if (text == stage_name(s)) return s;
  }
  throw ConfigError("unknown stage '" + text + "' (expected lm, pretrain, midtrain or sft)");
}

bool stage_trainable(Stage stage, const std::string& name) {
  switch (stage) {
    case Stage::kLm:
      return name == "embed.tokens" || name == "final_norm" || name == "lm_head" ||
             (starts_with(name, "postllm.") && !is_added_qk(name));
    case Stage::kPretrain:
      return starts_with(name, "patch_embed.") || starts_with(name, "prebuffer.") ||
             is_added_qk(name);
    case Stage::kMidtrain:
    case Stage::kSft:
      return true;
  }
  return false;
}

template <std::floating_point T>
std::set<std::string> apply_stage_policy(ParameterStore<T>& store, Stage stage) {
  for (const auto& [name, entry] : store.entries()) {
    store.set_trainable(name, stage_trainable(stage, name));
  }
  return store.trainable_names();
}

template <std::floating_point T>
NativeModel<T>::NativeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto& a = cfg_.attn;
  tables_ = NativeRopeTables::build(a, cfg_.max_positions);
  // Registration order fixes the random stream; keep it stable.
  patches_ = PatchEmbed<T>(store_, cfg_, rng);
  words_ = TokenEmbedding<T>(store_, cfg_, rng);
  for (int i = 0; i < a.n_prebuffer_layers; ++i) {
    prebuffer_.push_back(NativeBlock<T>::create(store_, "prebuffer." + std::to_string(i), a, rng,
                                                cfg_.init_std));
  }
  for (int i = 0; i < a.n_postllm_layers; ++i) {
    postllm_.push_back(NativeBlock<T>::create(store_, "postllm." + std::to_string(i), a, rng,
                                              cfg_.init_std));
  }
  const auto d = static_cast<std::size_t>(a.d_model);
  final_norm_ = store_.create("final_norm", {d}, InitTag::kOnes, rng, cfg_.init_std);
  lm_head_ = store_.create("lm_head", {d, static_cast<std::size_t>(a.vocab_size)},
                           InitTag::kStandard, rng, cfg_.init_std);
}

template <std::floating_point T>
EmbeddedSequence<T> NativeModel<T>::embed(const SequenceLayout& layout,
                                          const std::vector<std::vector<int>>& text_ids,
                                          const std::vector<VisualInput>& visuals) const {
  return embed_sequence<T>(layout, text_ids, visuals, words_, patches_);
}

template <std::floating_point T>
SequenceContext<T> NativeModel<T>::context(const SequenceLayout& expanded_layout,
                                           AttentionMode mode, RopeMode rope) const {
  return make_context<T>(expanded_layout, tables_, mode, rope);
}

template <std::floating_point T>
Tensor<T> NativeModel<T>::prebuffer_hidden(const Tensor<T>& x,
                                           const SequenceContext<T>& ctx) const {
  Tensor<T> h = x;
  for (const auto& block : prebuffer_) h = block.forward(h, ctx, cfg_.attn);
  return h;
}

template <std::floating_point T>
Tensor<T> NativeModel<T>::forward(const Tensor<T>& x, const SequenceContext<T>& ctx,
                                  bool use_prebuffer) const {
  Tensor<T> h = use_prebuffer ? prebuffer_hidden(x, ctx) : x;
  for (const auto& block : postllm_) h = block.forward(h, ctx, cfg_.attn);
  h = ops::rmsnorm(h, final_norm_, static_cast<T>(cfg_.attn.rmsnorm_eps));
  return ops::matmul(h, lm_head_);
}

bool is_prebuffer_asset(const std::string& name) {
  return starts_with(name, "patch_embed.") || starts_with(name, "prebuffer.");
}

template <std::floating_point T>
Checkpoint export_prebuffer(const NativeModel<T>& model) {
  auto ckpt = model.store().to_checkpoint(is_prebuffer_asset);
  // Round-trip through the encoder so duplicate names surface here.
  return decode_checkpoint(encode_checkpoint(ckpt));
}

template <std::floating_point T>
void import_prebuffer(NativeModel<T>& model, const Checkpoint& ckpt) {
  for (const auto& entry : ckpt.entries) {
    if (!is_prebuffer_asset(entry.name)) {
      throw ConfigError("entry '" + entry.name + "' is not part of a pre-Buffer export");
    }
  }
  model.store().load(ckpt);
}

#define NEO_INSTANTIATE(T)                                                                  \
  template struct NativeBlock<T>;                                                           \
  template std::set<std::string> apply_stage_policy<T>(ParameterStore<T>&, Stage);          \
  template class NativeModel<T>;                                                            \
  template Checkpoint export_prebuffer<T>(const NativeModel<T>&);                           \
  template void import_prebuffer<T>(NativeModel<T>&, const Checkpoint&);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)
NEO_INSTANTIATE(long double)
#undef NEO_INSTANTIATE

}  // namespace neo
