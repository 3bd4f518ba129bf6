#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "neo/backbone/backbone.hpp"
#include "neo/training/corpus.hpp"

namespace neo {

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  double peak_lr = 8e-4;
  double min_lr_ratio = 0.05;
  double warmup_ratio = 0.01;
  int total_steps = 200;
  int batch_size = 8;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double text_only_ratio = 0.3;
  std::uint64_t seed = 0;
  AttentionMode attention = AttentionMode::kMixed;
  RopeMode rope = RopeMode::kNative;
};

// Per-stage defaults: peak lr 8e-4 / 4e-5 / 5e-5 for pretrain / midtrain /
// sft, min-lr ratios 0.05 / 0.1 / 0, text-only ratio 0.3 / 0.3 / 0. The lm
// warm-up stage trains on text only.
TrainConfig default_train_config(Stage stage);

// ceil(warmup_ratio * total_steps), at least 1 when there are any steps.
int warmup_steps(const TrainConfig& cfg);

// Linear warm-up to peak, then cosine decay to peak * min_lr_ratio at
// total_steps. Optimizer step s (0-based) uses lr_at(s + 1).
double lr_at(int step, const TrainConfig& cfg);

// Next-token targets: position i predicts token i + 1 when that token is
// text; everything else is -1.
std::vector<int> ntp_targets(std::span<const int> token_ids, std::span<const Role> roles);

// Mean cross-entropy over positions whose next token is text. Throws
// ConfigError when no position qualifies.
template <std::floating_point T>
Tensor<T> ntp_loss(const Tensor<T>& logits, std::span<const int> token_ids,
                   std::span<const Role> roles);

// Decoupled-weight-decay Adam over the trainable entries of a store.
// Entries whose name contains "norm" are not decayed.
template <std::floating_point T>
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(ParameterStore<T>& store, double lr);
  int steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  TrainConfig cfg_;
  int t_ = 0;
  std::map<std::string, Moments> state_;
};

// Global L2 norm of trainable gradients before clipping; rescales them to
// max_norm when above it.
template <std::floating_point T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm);

struct TrainData {
  std::vector<SyntheticSample> multimodal;
  std::vector<SyntheticSample> text_only;
};

// One batch of batch_size samples. Each comes from the text pool with
// probability text_only_ratio, or always when the multimodal pool is empty.
std::vector<const SyntheticSample*> draw_batch(const TrainData& data, const TrainConfig& cfg,
                                               Rng& rng);

struct StepMetrics {
  int step = 0;
  double loss = 0;
  double lr = 0;
  double grad_norm = 0;
};

// Forward pass and NTP loss for one sample.
template <std::floating_point T>
Tensor<T> sample_loss(const NativeModel<T>& model, const SyntheticSample& sample, Stage stage,
                      AttentionMode attention, RopeMode rope);

// Mean sample loss without building a graph.
template <std::floating_point T>
double eval_loss(const NativeModel<T>& model, std::span<const SyntheticSample> samples,
                 Stage stage, AttentionMode attention = AttentionMode::kMixed,
                 RopeMode rope = RopeMode::kNative);

// Applies the stage policy, then runs total_steps AdamW steps on batches
// drawn with probability text_only_ratio from the text pool. Throws
// NumericError with the step index on a non-finite loss.
template <std::floating_point T>
std::vector<StepMetrics> train(NativeModel<T>& model, const TrainData& data,
                               const TrainConfig& cfg,
                               const std::function<void(const StepMetrics&)>& on_step = {});

void write_metrics_jsonl(const std::filesystem::path& path,
                         const std::vector<StepMetrics>& metrics);

// Desk-scale data used by the CLI, the acceptance suite and the ablation.
struct ToyDataOptions {
  int grid_rows = 2;
  int grid_cols = 2;
  int palette_size = 4;
  int multimodal_samples = 256;
  int text_samples = 256;
  int eval_samples = 32;
};

struct ToyData {
  TrainData train;
  std::vector<SyntheticSample> eval_multimodal;
  std::vector<SyntheticSample> eval_text;
};

ToyData make_toy_data(const ToyDataOptions& options, std::uint64_t seed);

// Held-out loss weighted like the training mix: text_only_ratio on the
// text set, the rest on the multimodal set.
template <std::floating_point T>
double mixed_eval_loss(const NativeModel<T>& model, const ToyData& data, const TrainConfig& cfg);

// Default lengths of each stage at desk scale.
int default_stage_steps(Stage stage);

}  // namespace neo
