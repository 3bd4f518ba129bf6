#include "neo/training/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "neo/core/errors.hpp"
#include "neo/core/ops.hpp"

namespace neo {

TrainConfig default_train_config(Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.total_steps = default_stage_steps(stage);
  switch (stage) {
    case Stage::kLm:
      cfg.peak_lr = 3e-3;
      cfg.min_lr_ratio = 0.1;
      cfg.text_only_ratio = 1.0;
      break;
    case Stage::kPretrain:
      cfg.peak_lr = 8e-4;
      cfg.min_lr_ratio = 0.05;
      cfg.text_only_ratio = 0.3;
      break;
    case Stage::kMidtrain:
      cfg.peak_lr = 4e-5;
      cfg.min_lr_ratio = 0.1;
      cfg.text_only_ratio = 0.3;
      break;
    case Stage::kSft:
      cfg.peak_lr = 5e-5;
      cfg.min_lr_ratio = 0.0;
      cfg.text_only_ratio = 0.0;
      break;
  }
  return cfg;
}

int default_stage_steps(Stage stage) {
  switch (stage) {
    case Stage::kLm: return 300;
    case Stage::kPretrain: return 200;
    case Stage::kMidtrain: return 100;
    case Stage::kSft: return 50;
  }
  return 0;
}

int warmup_steps(const TrainConfig& cfg) {
  if (cfg.total_steps <= 0) return 0;
  return std::max(1, static_cast<int>(std::ceil(cfg.warmup_ratio * cfg.total_steps)));
}

double lr_at(int step, const TrainConfig& cfg) {
  const int warmup = warmup_steps(cfg);
  if (step <= 0) return 0.0;
  if (step <= warmup) return cfg.peak_lr * step / warmup;
  if (cfg.total_steps <= warmup) return cfg.peak_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / (cfg.total_steps - warmup));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.peak_lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * cosine);
}

std::vector<int> ntp_targets(std::span<const int> token_ids, std::span<const Role> roles) {
  if (token_ids.size() != roles.size()) {
    throw ShapeError("ntp targets: " + std::to_string(token_ids.size()) + " ids vs " +
                     std::to_string(roles.size()) + " roles");
  }
  std::vector<int> targets(token_ids.size(), -1);
  for (std::size_t i = 0; i + 1 < token_ids.size(); ++i) {
    if (roles[i + 1] == Role::kText) targets[i] = token_ids[i + 1];
  }
  return targets;
}

template <std::floating_point T>
Tensor<T> ntp_loss(const Tensor<T>& logits, std::span<const int> token_ids,
                   std::span<const Role> roles) {
  const auto targets = ntp_targets(token_ids, roles);
  bool any = false;
  for (int t : targets) any = any || t >= 0;
  if (!any) throw ConfigError("ntp loss: no position is followed by a text token");
  return ops::cross_entropy(logits, targets);
}

template <std::floating_point T>
void AdamW<T>::step(ParameterStore<T>& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (auto& [name, entry] : store.entries()) {
    if (!entry.trainable) continue;
    const auto grad = entry.tensor.grad();
    if (grad.empty()) continue;
    auto values = store.at(name).tensor.mutable_values();
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(values.size(), 0.0);
      st.v.assign(values.size(), 0.0);
    }
    const bool decay = name.find("norm") == std::string::npos;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double update = (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg_.adam_eps);
      double p = values[i];
      if (decay) p -= lr * cfg_.weight_decay * p;
      values[i] = static_cast<T>(p - lr * update);
    }
  }
}

template <std::floating_point T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm) {
  double sq = 0;
  for (const auto& [name, entry] : store.entries()) {
    if (!entry.trainable) continue;
    for (T g : entry.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [name, entry] : store.entries()) {
      if (!entry.trainable || entry.tensor.grad().empty()) continue;
      for (T& g : store.at(name).tensor.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

template <std::floating_point T>
Tensor<T> sample_loss(const NativeModel<T>& model, const SyntheticSample& sample, Stage stage,
                      AttentionMode attention, RopeMode rope) {
  const auto seq = model.embed(sample.layout(), sample.text_ids(), sample.visuals());
  const auto ctx = model.context(seq.layout, attention, rope);
  const auto logits = model.forward(seq.embeddings, ctx, stage_uses_prebuffer(stage));
  return ntp_loss(logits, seq.token_ids, seq.roles);
}

template <std::floating_point T>
double eval_loss(const NativeModel<T>& model, std::span<const SyntheticSample> samples,
                 Stage stage, AttentionMode attention, RopeMode rope) {
  if (samples.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0;
  for (const auto& s : samples) total += sample_loss(model, s, stage, attention, rope).item();
  return total / static_cast<double>(samples.size());
}

std::vector<const SyntheticSample*> draw_batch(const TrainData& data, const TrainConfig& cfg,
                                               Rng& rng) {
  if (data.multimodal.empty() && data.text_only.empty()) {
    throw ConfigError("training data is empty");
  }
  std::vector<const SyntheticSample*> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const bool text = data.multimodal.empty() ||
                      (!data.text_only.empty() && rng.bernoulli(cfg.text_only_ratio));
    const auto& pool = text ? data.text_only : data.multimodal;
    batch.push_back(&pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]);
  }
  return batch;
}

template <std::floating_point T>
std::vector<StepMetrics> train(NativeModel<T>& model, const TrainData& data,
                               const TrainConfig& cfg,
                               const std::function<void(const StepMetrics&)>& on_step) {
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (data.multimodal.empty() && data.text_only.empty()) {
    throw ConfigError("training data is empty");
  }
  auto& store = model.store();
  apply_stage_policy(store, cfg.stage);
  AdamW<T> optimizer(cfg);
  Rng sampler(cfg.seed);
  std::vector<StepMetrics> metrics;

  for (int step = 0; step < cfg.total_steps; ++step) {
    store.zero_grad();
    Tensor<T> batch_loss;
    for (const auto* sample : draw_batch(data, cfg, sampler)) {
      auto loss = sample_loss(model, *sample, cfg.stage, cfg.attention, cfg.rope);
      batch_loss = batch_loss.defined() ? ops::add(batch_loss, loss) : loss;
    }
    batch_loss = ops::scale(batch_loss, static_cast<T>(1.0 / cfg.batch_size));
    const double loss_value = batch_loss.item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }
    batch_loss.backward();

    StepMetrics m;
    m.step = step;
    m.loss = loss_value;
    m.lr = lr_at(step + 1, cfg);
    m.grad_norm = clip_grad_norm(store, cfg.grad_clip);
    optimizer.step(store, m.lr);
    metrics.push_back(m);
    if (on_step) on_step(m);
  }
  store.zero_grad();
  return metrics;
}

void write_metrics_jsonl(const std::filesystem::path& path,
                         const std::vector<StepMetrics>& metrics) {
  std::ofstream out(path);
  for (const auto& m : metrics) {
    nlohmann::json j{{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"grad_norm", m.grad_norm}};
    out << j.dump() << '\n';
  }
  if (!out) throw FormatError("cannot write metrics to " + path.string());
}

ToyData make_toy_data(const ToyDataOptions& o, std::uint64_t seed) {
  ToyData d;
  d.train.multimodal = gen_corpus(o.multimodal_samples, o.grid_rows, o.grid_cols,
                                  o.palette_size, seed * 4 + 1);
  d.train.text_only = gen_text_corpus(o.text_samples, o.grid_rows, o.grid_cols, o.palette_size, seed * 4 + 2);
  d.eval_multimodal =
      gen_corpus(o.eval_samples, o.grid_rows, o.grid_cols, o.palette_size, seed * 4 + 3);
  d.eval_text = gen_text_corpus(o.eval_samples, o.grid_rows, o.grid_cols, o.palette_size, seed * 4 + 4);
  return d;
}

template <std::floating_point T>
double mixed_eval_loss(const NativeModel<T>& model, const ToyData& data, const TrainConfig& cfg) {
  const double r = cfg.text_only_ratio;
  double loss = 0;
  if (r > 0) loss += r * eval_loss(model, data.eval_text, cfg.stage, cfg.attention, cfg.rope);
  if (r < 1) {
    loss += (1 - r) * eval_loss(model, data.eval_multimodal, cfg.stage, cfg.attention, cfg.rope);
  }
  return loss;
}

#define NEO_INSTANTIATE(T)                                                                     \
  template Tensor<T> ntp_loss<T>(const Tensor<T>&, std::span<const int>, std::span<const Role>); \
  template class AdamW<T>;                                                                     \
  template double clip_grad_norm<T>(ParameterStore<T>&, double);                               \
  template Tensor<T> sample_loss<T>(const NativeModel<T>&, const SyntheticSample&, Stage,      \
                                    AttentionMode, RopeMode);                                  \
  template double eval_loss<T>(const NativeModel<T>&, std::span<const SyntheticSample>, Stage, \
                               AttentionMode, RopeMode);                                       \
  template std::vector<StepMetrics> train<T>(NativeModel<T>&, const TrainData&,                \
                                             const TrainConfig&,                               \
                                             const std::function<void(const StepMetrics&)>&); \
  template double mixed_eval_loss<T>(const NativeModel<T>&, const ToyData&, const TrainConfig&);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)
NEO_INSTANTIATE(long double)
#undef NEO_INSTANTIATE

}  // namespace neo
