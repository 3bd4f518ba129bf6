#include "neo/training/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "neo/core/errors.hpp"

namespace neo {

namespace {

std::string run_label(const AblationRow& row) {
  return std::string(attention_mode_name(row.attention)) + "/" + rope_mode_name(row.rope);
}

}  // namespace

template <std::floating_point T>
AblationReport run_ablation(const ModelConfig& cfg, const AblationOptions& options,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto data = make_toy_data(options.data, options.seed);

  // Shared language stage; every run starts from the same weights.
  Checkpoint lm_ckpt;
  {
    NativeModel<T> model(cfg, options.seed + 1);
    auto lm = default_train_config(Stage::kLm);
    lm.total_steps = options.lm_steps;
    lm.batch_size = options.batch_size;
    lm.seed = options.seed + 2;
    train(model, TrainData{{}, data.train.text_only}, lm);
    lm_ckpt = model.store().to_checkpoint();
    write_checkpoint(out_dir / "lm.ckpt", lm_ckpt);
  }

  AblationReport report;
  for (auto attention : {AttentionMode::kCausal, AttentionMode::kMixed}) {
    for (auto rope : {RopeMode::k1D, RopeMode::kNative}) {
      const auto start = std::chrono::steady_clock::now();
      NativeModel<T> model(cfg, options.seed + 1);
      model.store().load(lm_ckpt);
      auto tc = default_train_config(Stage::kPretrain);
      tc.total_steps = options.pretrain_steps;
      tc.batch_size = options.batch_size;
      tc.seed = options.seed + 3;
      tc.attention = attention;
      tc.rope = rope;

      AblationRow row;
      row.attention = attention;
      row.rope = rope;
      row.initial_loss = mixed_eval_loss(model, data, tc);
      const auto metrics = train(model, data.train, tc);
      row.final_loss = mixed_eval_loss(model, data, tc);
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::string name = run_label(row);
      std::replace(name.begin(), name.end(), '/', '_');
      write_metrics_jsonl(out_dir / ("metrics_" + name + ".jsonl"), metrics);
      report.rows.push_back(row);
    }
  }

  auto sorted = report.rows;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.final_loss < b.final_loss; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    report.ordering += (i ? " < " : "") + run_label(sorted[i]);
  }

  char line[160];
  report.text = "attention  rope     initial_loss  final_loss  seconds\n";
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof line, "%-9s  %-7s  %12.4f  %10.4f  %7.1f\n",
                  attention_mode_name(row.attention), rope_mode_name(row.rope), row.initial_loss,
                  row.final_loss, row.seconds);
    report.text += line;
  }
  report.text += "ordering (lowest final loss first): " + report.ordering + "\n";

  std::ofstream(out_dir / "report.txt") << report.text;
  std::ofstream jsonl(out_dir / "report.jsonl");
  for (const auto& row : report.rows) {
    nlohmann::json j{{"attention", attention_mode_name(row.attention)},
                     {"rope", rope_mode_name(row.rope)},
                     {"initial_loss", row.initial_loss},
                     {"final_loss", row.final_loss},
                     {"seconds", row.seconds}};
    jsonl << j.dump() << '\n';
  }
  if (!jsonl) throw FormatError("cannot write ablation report in " + out_dir.string());
  return report;
}

template AblationReport run_ablation<float>(const ModelConfig&, const AblationOptions&,
                                            const std::filesystem::path&);
template AblationReport run_ablation<double>(const ModelConfig&, const AblationOptions&,
                                             const std::filesystem::path&);

}  // namespace neo
