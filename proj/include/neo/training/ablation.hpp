#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "neo/training/train.hpp"

namespace neo {

struct AblationOptions {
  std::uint64_t seed = 0;
  int lm_steps = default_stage_steps(Stage::kLm);
  int pretrain_steps = default_stage_steps(Stage::kPretrain);
  int batch_size = 8;
  ToyDataOptions data;
};

struct AblationRow {
  AttentionMode attention = AttentionMode::kMixed;
  RopeMode rope = RopeMode::kNative;
  double initial_loss = 0;  // held-out, before pretraining
  double final_loss = 0;    // held-out, after pretraining
  double seconds = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string ordering;  // e.g. "mixed/native < causal/native < ..."
  std::string text;      // human-readable table
};

// Trains one shared text-only language stage, then pretrains a copy under
// each {causal, mixed} x {1D, Native} combination and compares held-out
// losses. Writes lm.ckpt, one metrics file per run, report.txt and
// report.jsonl into out_dir. The ordering is reported, not asserted.
template <std::floating_point T>
AblationReport run_ablation(const ModelConfig& cfg, const AblationOptions& options,
                            const std::filesystem::path& out_dir);

}  // namespace neo
