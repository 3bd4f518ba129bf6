// neo: command-line entry point for the invariant suite, training, the
// ablation grid and the dump tools. Run `neo --help` for the command list.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "neo/checks/compare.hpp"
#include "neo/checks/criteria.hpp"
#include "neo/core/errors.hpp"
#include "neo/embedding/embedding.hpp"
#include "neo/training/ablation.hpp"
#include "neo/training/train.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int precision = 64;
};

neo::ModelConfig model_config(const std::string& path) {
  return path.empty() ? neo::toy_config() : neo::load_model_config(path);
}

// Writes to `path`, or stdout when it is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  std::ofstream out(path);
  out << text;
  if (!out) throw neo::FormatError("cannot write " + path);
}

std::string format_double(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

// check

struct CheckArgs {
  bool full = false;
  int cases = 100;
  std::string report;
};

int run_check(const Globals& g, const CheckArgs& a) {
  int failures = 0;
  const auto reports = neo::checks::compare_all(g.seed, a.cases);
  for (const auto& r : neo::checks::worst_per_pairing(reports)) {
    std::printf("%s oracle %-10s worst rel diff %.3g (tol %.1g)\n", r.pass ? "PASS" : "FAIL",
                r.pairing.c_str(), r.max_rel_diff, r.tolerance);
  }
  if (!neo::checks::all_pass(reports)) ++failures;
  if (!a.report.empty()) neo::checks::write_reports_jsonl(a.report, reports);

  neo::checks::CriteriaOptions opts;
  opts.seed = g.seed;
  opts.work_dir = fs::temp_directory_path() / "neo_check";
  for (int id : neo::checks::criterion_ids()) {
    // Training and the ablation grid take minutes; opt in with --full.
    if (!a.full && id >= 9) continue;
    const auto result = neo::checks::run_criterion(id, opts);
    std::printf("%s\n", neo::checks::format_result(result).c_str());
    std::fflush(stdout);
    failures += !result.ok();
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}

// train

struct TrainArgs {
  std::string stage;
  std::string config;
  std::string out;
  std::string init;
  int steps = -1;
  int batch = -1;
  double lr = -1;
  std::string attention = "mixed";
  std::string rope = "native";
};

template <std::floating_point T>
int run_train(const Globals& g, const TrainArgs& a) {
  const auto stage = neo::parse_stage(a.stage);
  const auto cfg = model_config(a.config);
  auto tc = neo::default_train_config(stage);
  tc.total_steps = a.steps >= 0 ? a.steps : neo::default_stage_steps(stage);
  if (a.batch > 0) tc.batch_size = a.batch;
  if (a.lr > 0) tc.peak_lr = a.lr;
  tc.seed = g.seed + 1;
  tc.attention = neo::parse_attention_mode(a.attention);
  tc.rope = neo::parse_rope_mode(a.rope);

  neo::NativeModel<T> model(cfg, g.seed);
  if (!a.init.empty()) model.store().load(neo::read_checkpoint(a.init));
  const auto data = neo::make_toy_data({}, g.seed + 2);
  auto train_data = data.train;
  if (stage == neo::Stage::kLm) train_data.multimodal.clear();

  const double initial = neo::mixed_eval_loss(model, data, tc);
  const auto metrics = neo::train(model, train_data, tc, [&](const neo::StepMetrics& m) {
    if (m.step % 50 == 0 || m.step + 1 == tc.total_steps) {
      std::printf("step %4d  loss %.4f  lr %.3g  grad norm %.3g\n", m.step, m.loss, m.lr,
                  m.grad_norm);
      std::fflush(stdout);
    }
  });
  const double final_loss = neo::mixed_eval_loss(model, data, tc);

  fs::create_directories(a.out);
  neo::write_checkpoint(fs::path(a.out) / "model.ckpt", model.store().to_checkpoint());
  neo::write_metrics_jsonl(fs::path(a.out) / "metrics.jsonl", metrics);
  emit((fs::path(a.out) / "model.cfg").string(), neo::render_model_config(cfg));
  std::printf("%s: %d steps, held-out loss %.4f -> %.4f, wrote %s\n", neo::stage_name(stage),
              tc.total_steps, initial, final_loss, a.out.c_str());
  return EXIT_SUCCESS;
}

// ablate

struct AblateArgs {
  std::string config;
  std::string out;
  int lm_steps = -1;
  int pretrain_steps = -1;
};

template <std::floating_point T>
int run_ablate(const Globals& g, const AblateArgs& a) {
  neo::AblationOptions opts;
  opts.seed = g.seed;
  if (a.lm_steps >= 0) opts.lm_steps = a.lm_steps;
  if (a.pretrain_steps >= 0) opts.pretrain_steps = a.pretrain_steps;
  const auto report = neo::run_ablation<T>(model_config(a.config), opts, a.out);
  std::cout << report.text;
  return EXIT_SUCCESS;
}

// dump-mask

struct DumpMaskArgs {
  std::string layout;
  std::string out;
  std::string mode = "mixed";
  bool markers = false;
};

int run_dump_mask(const DumpMaskArgs& a) {
  auto layout = neo::parse_layout(a.layout);
  if (a.markers) layout = neo::insert_markers(layout);
  emit(a.out, neo::build_mask(layout, neo::parse_attention_mode(a.mode)).ascii());
  return EXIT_SUCCESS;
}

// dump-rope

struct DumpRopeArgs {
  std::string axis;
  int max_index = 0;
  std::string config;
  std::string out;
};

int run_dump_rope(const DumpRopeArgs& a) {
  if (a.max_index < 0) throw neo::ConfigError("--max-index must be non-negative");
  const auto axis = neo::parse_axis(a.axis);
  const auto cfg = model_config(a.config);
  const auto tables = neo::NativeRopeTables::build(cfg.attn, a.max_index);
  const auto& table = tables[axis];
  std::ostringstream os;
  os << "axis index freq cos sin\n";
  for (int i = 0; i <= a.max_index; ++i) {
    for (int m = 0; m < table.n_freqs(); ++m) {
      os << neo::axis_name(axis) << ' ' << i << ' ' << m << ' '
         << format_double("%.17g", table.cos(i, m)) << ' '
         << format_double("%.17g", table.sin(i, m)) << '\n';
    }
  }
  emit(a.out, os.str());
  return EXIT_SUCCESS;
}

// params

int run_params(const std::string& config, const std::string& preset) {
  neo::ModelConfig cfg;
  if (!config.empty() && !preset.empty()) {
    throw neo::ConfigError("give either --config or --preset, not both");
  }
  if (preset == "2b") {
    cfg = neo::neo_2b_like_config();
  } else if (preset == "9b") {
    cfg = neo::neo_9b_like_config();
  } else if (preset.empty() || preset == "toy") {
    cfg = model_config(config);
  } else {
    throw neo::ConfigError("unknown preset '" + preset + "' (toy, 2b, 9b)");
  }
  const auto p = neo::count_extra_params(cfg.attn);
  const long long layers = cfg.attn.n_layers();
  std::printf("per block:\n");
  std::printf("  baseline           %lld\n", p.baseline);
  std::printf("  extra projections  %lld\n", p.extra_projections);
  std::printf("  extra norms        %lld\n", p.extra_norms);
  std::printf("  extra              %lld\n", p.extra);
  std::printf("  fraction           %.6f\n", p.fraction);
  std::printf("all %lld blocks:\n", layers);
  std::printf("  baseline           %lld\n", p.baseline * layers);
  std::printf("  extra              %lld\n", p.extra * layers);
  return EXIT_SUCCESS;
}

// export-prebuffer

struct ExportArgs {
  std::string checkpoint;
  std::string config;
  std::string out;
};

template <std::floating_point T>
int run_export(const Globals& g, const ExportArgs& a) {
  neo::NativeModel<T> model(model_config(a.config), g.seed);
  model.store().load(neo::read_checkpoint(a.checkpoint));
  const auto ckpt = neo::export_prebuffer(model);
  neo::write_checkpoint(a.out, ckpt);
  std::printf("exported %zu entries to %s\n", ckpt.entries.size(), a.out.c_str());
  return EXIT_SUCCESS;
}

template <template <class> class F, class... Args>
int dispatch(int precision, Args&&... args) {
  return precision == 32 ? F<float>::run(args...) : F<double>::run(args...);
}

template <class T>
struct TrainCmd {
  static int run(const Globals& g, const TrainArgs& a) { return run_train<T>(g, a); }
};
template <class T>
struct AblateCmd {
  static int run(const Globals& g, const AblateArgs& a) { return run_ablate<T>(g, a); }
};
template <class T>
struct ExportCmd {
  static int run(const Globals& g, const ExportArgs& a) { return run_export<T>(g, a); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Native vision-language primitive: checks, training and dump tools"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for weights, data and sampling")->capture_default_str();
  app.add_option("--precision", g.precision, "Floating-point width of the model")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();

  CheckArgs check;
  auto* check_cmd = app.add_subcommand("check", "Run the oracle comparisons and acceptance criteria");
  check_cmd->add_flag("--full", check.full, "Include the training and ablation criteria");
  check_cmd->add_option("--cases", check.cases, "Random layouts per oracle pairing")
      ->check(CLI::NonNegativeNumber);
  check_cmd->add_option("--report", check.report, "Write per-case oracle reports as JSON lines");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one stage on the synthetic corpus");
  train_cmd->add_option("--stage", train.stage, "lm, pretrain, midtrain or sft")->required();
  train_cmd->add_option("--config", train.config, "Model config file (default: toy)");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--init", train.init, "Checkpoint to start from");
  train_cmd->add_option("--steps", train.steps, "Optimizer steps (default: per stage)");
  train_cmd->add_option("--batch", train.batch, "Samples per step");
  train_cmd->add_option("--lr", train.lr, "Peak learning rate");
  train_cmd->add_option("--attention", train.attention, "mixed or causal")->capture_default_str();
  train_cmd->add_option("--rope", train.rope, "native or 1d")->capture_default_str();

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the attention x RoPE ablation grid");
  ablate_cmd->add_option("--config", ablate.config, "Model config file (default: toy)");
  ablate_cmd->add_option("--out", ablate.out, "Output directory")->required();
  ablate_cmd->add_option("--lm-steps", ablate.lm_steps, "Steps of the shared language stage");
  ablate_cmd->add_option("--pretrain-steps", ablate.pretrain_steps, "Steps per grid cell");

  DumpMaskArgs mask;
  auto* mask_cmd = app.add_subcommand("dump-mask", "Print the attention mask of a layout");
  mask_cmd->add_option("--layout", mask.layout, "e.g. t:2,img:1x2,t:1")->required();
  mask_cmd->add_option("--out", mask.out, "Output file (default: stdout)");
  mask_cmd->add_option("--mode", mask.mode, "mixed or causal")->capture_default_str();
  mask_cmd->add_flag("--markers", mask.markers, "Insert <img> / </img> around visual segments");

  DumpRopeArgs rope;
  auto* rope_cmd = app.add_subcommand("dump-rope", "Print the rotary table of one axis");
  rope_cmd->add_option("--axis", rope.axis, "T, H or W")->required();
  rope_cmd->add_option("--max-index", rope.max_index, "Largest position index")->required();
  rope_cmd->add_option("--config", rope.config, "Model config file (default: toy)");
  rope_cmd->add_option("--out", rope.out, "Output file (default: stdout)");

  std::string params_config, params_preset;
  auto* params_cmd = app.add_subcommand("params", "Count the parameters added by the Q/K expansion");
  params_cmd->add_option("--config", params_config, "Model config file (default: toy)");
  params_cmd->add_option("--preset", params_preset, "toy, 2b or 9b geometry");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-prebuffer", "Extract patch embedding and pre-Buffer");
  export_cmd->add_option("--checkpoint", exp.checkpoint, "Full model checkpoint")->required();
  export_cmd->add_option("--config", exp.config, "Model config file (default: toy)");
  export_cmd->add_option("--out", exp.out, "Output checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (check_cmd->parsed()) return run_check(g, check);
    if (train_cmd->parsed()) return dispatch<TrainCmd>(g.precision, g, train);
    if (ablate_cmd->parsed()) return dispatch<AblateCmd>(g.precision, g, ablate);
    if (mask_cmd->parsed()) return run_dump_mask(mask);
    if (rope_cmd->parsed()) return run_dump_rope(rope);
    if (params_cmd->parsed()) return run_params(params_config, params_preset);
    if (export_cmd->parsed()) return dispatch<ExportCmd>(g.precision, g, exp);
  } catch (const neo::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return EXIT_FAILURE;
  }
  return EXIT_FAILURE;
}
