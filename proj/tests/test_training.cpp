#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "neo/core/errors.hpp"
#include "neo/embedding/vocab.hpp"
#include "neo/training/ablation.hpp"
#include "neo/training/train.hpp"

using neo::Role;
using neo::Stage;
using neo::Tensor;

namespace {

neo::ToyData tiny_data(std::uint64_t seed) {
  neo::ToyDataOptions opts;
  opts.multimodal_samples = 6;
  opts.text_samples = 6;
  opts.eval_samples = 2;
  return neo::make_toy_data(opts, seed);
}

// Mean of -log softmax(row)[target] over rows with a target, by hand.
double manual_ce(const std::vector<double>& logits, std::size_t cols, const std::vector<int>& targets) {
  double total = 0;
  int count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, logits[r * cols + c]);
    double z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits[r * cols + c] - mx);
    total += mx + std::log(z) - logits[r * cols + targets[r]];
    ++count;
  }
  return total / count;
}

}  // namespace

TEST_CASE("stage defaults") {
  const auto pre = neo::default_train_config(Stage::kPretrain);
  CHECK(pre.peak_lr == 8e-4);
  CHECK(pre.min_lr_ratio == 0.05);
  CHECK(pre.text_only_ratio == 0.3);
  const auto mid = neo::default_train_config(Stage::kMidtrain);
  CHECK(mid.peak_lr == 4e-5);
  CHECK(mid.text_only_ratio == 0.3);
  const auto sft = neo::default_train_config(Stage::kSft);
  CHECK(sft.peak_lr == 5e-5);
  for (const auto& c : {pre, mid, sft}) {
    CHECK(c.warmup_ratio == 0.01);
    CHECK(c.weight_decay == 0.01);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.999);
    CHECK(c.adam_eps == 1e-8);
  }
  CHECK(neo::default_train_config(Stage::kLm).text_only_ratio == 1.0);
}

TEST_CASE("learning rate warms up then decays to the floor") {
  auto cfg = neo::default_train_config(Stage::kPretrain);
  cfg.total_steps = 1000;
  const int warm = neo::warmup_steps(cfg);
  CHECK(warm == 10);
  CHECK(neo::lr_at(0, cfg) == 0.0);
  CHECK(neo::lr_at(1, cfg) == doctest::Approx(cfg.peak_lr / warm).epsilon(1e-15));
  CHECK(neo::lr_at(warm, cfg) == cfg.peak_lr);
  CHECK(neo::lr_at(cfg.total_steps, cfg) == doctest::Approx(0.05 * cfg.peak_lr).epsilon(1e-12));
  const int mid = (warm + cfg.total_steps) / 2;
  CHECK(neo::lr_at(mid, cfg) == doctest::Approx(cfg.peak_lr * (0.05 + 0.95 * 0.5)).epsilon(1e-12));
  for (int s = warm; s < cfg.total_steps; ++s) CHECK(neo::lr_at(s + 1, cfg) <= neo::lr_at(s, cfg));

  cfg.total_steps = 50;
  CHECK(neo::warmup_steps(cfg) == 1);
}

TEST_CASE("next-token targets on pure text are the shifted ids") {
  const std::vector<int> ids{1, 7, 8, 9, 2};
  const std::vector<Role> roles(5, Role::kText);
  CHECK(neo::ntp_targets(ids, roles) == std::vector<int>{7, 8, 9, 2, -1});
}

TEST_CASE("next-token targets skip visual tokens") {
  // <bos> a b <img> v v v v </img>
  const std::vector<int> ids{1, 7, 8, 3, -1, -1, -1, -1, 4};
  std::vector<Role> roles(9, Role::kText);
  for (int i = 4; i < 8; ++i) roles[i] = Role::kVisual;
  CHECK(neo::ntp_targets(ids, roles) == std::vector<int>{7, 8, 3, -1, -1, -1, -1, 4, -1});
}

TEST_CASE("pure-text loss is the mean shifted cross-entropy") {
  neo::Rng rng(1);
  const std::size_t n = 6, vocab = 10;
  std::vector<double> logits(n * vocab);
  for (auto& v : logits) v = rng.normal(0.0, 2.0);
  const std::vector<int> ids{1, 5, 6, 7, 8, 2};
  const std::vector<Role> roles(n, Role::kText);
  const auto loss = neo::ntp_loss(Tensor<double>({n, vocab}, logits), ids, roles);
  CHECK(loss.item() == doctest::Approx(manual_ce(logits, vocab, {5, 6, 7, 8, 2, -1})).epsilon(1e-13));
}

TEST_CASE("confident correct predictions drive the loss to zero") {
  const std::vector<int> ids{1, 5, 6, 2};
  const std::vector<Role> roles(4, Role::kText);
  std::vector<double> logits(4 * 8, 0.0);
  const int next[] = {5, 6, 2};
  for (int r = 0; r < 3; ++r) logits[r * 8 + next[r]] = 60.0;
  const auto loss = neo::ntp_loss(Tensor<double>({4, 8}, logits), ids, roles);
  CHECK(loss.item() >= 0.0);
  CHECK(loss.item() < 1e-20);
}

TEST_CASE("positions without a text target receive no gradient") {
  neo::Rng rng(2);
  const std::size_t n = 9, vocab = 8;
  std::vector<double> values(n * vocab);
  for (auto& v : values) v = rng.normal(0.0, 1.0);
  Tensor<double> logits({n, vocab}, values, true);
  const std::vector<int> ids{1, 5, 6, 3, -1, -1, -1, -1, 4};
  std::vector<Role> roles(n, Role::kText);
  for (int i = 4; i < 8; ++i) roles[i] = Role::kVisual;
  neo::ntp_loss(logits, ids, roles).backward();
  const auto g = logits.grad();
  for (std::size_t r : {3u, 4u, 5u, 6u, 8u}) {
    for (std::size_t c = 0; c < vocab; ++c) CHECK(g[r * vocab + c] == 0.0);
  }
  double live = 0;
  for (std::size_t c = 0; c < vocab; ++c) live += std::abs(g[7 * vocab + c]);
  CHECK(live > 0);

  const std::vector<int> only_visual_next{3, -1};
  const std::vector<Role> r2{Role::kText, Role::kVisual};
  CHECK_THROWS_AS(neo::ntp_loss(Tensor<double>::zeros({2, vocab}), only_visual_next, r2), neo::ConfigError);
}

TEST_CASE("corpus is a deterministic function of the seed") {
  const auto a = neo::gen_corpus(2, 2, 2, 4, 7);
  const auto b = neo::gen_corpus(2, 2, 2, 4, 7);
  REQUIRE(a.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(a[i].cells == b[i].cells);
    CHECK(a[i].caption == b[i].caption);
    CHECK(a[i].image.data == b[i].image.data);
  }
  const auto c = neo::gen_corpus(8, 2, 2, 4, 8);
  bool differs = false;
  for (int i = 0; i < 2; ++i) differs = differs || c[i].cells != a[i].cells;
  CHECK(differs);
}

TEST_CASE("captions have a fixed length and follow the grid") {
  const auto& vocab = neo::Vocabulary::toy();
  for (const auto& s : neo::gen_corpus(16, 2, 2, 4, 9)) {
    CHECK(s.kind == neo::SampleKind::kMultimodal);
    CHECK(s.caption.size() == 4 * 3 + 1u);
    CHECK(s.caption == neo::grid_caption(2, 2, s.cells));
    for (int cell = 0; cell < 4; ++cell) {
      CHECK(s.cells[cell] < 4);
      CHECK(s.caption[cell * 3] == vocab.number_id(cell / 2));
      CHECK(s.caption[cell * 3 + 1] == vocab.number_id(cell % 2));
      CHECK(s.caption[cell * 3 + 2] == vocab.color_id(s.cells[cell]));
      // The cell's pixels carry its palette colour.
      const auto rgb = neo::palette_rgb(s.cells[cell]);
      for (int ch = 0; ch < 3; ++ch) CHECK(s.image.at(ch, (cell / 2) * 32 + 5, (cell % 2) * 32 + 7) == rgb[ch]);
    }
    CHECK(s.caption.back() == neo::Vocabulary::kEos);
    CHECK(s.image.height == 64);
    CHECK(s.image.width == 64);
    CHECK(neo::render_layout(s.layout()) == "t:1,img:2x2,t:13");
  }
  CHECK_THROWS_AS(neo::gen_corpus(1, 2, 2, 17, 0), neo::ConfigError);
}

TEST_CASE("text-only samples carry no image") {
  for (const auto& s : neo::gen_text_corpus(20, 2, 2, 4, 10)) {
    CHECK(s.kind == neo::SampleKind::kTextOnly);
    CHECK(s.image.data.empty());
    CHECK(s.visuals().empty());
    REQUIRE(s.layout().segments.size() == 1);
    CHECK(s.caption.front() == neo::Vocabulary::kBos);
    CHECK(s.caption.back() == neo::Vocabulary::kEos);
  }
}

TEST_CASE("a text-only ratio of one never draws an image") {
  const auto data = tiny_data(3);
  auto cfg = neo::default_train_config(Stage::kPretrain);
  cfg.text_only_ratio = 1.0;
  cfg.batch_size = 16;
  neo::Rng rng(4);
  for (int step = 0; step < 20; ++step) {
    for (const auto* s : neo::draw_batch(data.train, cfg, rng)) CHECK(s->kind == neo::SampleKind::kTextOnly);
  }
  cfg.text_only_ratio = 0.0;
  for (const auto* s : neo::draw_batch(data.train, cfg, rng)) CHECK(s->kind == neo::SampleKind::kMultimodal);
}

TEST_CASE("corpus files round-trip") {
  auto samples = neo::gen_corpus(3, 1, 2, 4, 11);
  const auto text = neo::gen_text_corpus(2, 1, 2, 4, 12);
  samples.insert(samples.end(), text.begin(), text.end());
  const auto path = std::filesystem::temp_directory_path() / "neo_test_corpus.bin";
  neo::write_corpus(path, samples);
  const auto back = neo::read_corpus(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].kind == samples[i].kind);
    CHECK(back[i].rows == samples[i].rows);
    CHECK(back[i].cols == samples[i].cols);
    CHECK(back[i].cells == samples[i].cells);
    CHECK(back[i].caption == samples[i].caption);
    CHECK(back[i].image.data == samples[i].image.data);
  }
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACORP";
  }
  CHECK_THROWS_AS(neo::read_corpus(path), neo::FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("AdamW first step is sign-like with decoupled decay") {
  neo::ParameterStore<double> store;
  neo::Rng rng(13);
  auto w = store.create("w", {1, 3}, neo::InitTag::kStandard, rng, 1.0);
  auto n = store.create("norm", {2}, neo::InitTag::kOnes, rng, 1.0);
  const std::vector<double> w0(w.values().begin(), w.values().end());
  const std::vector<double> gw{0.5, -2.0, 1e-3};
  std::copy(gw.begin(), gw.end(), w.grad_buffer().begin());
  n.grad_buffer()[0] = 1.0;
  n.grad_buffer()[1] = -1.0;

  auto cfg = neo::default_train_config(Stage::kSft);
  const double lr = 0.1;
  neo::AdamW<double> opt(cfg);
  opt.step(store, lr);
  for (int i = 0; i < 3; ++i) {
    const double decayed = w0[i] - lr * cfg.weight_decay * w0[i];
    const double want = decayed - lr * gw[i] / (std::abs(gw[i]) + cfg.adam_eps);
    CHECK(w.values()[i] == doctest::Approx(want).epsilon(1e-12));
  }
  // Norm scales are not decayed.
  CHECK(n.values()[0] == doctest::Approx(1.0 - lr * 1.0 / (1.0 + cfg.adam_eps)).epsilon(1e-12));
  CHECK(n.values()[1] == doctest::Approx(1.0 + lr * 1.0 / (1.0 + cfg.adam_eps)).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("gradient clipping rescales the global norm") {
  neo::ParameterStore<double> store;
  neo::Rng rng(14);
  auto a = store.create("a", {2}, neo::InitTag::kStandard, rng, 1.0);
  auto b = store.create("b", {1}, neo::InitTag::kStandard, rng, 1.0);
  auto frozen = store.create("c", {1}, neo::InitTag::kStandard, rng, 1.0);
  store.set_trainable("c", false);
  a.grad_buffer()[0] = 3.0;
  a.grad_buffer()[1] = 0.0;
  b.grad_buffer()[0] = 4.0;
  frozen.grad_buffer()[0] = 100.0;
  CHECK(neo::clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
  CHECK(neo::clip_grad_norm(store, 1.0) == doctest::Approx(1.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
}

TEST_CASE("zero steps leave the checkpoint identical to init") {
  neo::NativeModel<double> model(neo::toy_config(), 15);
  neo::apply_stage_policy(model.store(), Stage::kPretrain);
  const auto before = neo::encode_checkpoint(model.store().to_checkpoint());
  auto cfg = neo::default_train_config(Stage::kPretrain);
  cfg.total_steps = 0;
  CHECK(neo::train(model, tiny_data(16).train, cfg).empty());
  CHECK(neo::encode_checkpoint(model.store().to_checkpoint()) == before);
}

TEST_CASE("two runs with the same seed give bit-identical metrics") {
  auto run = [] {
    neo::NativeModel<double> model(neo::toy_config(), 17);
    auto cfg = neo::default_train_config(Stage::kPretrain);
    cfg.total_steps = 3;
    cfg.batch_size = 2;
    cfg.seed = 18;
    const auto metrics = neo::train(model, tiny_data(19).train, cfg);
    return std::make_pair(metrics, neo::encode_checkpoint(model.store().to_checkpoint()));
  };
  const auto [m1, c1] = run();
  const auto [m2, c2] = run();
  REQUIRE(m1.size() == 3);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].loss == m2[i].loss);
    CHECK(m1[i].grad_norm == m2[i].grad_norm);
    CHECK(m1[i].lr == m2[i].lr);
  }
  CHECK(c1 == c2);
}

TEST_CASE("a non-finite loss aborts with the step index") {
  neo::NativeModel<double> model(neo::toy_config(), 20);
  model.store().at("lm_head").tensor.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = neo::default_train_config(Stage::kSft);
  cfg.total_steps = 2;
  cfg.batch_size = 1;
  try {
    neo::train(model, tiny_data(21).train, cfg);
    FAIL("expected a NumericError");
  } catch (const neo::NumericError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("metrics are written one JSON object per line") {
  const std::vector<neo::StepMetrics> metrics{{0, 4.5, 1e-4, 2.0}, {1, 4.25, 2e-4, 1.5}};
  const auto path = std::filesystem::temp_directory_path() / "neo_test_metrics.jsonl";
  neo::write_metrics_jsonl(path, metrics);
  std::ifstream in(path);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("step").get<int>() == metrics[count].step);
    CHECK(j.at("loss").get<double>() == metrics[count].loss);
    CHECK(j.at("lr").get<double>() == metrics[count].lr);
    CHECK(j.at("grad_norm").get<double>() == metrics[count].grad_norm);
    ++count;
  }
  CHECK(count == 2);
  std::filesystem::remove(path);
}

TEST_CASE("ablation harness writes one metrics file per combination") {
  neo::AblationOptions opts;
  opts.lm_steps = 2;
  opts.pretrain_steps = 2;
  opts.batch_size = 1;
  opts.data.multimodal_samples = 4;
  opts.data.text_samples = 4;
  opts.data.eval_samples = 1;
  const auto dir = std::filesystem::temp_directory_path() / "neo_test_ablation";
  std::filesystem::remove_all(dir);
  const auto report = neo::run_ablation<double>(neo::toy_config(), opts, dir);
  CHECK(report.rows.size() == 4);
  for (const char* mode : {"causal", "mixed"}) {
    for (const char* rope : {"1d", "native"}) {
      CHECK(std::filesystem::exists(dir / (std::string("metrics_") + mode + "_" + rope + ".jsonl")));
    }
  }
  CHECK(std::filesystem::exists(dir / "report.txt"));
  CHECK(std::filesystem::exists(dir / "report.jsonl"));
  std::filesystem::remove_all(dir);
}
