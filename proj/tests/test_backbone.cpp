#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "neo/backbone/backbone.hpp"
#include "neo/checks/compare.hpp"
#include "neo/core/errors.hpp"
#include "neo/core/ops.hpp"
#include "neo/training/train.hpp"

using neo::Stage;
using neo::Tensor;

namespace {

neo::Image random_image(int h, int w, neo::Rng& rng) {
  neo::Image img = neo::Image::filled(h, w, 3, 0.0f);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return img;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::map<std::string, std::vector<double>> snapshot(const neo::ParameterStore<double>& store) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, entry] : store.entries()) {
    out[name].assign(entry.tensor.values().begin(), entry.tensor.values().end());
  }
  return out;
}

}  // namespace

TEST_CASE("toy model gives finite logits on a nine-token mixed layout") {
  const neo::NativeModel<double> model(neo::toy_config(), 1);
  neo::Rng rng(2);
  const auto seq = model.embed(neo::parse_layout("t:3,img:2x2"), {{1, 10, 11}}, {{{random_image(64, 64, rng)}}});
  REQUIRE(seq.embeddings.rows() == 9u);
  const auto logits = model.forward(seq.embeddings, model.context(seq.layout));
  CHECK(logits.rows() == 9u);
  CHECK(logits.cols() == 64u);
  for (double v : logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("a model without pre-Buffer layers still runs") {
  auto cfg = neo::toy_config();
  cfg.attn.n_prebuffer_layers = 0;
  const neo::NativeModel<double> model(cfg, 3);
  CHECK(model.prebuffer().empty());
  const auto seq = model.embed(neo::parse_layout("t:4"), {{1, 5, 6, 2}}, {});
  const auto ctx = model.context(seq.layout);
  CHECK(model.prebuffer_hidden(seq.embeddings, ctx).values().size() == seq.embeddings.values().size());
  const auto logits = model.forward(seq.embeddings, ctx);
  CHECK(logits.rows() == 4u);
  for (const auto& [name, entry] : model.store().entries()) CHECK_FALSE(starts_with(name, "prebuffer."));
}

TEST_CASE("full-size presets record the pre-Buffer depth") {
  CHECK(neo::neo_2b_like_config().attn.n_prebuffer_layers == 12);
  CHECK(neo::neo_9b_like_config().attn.n_prebuffer_layers == 6);
  for (const auto& cfg : {neo::neo_2b_like_config(), neo::neo_9b_like_config()}) {
    CHECK(cfg.attn.beta_t == 1e6);
    CHECK(cfg.attn.beta_h == 1e4);
    CHECK(cfg.attn.beta_w == 1e4);
    CHECK(cfg.attn.d_head_h + cfg.attn.d_head_w == cfg.attn.d_head_t);
  }
}

TEST_CASE("block is pre-norm attention then SwiGLU with residuals") {
  const auto cfg = neo::toy_config();
  neo::NativeModel<double> model(cfg, 4);
  neo::Rng rng(5);
  neo::checks::randomize_parameters(model.store(), rng, 0.2);
  // With the H/W queries silenced a text block is the textbook 1d block.
  for (const char* name : {"postllm.0.attn.wq_h", "postllm.0.attn.wq_w"}) {
    for (auto& v : model.store().at(name).tensor.mutable_values()) v = 0;
  }
  const auto ctx = model.context(neo::parse_layout("t:7"));
  std::vector<double> xs(7 * 64);
  for (auto& v : xs) v = rng.normal(0.0, 1.0);
  const Tensor<double> x({7, 64}, xs);
  const auto& block = model.postllm()[0];
  const auto got = block.forward(x, ctx, cfg.attn);
  const auto want = neo::oracle::causal_block_1d(neo::checks::to_matrix(x), neo::checks::to_block(block, cfg.attn),
                                                 neo::checks::to_geometry(cfg.attn));
  REQUIRE(got.values().size() == want.data.size());
  for (std::size_t i = 0; i < want.data.size(); ++i) CHECK(std::abs(got.values()[i] - want.data[i]) < 1e-11);
}

TEST_CASE("pretrain policy selects exactly the new parameters") {
  neo::NativeModel<double> model(neo::toy_config(), 6);
  const auto names = neo::apply_stage_policy(model.store(), Stage::kPretrain);
  std::set<std::string> want;
  for (const auto& [name, entry] : model.store().entries()) {
    if (starts_with(name, "patch_embed.") || starts_with(name, "prebuffer.")) want.insert(name);
  }
  for (int i = 0; i < 2; ++i) {
    for (const char* stem : {"wq_", "wk_", "q_norm_", "k_norm_"}) {
      for (const char* axis : {"h", "w"}) {
        want.insert("postllm." + std::to_string(i) + ".attn." + stem + axis);
      }
    }
  }
  CHECK(names == want);
  CHECK(model.store().trainable_names() == want);
  CHECK_FALSE(names.count("postllm.0.attn.wv"));
  CHECK_FALSE(names.count("postllm.1.attn.wq_t"));
  CHECK_FALSE(names.count("embed.tokens"));
  CHECK_FALSE(names.count("lm_head"));
}

TEST_CASE("midtrain and sft train everything; lm leaves the new parts alone") {
  neo::NativeModel<double> model(neo::toy_config(), 7);
  std::set<std::string> all;
  for (const auto& [name, entry] : model.store().entries()) all.insert(name);
  CHECK(neo::apply_stage_policy(model.store(), Stage::kSft) == all);
  CHECK(neo::apply_stage_policy(model.store(), Stage::kMidtrain) == all);

  const auto lm = neo::apply_stage_policy(model.store(), Stage::kLm);
  for (const auto& name : all) {
    const bool hw_qk = starts_with(name, "postllm.") && (name.back() == 'h' || name.back() == 'w');
    const bool want = name == "embed.tokens" || name == "final_norm" || name == "lm_head" ||
                      (starts_with(name, "postllm.") && !hw_qk);
    CHECK_MESSAGE(lm.count(name) == static_cast<std::size_t>(want), name);
  }
}

TEST_CASE("stage names parse and unknown stages are rejected") {
  CHECK(neo::parse_stage("lm") == Stage::kLm);
  CHECK(neo::parse_stage("pretrain") == Stage::kPretrain);
  CHECK(neo::parse_stage("midtrain") == Stage::kMidtrain);
  CHECK(neo::parse_stage("sft") == Stage::kSft);
  CHECK(std::string(neo::stage_name(Stage::kMidtrain)) == "midtrain");
  CHECK_THROWS_AS(neo::parse_stage("stage4"), neo::ConfigError);
}

TEST_CASE("text-only pretrain gradients on post-LLM H/W queries are exactly zero at init") {
  neo::NativeModel<double> model(neo::toy_config(), 8);
  neo::apply_stage_policy(model.store(), Stage::kPretrain);
  const auto text = neo::gen_text_corpus(4, 2, 2, 4, 9);
  for (const auto& sample : text) {
    model.store().zero_grad();
    neo::sample_loss(model, sample, Stage::kPretrain, neo::AttentionMode::kMixed, neo::RopeMode::kNative)
        .backward();
    for (int i = 0; i < 2; ++i) {
      for (const char* axis : {"h", "w"}) {
        const auto g = model.store().at("postllm." + std::to_string(i) + ".attn.wq_" + axis).tensor.grad();
        for (double v : g) CHECK(v == 0.0);
      }
    }
    // The temporal queries of the pre-Buffer do learn from text.
    double norm = 0;
    for (double v : model.store().at("prebuffer.0.attn.wq_t").tensor.grad()) norm += v * v;
    CHECK(norm > 0);
  }
  model.store().zero_grad();
}

TEST_CASE("pretrain steps leave frozen tensors bit-identical") {
  neo::NativeModel<double> model(neo::toy_config(), 10);
  neo::ToyDataOptions opts;
  opts.multimodal_samples = 8;
  opts.text_samples = 8;
  opts.eval_samples = 2;
  const auto data = neo::make_toy_data(opts, 11);
  const auto before = snapshot(model.store());
  auto cfg = neo::default_train_config(Stage::kPretrain);
  cfg.total_steps = 3;
  cfg.batch_size = 2;
  neo::train(model, data.train, cfg);
  const auto after = snapshot(model.store());
  const auto trainable = model.store().trainable_names();
  int moved = 0;
  for (const auto& [name, values] : before) {
    if (trainable.count(name)) {
      moved += values != after.at(name);
    } else {
      CHECK_MESSAGE(values == after.at(name), name);
    }
  }
  CHECK(moved > 0);
}

TEST_CASE("permuting image tokens with their positions leaves later text unchanged") {
  const auto cfg = neo::toy_config();
  neo::NativeModel<double> model(cfg, 12);
  neo::Rng rng(13);
  neo::checks::randomize_parameters(model.store(), rng, 0.2);
  const auto layout = neo::insert_markers(neo::parse_layout("t:2,img:2x2,t:3"));
  const std::size_t n = layout.total_len();
  std::vector<double> xs(n * 64);
  for (auto& v : xs) v = rng.normal(0.0, 1.0);
  const Tensor<double> x({n, 64}, xs);
  const auto positions = neo::allocate_positions(layout);
  const auto mask = neo::build_mask(layout);
  const auto base = model.forward(x, neo::make_context<double>(positions, mask, model.rope_tables()));

  // Image tokens are rows 3..6; apply the permutation (3 6 4 5).
  const std::vector<std::size_t> perm{0, 1, 2, 6, 3, 4, 5, 7, 8, 9, 10};
  std::vector<double> px(xs.size());
  auto ppos = positions;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(xs.begin() + perm[i] * 64, 64, px.begin() + i * 64);
    ppos[i] = positions[perm[i]];
  }
  const Tensor<double> xp({n, 64}, px);
  const auto moved = model.forward(xp, neo::make_context<double>(ppos, mask, model.rope_tables()));
  for (std::size_t i = 7; i < n; ++i) {
    for (int v = 0; v < 64; ++v) CHECK(moved.at(i, v) == doctest::Approx(base.at(i, v)).epsilon(1e-10));
  }

  // Moving the pixels without their positions is visible downstream.
  const auto wrong = model.forward(xp, neo::make_context<double>(positions, mask, model.rope_tables()));
  double diff = 0;
  for (int v = 0; v < 64; ++v) diff = std::max(diff, std::abs(wrong.at(n - 1, v) - base.at(n - 1, v)));
  CHECK(diff > 1e-8);
}

TEST_CASE("pre-Buffer export and import reproduce hidden states exactly") {
  const auto cfg = neo::toy_config();
  neo::NativeModel<double> source(cfg, 14);
  neo::Rng rng(15);
  neo::checks::randomize_parameters(source.store(), rng, 0.1);
  const auto ckpt = neo::export_prebuffer(source);

  std::set<int> groups;
  for (const auto& e : ckpt.entries) {
    CHECK(neo::is_prebuffer_asset(e.name));
    if (starts_with(e.name, "prebuffer.")) groups.insert(std::stoi(e.name.substr(10)));
  }
  CHECK(groups == std::set<int>{0, 1});

  neo::NativeModel<double> target(cfg, 99);
  neo::import_prebuffer(target, ckpt);
  const auto seq = source.embed(neo::parse_layout("t:2,img:1x2"), {{1, 9}}, {{{random_image(32, 64, rng)}}});
  const auto seq2 = target.embed(neo::parse_layout("t:2,img:1x2"), {{1, 9}}, {{{random_image(32, 64, rng)}}});
  const auto ctx = source.context(seq.layout);
  const auto a = source.prebuffer_hidden(seq.embeddings, ctx);
  const auto b = target.prebuffer_hidden(seq.embeddings, ctx);
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));
  // Word embeddings are not part of the asset.
  CHECK(seq.embeddings.at(0, 0) != seq2.embeddings.at(0, 0));
}

TEST_CASE("pre-Buffer import rejects foreign shapes and names") {
  const neo::NativeModel<double> source(neo::toy_config(), 16);
  auto wide = neo::toy_config();
  wide.attn.d_model = 96;
  neo::NativeModel<double> target(wide, 17);
  try {
    neo::import_prebuffer(target, neo::export_prebuffer(source));
    FAIL("expected a ShapeError");
  } catch (const neo::ShapeError& e) {
    CHECK(std::string(e.what()).find("patch_embed.conv") != std::string::npos);
  }

  neo::NativeModel<double> same(neo::toy_config(), 18);
  auto ckpt = neo::export_prebuffer(source);
  ckpt.entries.push_back(source.store().to_checkpoint([](const std::string& n) { return n == "lm_head"; })
                             .entries.front());
  CHECK_THROWS_AS(neo::import_prebuffer(same, ckpt), neo::ConfigError);
}
