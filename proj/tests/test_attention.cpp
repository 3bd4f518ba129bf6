#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "neo/attention/attention.hpp"
#include "neo/checks/compare.hpp"
#include "neo/core/errors.hpp"
#include "neo/core/grad_check.hpp"
#include "neo/core/ops.hpp"
#include "neo/embedding/embedding.hpp"

using neo::AttentionMode;
using neo::Tensor;

namespace {

Tensor<double> random_input(std::size_t n, int d, neo::Rng& rng, bool requires_grad = false) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return Tensor<double>({n, static_cast<std::size_t>(d)}, std::move(v), requires_grad);
}

// Allowed key sets per query, read off the mask predicate.
std::vector<std::set<std::size_t>> allowed_sets(const neo::MaskSpec& mask) {
  std::vector<std::set<std::size_t>> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (mask.allowed(i, j)) out[i].insert(j);
    }
  }
  return out;
}

struct Layer {
  neo::NativeAttentionConfig cfg;
  neo::ParameterStore<double> store;
  neo::NativeRopeTables tables;
  neo::AttentionWeights<double> weights;

  explicit Layer(std::uint64_t seed, const neo::NativeAttentionConfig& c = {}) : cfg(c) {
    neo::Rng rng(seed);
    tables = neo::NativeRopeTables::build(cfg, 128);
    weights = neo::AttentionWeights<double>::create(store, "attn", cfg, rng, 0.2);
  }

  void randomize(std::uint64_t seed, double sd = 0.3) {
    neo::Rng rng(seed);
    neo::checks::randomize_parameters(store, rng, sd);
  }
};

}  // namespace

TEST_CASE("mixed mask over text, one image and text") {
  const auto mask = neo::build_mask(neo::parse_layout("t:2,img:1x2,t:1"));
  const std::vector<std::set<std::size_t>> want{
      {0}, {0, 1}, {0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3, 4}};
  CHECK(allowed_sets(mask) == want);
  CHECK(mask.ascii() == "10000\n11000\n11110\n11110\n11111\n");
}

TEST_CASE("pure text gives the causal mask") {
  const auto mask = neo::build_mask(neo::parse_layout("t:6"));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(mask.allowed(i, j) == (j <= i));
  }
  CHECK(mask.blocks().size() == 1);
}

TEST_CASE("video frames are bidirectional inside and causal across") {
  const auto mask = neo::build_mask(neo::parse_layout("vid:2x1x2"));
  // Frame 1 = tokens 0, 1; frame 2 = tokens 2, 3.
  CHECK(mask.allowed(0, 1));
  CHECK(mask.allowed(1, 0));
  CHECK_FALSE(mask.allowed(0, 2));
  CHECK_FALSE(mask.allowed(1, 3));
  for (std::size_t i : {2u, 3u}) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(mask.allowed(i, j));
  }
}

TEST_CASE("causal mode ignores image blocks") {
  const auto mask = neo::build_mask(neo::parse_layout("t:1,img:2x2"), AttentionMode::kCausal);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(mask.allowed(i, j) == (j <= i));
  }
}

TEST_CASE("mask builder agrees with the per-token predicate on random layouts") {
  neo::Rng rng(7);
  for (int c = 0; c < 100; ++c) {
    const auto layout = neo::checks::random_layout(rng, 64);
    for (const auto mode : {AttentionMode::kMixed, AttentionMode::kCausal}) {
      const auto mask = neo::build_mask(layout, mode);
      const auto dense = mask.dense();
      const std::size_t n = layout.total_len();
      REQUIRE(mask.size() == n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const bool want = neo::oracle::mask_allowed(layout, mode == AttentionMode::kMixed, i, j);
          CHECK(mask.allowed(i, j) == want);
          CHECK((dense[i * n + j] == 1) == want);
        }
      }
    }
  }
}

TEST_CASE("mode names parse") {
  CHECK(neo::parse_attention_mode("causal") == AttentionMode::kCausal);
  CHECK(neo::parse_attention_mode("mixed") == AttentionMode::kMixed);
  CHECK(neo::parse_rope_mode("1d") == neo::RopeMode::k1D);
  CHECK(neo::parse_rope_mode("native") == neo::RopeMode::kNative);
  CHECK_THROWS_AS(neo::parse_attention_mode("full"), neo::ConfigError);
  CHECK_THROWS_AS(neo::parse_rope_mode("2d"), neo::ConfigError);
}

TEST_CASE("height and width keys start at exactly zero") {
  Layer layer(1);
  for (int a : {1, 2}) {
    for (double v : layer.weights.wk[a].values()) CHECK(v == 0.0);
    CHECK(layer.store.at(a == 1 ? "attn.wk_h" : "attn.wk_w").init_tag == neo::InitTag::kZero);
  }
  std::set<std::string> zero;
  for (const auto& [name, entry] : layer.store.entries()) {
    if (entry.init_tag == neo::InitTag::kZero) zero.insert(name);
  }
  CHECK(zero == std::set<std::string>{"attn.wk_h", "attn.wk_w"});
  CHECK(layer.weights.wv.cols() == static_cast<std::size_t>(layer.cfg.n_kv_heads * layer.cfg.d_head_t));
  CHECK(layer.weights.wo.rows() == static_cast<std::size_t>(layer.cfg.n_q_heads * layer.cfg.d_head_t));
}

TEST_CASE("at init, dropping the height and width queries changes no logit") {
  Layer layer(2);
  neo::Rng rng(3);
  const auto layout = neo::insert_markers(neo::parse_layout("t:3,img:2x3,t:2"));
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  const auto x = random_input(layout.total_len(), layer.cfg.d_model, rng);
  auto qk = neo::project_qk(x, layer.weights, ctx, layer.cfg);
  const auto full = neo::attention_logits(qk, ctx, layer.cfg);
  for (int a : {1, 2}) qk.q[a] = Tensor<double>::zeros(qk.q[a].shape());
  CHECK(neo::attention_logits(qk, ctx, layer.cfg) == full);
}

TEST_CASE("at init, text attention equals textbook 1d causal attention") {
  Layer layer(4);
  neo::Rng rng(5);
  // Give the temporal path non-trivial weights; H/W keys stay zero.
  for (const char* name : {"attn.wq_t", "attn.wk_t", "attn.wv", "attn.wo", "attn.q_norm_t", "attn.k_norm_t",
                           "attn.wq_h", "attn.wq_w"}) {
    for (auto& v : layer.store.at(name).tensor.mutable_values()) v += rng.normal(0.0, 0.2);
  }
  const auto layout = neo::parse_layout("t:12");
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  const auto x = random_input(12, layer.cfg.d_model, rng);
  const auto got = neo::native_attention(x, layer.weights, ctx, layer.cfg);
  const auto want = neo::oracle::causal_attention_1d(neo::checks::to_matrix(x),
                                                     neo::checks::to_layer(layer.weights, layer.cfg),
                                                     neo::checks::to_geometry(layer.cfg));
  REQUIRE(got.numel() == want.data.size());
  for (std::size_t i = 0; i < want.data.size(); ++i) CHECK(std::abs(got.values()[i] - want.data[i]) < 1e-12);
}

TEST_CASE("a single token attends to itself only") {
  Layer layer(6);
  layer.randomize(7);
  neo::Rng rng(8);
  const auto layout = neo::parse_layout("t:1");
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  const auto x = random_input(1, layer.cfg.d_model, rng);
  const auto got = neo::native_attention(x, layer.weights, ctx, layer.cfg);

  const auto& cfg = layer.cfg;
  const auto v = neo::ops::matmul(x, layer.weights.wv);
  std::vector<double> heads(cfg.n_q_heads * cfg.d_head_t);
  for (int h = 0; h < cfg.n_q_heads; ++h) {
    const int g = h / cfg.group_size();
    for (int c = 0; c < cfg.d_head_t; ++c) heads[h * cfg.d_head_t + c] = v.values()[g * cfg.d_head_t + c];
  }
  for (int o = 0; o < cfg.d_model; ++o) {
    double acc = 0;
    for (std::size_t k = 0; k < heads.size(); ++k) acc += heads[k] * layer.weights.wo.at(k, o);
    CHECK(got.values()[o] == doctest::Approx(acc).epsilon(1e-13));
  }
}

TEST_CASE("native attention matches the brute-force oracle on random layouts") {
  Layer layer(9);
  neo::Rng rng(10);
  const auto geometry = neo::checks::to_geometry(layer.cfg);
  for (int c = 0; c < 25; ++c) {
    layer.randomize(100 + c);
    const auto layout = neo::checks::random_layout(rng, 48);
    const auto ctx = neo::make_context<double>(layout, layer.tables);
    const auto x = random_input(layout.total_len(), layer.cfg.d_model, rng);
    const auto got = neo::native_attention(x, layer.weights, ctx, layer.cfg);
    const auto want = neo::oracle::attention(
        neo::checks::to_matrix(x), neo::checks::to_layer(layer.weights, layer.cfg),
        neo::oracle::enumerate_positions(layout),
        [&](std::size_t i, std::size_t j) { return neo::oracle::mask_allowed(layout, true, i, j); },
        geometry);
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < want.data.size(); ++i) {
      worst = std::max(worst, std::abs(got.values()[i] - want.data[i]));
      scale = std::max(scale, std::abs(want.data[i]));
    }
    CHECK(worst <= 1e-10 * scale);
  }
}

TEST_CASE("forbidden keys never influence a query row") {
  Layer layer(11);
  layer.randomize(12);
  neo::Rng rng(13);
  for (int c = 0; c < 10; ++c) {
    const auto layout = neo::checks::random_layout(rng, 32);
    const std::size_t n = layout.total_len();
    const auto ctx = neo::make_context<double>(layout, layer.tables);
    const auto x = random_input(n, layer.cfg.d_model, rng);
    const auto base = neo::native_attention(x, layer.weights, ctx, layer.cfg);
    for (std::size_t j = 0; j < n; ++j) {
      auto values = std::vector<double>(x.values().begin(), x.values().end());
      for (int k = 0; k < layer.cfg.d_model; ++k) values[j * layer.cfg.d_model + k] += 1.5;
      const Tensor<double> xp(x.shape(), std::move(values));
      const auto out = neo::native_attention(xp, layer.weights, ctx, layer.cfg);
      bool changed_allowed = false;
      for (std::size_t i = 0; i < n; ++i) {
        bool same = true;
        for (int k = 0; k < layer.cfg.d_model; ++k) {
          same = same && out.at(i, k) == base.at(i, k);
        }
        if (!ctx.mask.allowed(i, j)) CHECK(same);
        if (i != j && ctx.mask.allowed(i, j)) changed_allowed = changed_allowed || !same;
      }
      if (j == 0 && n > 1) CHECK(changed_allowed);
    }
  }
}

TEST_CASE("first token of a sequence degenerates to self attention") {
  Layer layer(14);
  layer.randomize(15);
  neo::Rng rng(16);
  const auto layout = neo::parse_layout("t:5");
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  const auto x = random_input(5, layer.cfg.d_model, rng);
  const auto got = neo::native_attention(x, layer.weights, ctx, layer.cfg);
  const auto alone = neo::native_attention(neo::ops::slice_rows(x, 0, 1), layer.weights,
                                           neo::make_context<double>(neo::parse_layout("t:1"), layer.tables),
                                           layer.cfg);
  for (int k = 0; k < layer.cfg.d_model; ++k) CHECK(got.at(0, k) == alone.at(0, k));
}

TEST_CASE("attention gradients pass the finite-difference check") {
  Layer layer(17);
  layer.randomize(18, 0.3);
  neo::Rng rng(19);
  const auto layout = neo::parse_layout("t:2,img:1x2,t:2");
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  auto x = random_input(6, layer.cfg.d_model, rng, true);
  std::vector<double> w(6 * layer.cfg.d_model);
  for (auto& v : w) v = rng.normal(0.0, 1.0);

  // Finite differences run on a long double twin of the layer to stay clear of
  // the double roundoff floor.
  neo::ParameterStore<long double> twin_store;
  neo::Rng twin_rng(0);
  const auto twin_weights =
      neo::AttentionWeights<long double>::create(twin_store, "attn", layer.cfg, twin_rng, 0.2);
  const auto twin_ctx = neo::make_context<long double>(layout, layer.tables);
  auto twin_x = Tensor<long double>::zeros({6, static_cast<std::size_t>(layer.cfg.d_model)});
  std::vector<long double> twin_w(w.begin(), w.end());

  std::vector<neo::GradCheckParam> params{{"x", x}};
  std::vector<Tensor<long double>> twin_params{twin_x};
  for (const auto& [name, entry] : layer.store.entries()) {
    params.push_back({name, entry.tensor});
    twin_params.push_back(twin_store.at(name).tensor);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto src = params[p].tensor.values();
    std::copy(src.begin(), src.end(), twin_params[p].mutable_values().begin());
  }
  const auto probe = [&](std::size_t param, std::size_t index, long double value) {
    auto values = twin_params[param].mutable_values();
    const long double original = values[index];
    values[index] = value;
    neo::NoGradGuard guard;
    const long double loss =
        neo::ops::weighted_sum(neo::native_attention(twin_x, twin_weights, twin_ctx, layer.cfg),
                               std::span<const long double>(twin_w))
            .item();
    values[index] = original;
    return loss;
  };

  neo::GradCheckOptions opts;
  opts.eps = 1e-5;
  const auto result = neo::grad_check(
      [&] {
        return neo::ops::weighted_sum(neo::native_attention(x, layer.weights, ctx, layer.cfg),
                                      std::span<const double>(w));
      },
      params, opts, probe);
  INFO("worst " << result.worst_param << "[" << result.worst_index << "] analytic "
                 << result.worst_analytic << " numeric " << result.worst_numeric);
  CHECK(result.max_rel_error < 1e-5);
}

TEST_CASE("non-finite inputs are reported with head and tokens") {
  Layer layer(20);
  neo::Rng rng(21);
  const auto layout = neo::parse_layout("t:3");
  const auto ctx = neo::make_context<double>(layout, layer.tables);
  auto x = random_input(3, layer.cfg.d_model, rng);
  x.mutable_values()[layer.cfg.d_model] = std::numeric_limits<double>::infinity();
  try {
    neo::native_attention(x, layer.weights, ctx, layer.cfg);
    FAIL("expected a NumericError");
  } catch (const neo::NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("head") != std::string::npos);
    CHECK(msg.find("token") != std::string::npos);
  }
}

TEST_CASE("extra parameter count for the toy geometry") {
  neo::NativeAttentionConfig cfg;
  cfg.d_model = 64;
  cfg.n_q_heads = 4;
  cfg.n_kv_heads = 2;
  cfg.d_head_t = 16;
  cfg.d_head_h = cfg.d_head_w = 8;
  const auto e = neo::count_extra_params(cfg);
  CHECK(e.extra_projections == 4096 + 2048);
  CHECK(e.extra_norms == 2 * (8 + 8));
  CHECK(e.extra == e.extra_projections + e.extra_norms);
  const auto tally = neo::oracle::tally_params(64, 4, 2, 16, 8, 8, cfg.ffn_hidden);
  CHECK(e.baseline == tally.baseline);
  CHECK(e.extra_projections == tally.extra_projections);
  CHECK(e.extra_norms == tally.extra_norms);
  CHECK(e.fraction == static_cast<double>(e.extra) / static_cast<double>(e.baseline));

  cfg.d_head_h = cfg.d_head_w = 0;
  const auto none = neo::count_extra_params(cfg);
  CHECK(none.extra == 0);
  CHECK(none.fraction == 0.0);
}

TEST_CASE("extra parameter count matches the store for random geometries") {
  neo::Rng rng(22);
  for (int c = 0; c < 20; ++c) {
    neo::NativeAttentionConfig cfg;
    cfg.n_kv_heads = rng.uniform_int(1, 3);
    cfg.n_q_heads = cfg.n_kv_heads * rng.uniform_int(1, 3);
    cfg.d_model = 8 * rng.uniform_int(1, 6);
    cfg.d_head_t = 2 * rng.uniform_int(1, 8);
    cfg.d_head_h = 2 * rng.uniform_int(0, 4);
    cfg.d_head_w = 2 * rng.uniform_int(0, 4);
    neo::ParameterStore<double> store;
    neo::Rng init(c);
    neo::AttentionWeights<double>::create(store, "a", cfg, init, 0.02);
    long long hw = 0;
    for (const auto& [name, entry] : store.entries()) {
      const char axis = name.back();
      if (axis == 'h' || axis == 'w') hw += static_cast<long long>(entry.tensor.numel());
    }
    CHECK(neo::count_extra_params(cfg).extra == hw);
  }
}
