#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "neo/core/errors.hpp"
#include "neo/embedding/embedding.hpp"
#include "neo/embedding/vocab.hpp"

namespace {

neo::Image random_image(int h, int w, neo::Rng& rng) {
  neo::Image img = neo::Image::filled(h, w, 3, 0.0f);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return img;
}

// Conv1 -> exact GELU -> PE -> Conv2 as nested loops over pixels.
std::vector<double> direct_patch_embed(const neo::Image& img, const neo::ParameterStore<double>& store,
                                       const neo::ModelConfig& cfg) {
  const int k1 = cfg.patch.conv1_kernel, k2 = cfg.patch.conv2_kernel;
  const int inner = cfg.inner_dim(), d = cfg.attn.d_model, ch = img.channels;
  const int h1 = img.height / k1, w1 = img.width / k1;
  const auto w_1 = store.at("patch_embed.conv1.weight").tensor.values();
  const auto b_1 = store.at("patch_embed.conv1.bias").tensor.values();
  const auto w_2 = store.at("patch_embed.conv2.weight").tensor.values();
  const auto b_2 = store.at("patch_embed.conv2.bias").tensor.values();
  const auto pe = neo::sinusoidal_pe_2d(h1, w1, inner);

  std::vector<double> mid(static_cast<std::size_t>(h1) * w1 * inner);
  for (int r = 0; r < h1; ++r) {
    for (int c = 0; c < w1; ++c) {
      for (int o = 0; o < inner; ++o) {
        double acc = b_1[o];
        for (int ky = 0; ky < k1; ++ky) {
          for (int kx = 0; kx < k1; ++kx) {
            for (int a = 0; a < ch; ++a) {
              acc += img.at(a, r * k1 + ky, c * k1 + kx) * w_1[((ky * k1 + kx) * ch + a) * inner + o];
            }
          }
        }
        const double g = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
        const std::size_t cell = static_cast<std::size_t>(r) * w1 + c;
        mid[cell * inner + o] = g + pe[cell * inner + o];
      }
    }
  }
  const int h2 = h1 / k2, w2 = w1 / k2;
  std::vector<double> out(static_cast<std::size_t>(h2) * w2 * d);
  for (int r = 0; r < h2; ++r) {
    for (int c = 0; c < w2; ++c) {
      for (int o = 0; o < d; ++o) {
        double acc = b_2[o];
        for (int ky = 0; ky < k2; ++ky) {
          for (int kx = 0; kx < k2; ++kx) {
            const std::size_t cell = static_cast<std::size_t>(r * k2 + ky) * w1 + (c * k2 + kx);
            for (int a = 0; a < inner; ++a) {
              acc += mid[cell * inner + a] * w_2[((ky * k2 + kx) * inner + a) * d + o];
            }
          }
        }
        out[(static_cast<std::size_t>(r) * w2 + c) * d + o] = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("2d sinusoidal table at the origin is sin 0 and cos 1") {
  const auto pe = neo::sinusoidal_pe_2d(1, 1, 16);
  for (int i = 0; i < 16; ++i) CHECK(pe[i] == (i % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("2d sinusoidal table row one, first pair") {
  const auto pe = neo::sinusoidal_pe_2d(2, 1, 16);
  CHECK(pe[16] == doctest::Approx(0.84147).epsilon(1e-5));
  CHECK(pe[16] == std::sin(1.0));
  CHECK(pe[17] == std::cos(1.0));
}

TEST_CASE("2d sinusoidal row half depends on the row only") {
  const int h = 5, w = 7, dim = 32;
  const auto full = neo::sinusoidal_pe_2d(h, w, dim);
  const auto col = neo::sinusoidal_pe_2d(h, 1, dim);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < dim / 2; ++k) CHECK(full[(r * w + c) * dim + k] == col[r * dim + k]);
    }
  }
}

TEST_CASE("2d sinusoidal rows are pairwise distinct") {
  const int h = 16, dim = 64;
  const auto pe = neo::sinusoidal_pe_2d(h, 1, dim);
  for (int a = 0; a < h; ++a) {
    for (int b = a + 1; b < h; ++b) {
      double diff = 0;
      for (int k = 0; k < dim / 2; ++k) diff += std::abs(pe[a * dim + k] - pe[b * dim + k]);
      CHECK(diff > 1e-6);
    }
  }
  CHECK_THROWS_AS(neo::sinusoidal_pe_2d(2, 2, 6), neo::ConfigError);
}

TEST_CASE("patch grid folds 32x32 pixels into one token") {
  const neo::PatchEmbedConfig cfg;
  const auto a = neo::patch_grid(64, 64, cfg);
  CHECK(a.h_tokens * a.w_tokens == 4);
  const auto b = neo::patch_grid(32, 32, cfg);
  CHECK(b.h_tokens * b.w_tokens == 1);
  for (const auto& [h, w] : std::vector<std::pair<int, int>>{{48, 64}, {64, 40}, {16, 16}, {0, 32}}) {
    try {
      neo::patch_grid(h, w, cfg);
      FAIL("expected a ConfigError for " << h << "x" << w);
    } catch (const neo::ConfigError& e) {
      CHECK(std::string(e.what()).find("resize or pad") != std::string::npos);
    }
  }
}

TEST_CASE("patch embedding token count is (H/32)(W/32) over random sizes") {
  neo::ModelConfig cfg;
  cfg.attn.d_model = 8;
  cfg.patch.inner_dim = 8;
  neo::ParameterStore<double> store;
  neo::Rng rng(1);
  const neo::PatchEmbed<double> embed(store, cfg, rng);
  for (int c = 0; c < 12; ++c) {
    const int h = 32 * rng.uniform_int(1, 4), w = 32 * rng.uniform_int(1, 4);
    const auto out = embed.forward(neo::Image::filled(h, w, 3, 0.5f));
    CHECK(out.h_tokens == h / 32);
    CHECK(out.w_tokens == w / 32);
    CHECK(out.tokens.rows() == static_cast<std::size_t>((h / 32) * (w / 32)));
    CHECK(out.tokens.cols() == 8u);
  }
}

TEST_CASE("zero image with zero biases embeds to conv2 of the positional table") {
  const auto cfg = neo::toy_config();
  neo::ParameterStore<double> store;
  neo::Rng rng(2);
  const neo::PatchEmbed<double> embed(store, cfg, rng);
  for (const char* name : {"patch_embed.conv1.bias", "patch_embed.conv2.bias"}) {
    for (auto& v : store.at(name).tensor.mutable_values()) v = 0;
  }
  const auto got = embed.forward(neo::Image::filled(64, 96, 3, 0.0f));

  // GELU(0) = 0, so only the PE reaches Conv2.
  const int inner = cfg.inner_dim(), d = cfg.attn.d_model;
  const auto pe = neo::sinusoidal_pe_2d(4, 6, inner);
  const auto w2 = store.at("patch_embed.conv2.weight").tensor.values();
  REQUIRE(got.tokens.rows() == 6u);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (int o = 0; o < d; ++o) {
        double acc = 0;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            for (int a = 0; a < inner; ++a) {
              acc += pe[((2 * r + ky) * 6 + 2 * c + kx) * inner + a] * w2[((ky * 2 + kx) * inner + a) * d + o];
            }
          }
        }
        CHECK(got.tokens.at(r * 3 + c, o) == doctest::Approx(acc).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("patch embedding matches direct convolution loops") {
  const auto cfg = neo::toy_config();
  neo::ParameterStore<double> store;
  neo::Rng rng(3);
  const neo::PatchEmbed<double> embed(store, cfg, rng);
  for (auto& [name, entry] : store.entries()) {
    for (auto& v : store.at(name).tensor.mutable_values()) v = rng.normal(0.0, 0.05);
  }
  const auto img = random_image(64, 96, rng);
  const auto got = embed.forward(img);
  const auto want = direct_patch_embed(img, store, cfg);
  REQUIRE(got.tokens.numel() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.tokens.values()[i] - want[i]) < 1e-12);
}

TEST_CASE("marker insertion token counts") {
  CHECK(neo::insert_markers(neo::parse_layout("t:3,img:2x2")).total_len() == 9);
  CHECK(neo::insert_markers(neo::parse_layout("t:1")).total_len() == 1);
  CHECK(neo::insert_markers(neo::parse_layout("img:1x1,img:1x1")).total_len() == 6);
  CHECK(neo::render_layout(neo::insert_markers(neo::parse_layout("t:2,vid:2x1x1"))) ==
        "t:2,t:1,vid:2x1x1,t:1");
}

TEST_CASE("embedded sequence keeps segment order and tags markers as text") {
  const auto cfg = neo::toy_config();
  neo::ParameterStore<double> store;
  neo::Rng rng(4);
  const neo::TokenEmbedding<double> words(store, cfg, rng);
  const neo::PatchEmbed<double> patches(store, cfg, rng);
  const auto layout = neo::parse_layout("t:2,img:1x2,t:1");
  const auto img = random_image(32, 64, rng);
  const auto seq = neo::embed_sequence<double>(layout, {{7, 8}, {9}}, {{{img}}}, words, patches);

  const std::vector<int> ids{7, 8, neo::Vocabulary::kImgStart, -1, -1, neo::Vocabulary::kImgEnd, 9};
  CHECK(seq.token_ids == ids);
  using neo::Role;
  const std::vector<Role> roles{Role::kText,   Role::kText,   Role::kText, Role::kVisual,
                                Role::kVisual, Role::kText, Role::kText};
  CHECK(seq.roles == roles);
  CHECK(seq.layout == neo::insert_markers(layout));
  REQUIRE(seq.embeddings.rows() == 7u);

  const auto table = words.table();
  const auto visual = patches.forward(img).tokens;
  for (int c = 0; c < cfg.attn.d_model; ++c) {
    CHECK(seq.embeddings.at(0, c) == table.at(7, c));
    CHECK(seq.embeddings.at(2, c) == table.at(neo::Vocabulary::kImgStart, c));
    CHECK(seq.embeddings.at(4, c) == visual.at(1, c));
    CHECK(seq.embeddings.at(6, c) == table.at(9, c));
  }
}

TEST_CASE("embedding errors name the offending segment") {
  const auto cfg = neo::toy_config();
  neo::ParameterStore<double> store;
  neo::Rng rng(5);
  const neo::TokenEmbedding<double> words(store, cfg, rng);
  const neo::PatchEmbed<double> patches(store, cfg, rng);
  const auto layout = neo::parse_layout("t:2,img:1x2");
  auto message = [&](const std::vector<std::vector<int>>& ids,
                     const std::vector<neo::VisualInput>& visuals) -> std::string {
    try {
      neo::embed_sequence<double>(layout, ids, visuals, words, patches);
    } catch (const neo::ConfigError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message({{1}}, {{{random_image(32, 64, rng)}}}).find("segment 0") != std::string::npos);
  CHECK(message({{1, 2}}, {{{random_image(64, 64, rng)}}}).find("segment 1") != std::string::npos);
  CHECK(message({{1, 2}}, {}).find("visual segments") != std::string::npos);
  CHECK(message({{1, 99}}, {{{random_image(32, 64, rng)}}}).find("outside vocab_size") != std::string::npos);
}

TEST_CASE("toy vocabulary reserves the first five ids") {
  const auto& v = neo::Vocabulary::toy();
  CHECK(v.size() == 64);
  CHECK(v.token(neo::Vocabulary::kPad) == "<pad>");
  CHECK(v.token(neo::Vocabulary::kBos) == "<bos>");
  CHECK(v.token(neo::Vocabulary::kEos) == "<eos>");
  CHECK(v.token(neo::Vocabulary::kImgStart) == "<img>");
  CHECK(v.token(neo::Vocabulary::kImgEnd) == "</img>");
  const auto ids = v.encode("<bos> n3 n12 <eos>");
  CHECK(ids == std::vector<int>{1, v.number_id(3), v.number_id(12), 2});
  CHECK(v.decode(ids) == "<bos> n3 n12 <eos>");
  CHECK_THROWS_AS(v.encode("zebra"), neo::ConfigError);
  CHECK_THROWS_AS(v.color_id(16), neo::ConfigError);
  CHECK_THROWS_AS(neo::Vocabulary({"<pad>", "<bos>", "<eos>", "<img>"}), neo::ConfigError);
}

TEST_CASE("image files round-trip") {
  neo::Rng rng(6);
  const auto img = random_image(32, 64, rng);
  const auto path = std::filesystem::temp_directory_path() / "neo_test_image.f32";
  neo::write_image(path, img);
  const auto back = neo::read_image(path);
  CHECK(back.height == 32);
  CHECK(back.width == 64);
  CHECK(back.channels == 3);
  CHECK(back.data == img.data);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".hdr");
  CHECK_THROWS(neo::read_image(path));
}
