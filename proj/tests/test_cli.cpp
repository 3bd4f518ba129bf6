#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "neo/attention/attention.hpp"
#include "neo/backbone/backbone.hpp"
#include "neo/core/checkpoint.hpp"
#include "neo/core/config.hpp"
#include "neo/oracle/oracle.hpp"
#include "neo/rope/rope.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kGolden = NEO_GOLDEN_DIR;

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "neo_cli_test";
  fs::create_directories(dir);
  return dir;
}

Run neo_cli(const std::string& args) {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = std::string("\"") + NEO_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string oracle_mask(const std::string& spec, bool mixed) {
  const auto layout = neo::parse_layout(spec);
  const auto n = layout.total_len();
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s += neo::oracle::mask_allowed(layout, mixed, i, j) ? '1' : '0';
    s += '\n';
  }
  return s;
}

}  // namespace

TEST_CASE("dump-mask reproduces the golden matrix and the oracle") {
  const auto r = neo_cli("dump-mask --layout \"t:2,img:1x2,t:1\"");
  REQUIRE(r.status == 0);
  CHECK(r.out == slurp(kGolden / "mask_t2_img1x2_t1.txt"));
  CHECK(r.out == oracle_mask("t:2,img:1x2,t:1", true));
}

TEST_CASE("dump-mask with markers matches golden files in both modes") {
  const auto mixed = neo_cli("dump-mask --layout t:3,img:2x2,t:1 --markers");
  REQUIRE(mixed.status == 0);
  CHECK(mixed.out == slurp(kGolden / "mask_t3_img2x2_t1_markers.txt"));
  // Marker-expanded layout written out by hand: <img> and </img> are 1-token runs.
  CHECK(mixed.out == oracle_mask("t:3,t:1,img:2x2,t:1,t:1", true));

  const auto causal = neo_cli("dump-mask --layout t:3,img:2x2,t:1 --markers --mode causal");
  REQUIRE(causal.status == 0);
  CHECK(causal.out == slurp(kGolden / "mask_t3_img2x2_t1_markers_causal.txt"));
  CHECK(causal.out == oracle_mask("t:10", false));
}

TEST_CASE("dump-mask writes to --out") {
  const auto path = scratch() / "mask.txt";
  fs::remove(path);
  REQUIRE(neo_cli("dump-mask --layout vid:2x1x2 --out \"" + path.string() + "\"").status == 0);
  CHECK(slurp(path) == oracle_mask("vid:2x1x2", true));
}

TEST_CASE("a bad layout is a usage error with the grammar") {
  const auto r = neo_cli("dump-mask --layout t:2,img:1x");
  CHECK(r.status == 2);
  CHECK(r.err.find("t:N") != std::string::npos);
  CHECK(r.err.find("img:HxW") != std::string::npos);
}

TEST_CASE("unknown flags and commands are rejected") {
  CHECK(neo_cli("dump-mask --layout t:2 --bogus").status != 0);
  CHECK(neo_cli("frobnicate").status != 0);
  CHECK(neo_cli("").status != 0);
  CHECK(neo_cli("--precision 16 params").status != 0);
  CHECK(neo_cli("dump-rope --axis Q --max-index 2").status == 2);
}

TEST_CASE("dump-rope rows follow cos and sin of index times frequency") {
  const auto cfg = neo::toy_config().attn;
  for (const auto& [axis, base, d_part] :
       {std::tuple{'T', cfg.beta_t, cfg.d_head_t}, std::tuple{'W', cfg.beta_w, cfg.d_head_w}}) {
    const auto r = neo_cli(std::string("dump-rope --axis ") + axis + " --max-index 5");
    REQUIRE(r.status == 0);
    std::istringstream in(r.out);
    std::string header;
    std::getline(in, header);
    CHECK(header == "axis index freq cos sin");
    int rows = 0;
    std::string a;
    int index = 0, m = 0;
    double c = 0, s = 0;
    while (in >> a >> index >> m >> c >> s) {
      CHECK(a == std::string(1, axis));
      CHECK(index == rows / (d_part / 2));
      CHECK(m == rows % (d_part / 2));
      const double angle = index * std::pow(base, -2.0 * m / d_part);
      CHECK(std::abs(c - std::cos(angle)) < 1e-15);
      CHECK(std::abs(s - std::sin(angle)) < 1e-15);
      ++rows;
    }
    CHECK(rows == 6 * d_part / 2);
  }
}

TEST_CASE("params prints the expansion counts") {
  const auto r = neo_cli("params --config \"" + (kGolden.parent_path().parent_path() / "configs" / "toy.cfg").string() + "\"");
  REQUIRE(r.status == 0);
  const auto t = neo::oracle::tally_params(64, 4, 2, 16, 8, 8, 128);
  CHECK(r.out.find("baseline           " + std::to_string(t.baseline) + "\n") != std::string::npos);
  CHECK(r.out.find("extra projections  " + std::to_string(t.extra_projections) + "\n") !=
        std::string::npos);
  CHECK(r.out.find("extra norms        " + std::to_string(t.extra_norms) + "\n") != std::string::npos);
  CHECK(r.out.find("all 4 blocks") != std::string::npos);

  const auto big = neo_cli("params --preset 2b");
  REQUIRE(big.status == 0);
  const auto p = neo::count_extra_params(neo::neo_2b_like_config().attn);
  CHECK(big.out.find("extra              " + std::to_string(p.extra) + "\n") != std::string::npos);
}

TEST_CASE("train, then export the pre-Buffer, deterministically") {
  const auto dir = scratch() / "train";
  fs::remove_all(dir);
  const auto lm = dir / "lm";
  REQUIRE(neo_cli("train --stage lm --steps 3 --out \"" + lm.string() + "\"").status == 0);
  CHECK(fs::exists(lm / "model.ckpt"));
  CHECK(fs::exists(lm / "metrics.jsonl"));
  CHECK(neo::load_model_config(lm / "model.cfg").attn.d_model == 64);

  const auto again = dir / "again";
  REQUIRE(neo_cli("train --stage lm --steps 3 --out \"" + again.string() + "\"").status == 0);
  CHECK(slurp(lm / "model.ckpt") == slurp(again / "model.ckpt"));
  CHECK(slurp(lm / "metrics.jsonl") == slurp(again / "metrics.jsonl"));

  const auto pre = dir / "pretrain";
  REQUIRE(neo_cli("train --stage pretrain --steps 2 --precision 32 --init \"" +
                  (lm / "model.ckpt").string() + "\" --out \"" + pre.string() + "\"")
              .status == 0);
  const auto asset = dir / "prebuffer.ckpt";
  REQUIRE(neo_cli("export-prebuffer --checkpoint \"" + (pre / "model.ckpt").string() +
                  "\" --out \"" + asset.string() + "\"")
              .status == 0);
  const auto ckpt = neo::read_checkpoint(asset);
  REQUIRE_FALSE(ckpt.entries.empty());
  for (const auto& e : ckpt.entries) CHECK(neo::is_prebuffer_asset(e.name));

  CHECK(neo_cli("train --stage bogus --out \"" + (dir / "x").string() + "\"").status == 2);
  CHECK(neo_cli("train --stage lm --out \"" + (dir / "x").string() + "\" --init /nonexistent.ckpt")
            .status != 0);
}
