#include "neo/core/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "neo/core/errors.hpp"

namespace neo {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int to_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw FormatError("config key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw FormatError("config key '" + key + "' expects a number, got '" +
                      value + "'");
  }
  return out;
}

using Setter = std::function<void(ModelConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto int_field = [&t](const std::string& key, auto member) {
      t[key] = [key, member](ModelConfig& c, const std::string& v) {
        member(c) = to_int(key, v);
      };
    };
    auto real_field = [&t](const std::string& key, auto member) {
      t[key] = [key, member](ModelConfig& c, const std::string& v) {
        member(c) = to_double(key, v);
      };
    };
    int_field("d_model", [](ModelConfig& c) -> int& { return c.attn.d_model; });
    int_field("n_q_heads", [](ModelConfig& c) -> int& { return c.attn.n_q_heads; });
    int_field("n_kv_heads", [](ModelConfig& c) -> int& { return c.attn.n_kv_heads; });
    int_field("d_head_t", [](ModelConfig& c) -> int& { return c.attn.d_head_t; });
    int_field("d_head_h", [](ModelConfig& c) -> int& { return c.attn.d_head_h; });
    int_field("d_head_w", [](ModelConfig& c) -> int& { return c.attn.d_head_w; });
    real_field("beta_t", [](ModelConfig& c) -> double& { return c.attn.beta_t; });
    real_field("beta_h", [](ModelConfig& c) -> double& { return c.attn.beta_h; });
    real_field("beta_w", [](ModelConfig& c) -> double& { return c.attn.beta_w; });
    int_field("n_prebuffer_layers",
              [](ModelConfig& c) -> int& { return c.attn.n_prebuffer_layers; });
    int_field("n_postllm_layers",
              [](ModelConfig& c) -> int& { return c.attn.n_postllm_layers; });
    int_field("ffn_hidden", [](ModelConfig& c) -> int& { return c.attn.ffn_hidden; });
    int_field("vocab_size", [](ModelConfig& c) -> int& { return c.attn.vocab_size; });
    real_field("rmsnorm_eps",
               [](ModelConfig& c) -> double& { return c.attn.rmsnorm_eps; });
    t["attn_scale"] = [](ModelConfig& c, const std::string& v) {
      c.attn.attn_scale = to_double("attn_scale", v);
    };
    int_field("conv1_kernel", [](ModelConfig& c) -> int& { return c.patch.conv1_kernel; });
    int_field("conv1_stride", [](ModelConfig& c) -> int& { return c.patch.conv1_stride; });
    int_field("conv2_kernel", [](ModelConfig& c) -> int& { return c.patch.conv2_kernel; });
    int_field("conv2_stride", [](ModelConfig& c) -> int& { return c.patch.conv2_stride; });
    int_field("in_channels", [](ModelConfig& c) -> int& { return c.patch.in_channels; });
    int_field("inner_dim", [](ModelConfig& c) -> int& { return c.patch.inner_dim; });
    real_field("init_std", [](ModelConfig& c) -> double& { return c.init_std; });
    int_field("max_positions", [](ModelConfig& c) -> int& { return c.max_positions; });
    return t;
  }();
  return table;
}

}  // namespace

double NativeAttentionConfig::scale() const {
  return attn_scale ? *attn_scale : 1.0 / std::sqrt(static_cast<double>(d_head_t));
}

void NativeAttentionConfig::validate() const {
  require(d_model > 0, "d_model must be positive");
  require(n_q_heads > 0 && n_kv_heads > 0, "head counts must be positive");
  require(n_q_heads % n_kv_heads == 0,
          "n_q_heads (" + std::to_string(n_q_heads) +
              ") must be divisible by n_kv_heads (" +
              std::to_string(n_kv_heads) + ")");
  require(d_head_t > 0 && d_head_t % 2 == 0, "d_head_t must be positive and even");
  require(d_head_h >= 0 && d_head_h % 2 == 0, "d_head_h must be even");
  require(d_head_w >= 0 && d_head_w % 2 == 0, "d_head_w must be even");
  require(beta_t > 0 && beta_h > 0 && beta_w > 0, "rope bases must be positive");
  require(n_prebuffer_layers >= 0, "n_prebuffer_layers must be >= 0");
  require(n_postllm_layers >= 1, "n_postllm_layers must be >= 1");
  require(ffn_hidden > 0, "ffn_hidden must be positive");
  require(vocab_size > 0, "vocab_size must be positive");
  require(rmsnorm_eps > 0, "rmsnorm_eps must be positive");
  require(!attn_scale || *attn_scale > 0, "attn_scale must be positive");
}

void PatchEmbedConfig::validate() const {
  require(conv1_kernel > 0 && conv1_stride > 0, "conv1 kernel/stride must be positive");
  require(conv2_kernel > 0 && conv2_stride > 0, "conv2 kernel/stride must be positive");
  // Non-overlapping patches keep the token grid at exactly H / effective_patch.
  require(conv1_kernel == conv1_stride, "conv1 kernel must equal its stride");
  require(conv2_kernel == conv2_stride, "conv2 kernel must equal its stride");
  require(in_channels > 0, "in_channels must be positive");
  require(inner_dim >= 0, "inner_dim must be >= 0");
}

void ModelConfig::validate() const {
  attn.validate();
  patch.validate();
  require(inner_dim() % 4 == 0, "patch inner_dim must be divisible by 4 (2D PE)");
  require(init_std > 0, "init_std must be positive");
  require(max_positions > 0, "max_positions must be positive");
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.validate();
  return cfg;
}

namespace {

ModelConfig full_size(int d_model, int n_q, int n_kv, int postllm, int prebuffer, int ffn) {
  ModelConfig cfg;
  auto& a = cfg.attn;
  a.d_model = d_model;
  a.n_q_heads = n_q;
  a.n_kv_heads = n_kv;
  a.d_head_t = 128;
  a.d_head_h = a.d_head_w = 64;
  a.n_prebuffer_layers = prebuffer;
  a.n_postllm_layers = postllm;
  a.ffn_hidden = ffn;
  a.vocab_size = 151936;
  cfg.max_positions = 40960;
  cfg.validate();
  return cfg;
}

}  // namespace

ModelConfig neo_2b_like_config() { return full_size(2048, 16, 8, 28, 12, 6144); }

ModelConfig neo_9b_like_config() { return full_size(4096, 32, 8, 36, 6, 12288); }

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
    it->second(cfg, value);
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_config(buf.str());
}

std::string render_model_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto& a = cfg.attn;
  out << "d_model = " << a.d_model << "\n"
      << "n_q_heads = " << a.n_q_heads << "\n"
      << "n_kv_heads = " << a.n_kv_heads << "\n"
      << "d_head_t = " << a.d_head_t << "\n"
      << "d_head_h = " << a.d_head_h << "\n"
      << "d_head_w = " << a.d_head_w << "\n"
      << "beta_t = " << a.beta_t << "\n"
      << "beta_h = " << a.beta_h << "\n"
      << "beta_w = " << a.beta_w << "\n"
      << "n_prebuffer_layers = " << a.n_prebuffer_layers << "\n"
      << "n_postllm_layers = " << a.n_postllm_layers << "\n"
      << "ffn_hidden = " << a.ffn_hidden << "\n"
      << "vocab_size = " << a.vocab_size << "\n"
      << "rmsnorm_eps = " << a.rmsnorm_eps << "\n";
  if (a.attn_scale) out << "attn_scale = " << *a.attn_scale << "\n";
  out << "conv1_kernel = " << cfg.patch.conv1_kernel << "\n"
      << "conv1_stride = " << cfg.patch.conv1_stride << "\n"
      << "conv2_kernel = " << cfg.patch.conv2_kernel << "\n"
      << "conv2_stride = " << cfg.patch.conv2_stride << "\n"
      << "in_channels = " << cfg.patch.in_channels << "\n"
      << "inner_dim = " << cfg.patch.inner_dim << "\n"
      << "init_std = " << cfg.init_std << "\n"
      << "max_positions = " << cfg.max_positions << "\n";
  return out.str();
}

}  // namespace neo
