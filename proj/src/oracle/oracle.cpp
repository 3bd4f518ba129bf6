#include "neo/oracle/oracle.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace neo::oracle {

namespace {

struct TokenInfo {
  std::size_t segment = 0;
  int frame = 0;
  bool visual = false;
};

std::vector<TokenInfo> describe_tokens(const SequenceLayout& layout) {
  std::vector<TokenInfo> out;
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    const auto& seg = layout.segments[s];
    if (const auto* t = std::get_if<TextRun>(&seg)) {
      for (int i = 0; i < t->n_tokens; ++i) out.push_back({s, 0, false});
    } else if (const auto* img = std::get_if<ImageGrid>(&seg)) {
      for (int i = 0; i < img->h_tokens * img->w_tokens; ++i) out.push_back({s, 0, true});
    } else {
      const auto& vid = std::get<VideoClip>(seg);
      for (int f = 0; f < vid.n_frames; ++f) {
        for (int i = 0; i < vid.h_tokens * vid.w_tokens; ++i) out.push_back({s, f, true});
      }
    }
  }
  return out;
}

std::vector<double> rms_normalize(std::vector<double> v, const std::vector<double>& gamma,
                                  double eps) {
  double ms = 0;
  for (double x : v) ms += x * x;
  ms = v.empty() ? 0 : ms / static_cast<double>(v.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * inv * gamma[i];
  return v;
}

std::vector<double> row_slice(const Matrix& m, std::size_t row, std::size_t begin,
                              std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t c = 0; c < count; ++c) out[c] = m(row, begin + c);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Matrix rms_rows(const Matrix& x, const std::vector<double>& gamma, double eps) {
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto v = rms_normalize(row_slice(x, r, 0, x.cols), gamma, eps);
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = v[c];
  }
  return out;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

std::vector<PositionTriple> enumerate_positions(const SequenceLayout& layout) {
  const auto tokens = describe_tokens(layout);
  std::vector<PositionTriple> out(tokens.size());
  int max_t = -1;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const auto& seg = layout.segments[tokens[i].segment];
    if (!tokens[i].visual) {
      out[i] = {max_t + 1, 0, 0};
      max_t = out[i].t;
      ++i;
      continue;
    }
    // A visual segment: every frame restarts the (h, w) raster.
    const int w_tokens = std::holds_alternative<ImageGrid>(seg)
                             ? std::get<ImageGrid>(seg).w_tokens
                             : std::get<VideoClip>(seg).w_tokens;
    const int base = max_t + 1;
    const std::size_t seg_id = tokens[i].segment;
    int within = 0;
    int last_frame = 0;
    while (i < tokens.size() && tokens[i].segment == seg_id) {
      if (tokens[i].frame != last_frame) {
        within = 0;
        last_frame = tokens[i].frame;
      }
      out[i] = {base + tokens[i].frame, within / w_tokens, within % w_tokens};
      max_t = std::max(max_t, out[i].t);
      ++within;
      ++i;
    }
  }
  return out;
}

bool mask_allowed(const SequenceLayout& layout, bool mixed, std::size_t i, std::size_t j) {
  if (j <= i) return true;
  if (!mixed) return false;
  const auto tokens = describe_tokens(layout);
  const auto& a = tokens.at(i);
  const auto& b = tokens.at(j);
  return a.visual && b.visual && a.segment == b.segment && a.frame == b.frame;
}

std::vector<double> trig_rotate(std::span<const double> v, int index, double base) {
  std::vector<double> out(v.begin(), v.end());
  const double d = static_cast<double>(v.size());
  for (std::size_t m = 0; 2 * m + 1 < v.size(); ++m) {
    const double theta = std::pow(base, -2.0 * static_cast<double>(m) / d);
    const double angle = index * theta;
    out[2 * m] = v[2 * m] * std::cos(angle) - v[2 * m + 1] * std::sin(angle);
    out[2 * m + 1] = v[2 * m] * std::sin(angle) + v[2 * m + 1] * std::cos(angle);
  }
  return out;
}

Matrix attention(const Matrix& x, const Layer& layer, const std::vector<PositionTriple>& positions,
                 const std::function<bool(std::size_t, std::size_t)>& allowed,
                 const Geometry& g) {
  const std::size_t n = x.rows;
  const int group = g.n_q_heads / g.n_kv_heads;
  std::array<Matrix, 3> qproj, kproj;
  for (int a = 0; a < 3; ++a) {
    if (g.d_part[a] == 0) continue;
    qproj[a] = matmul(x, layer.wq[a]);
    kproj[a] = matmul(x, layer.wk[a]);
  }
  const Matrix vproj = matmul(x, layer.wv);

  auto head_part = [&](const Matrix& proj, int head, int a, std::size_t token,
                       const std::vector<double>& gamma) {
    const int idx[3] = {positions[token].t, positions[token].h, positions[token].w};
    auto v = row_slice(proj, token, static_cast<std::size_t>(head) * g.d_part[a], g.d_part[a]);
    v = rms_normalize(std::move(v), gamma, g.eps);
    return trig_rotate(v, idx[a], g.beta[a]);
  };

  Matrix heads(n, static_cast<std::size_t>(g.n_q_heads) * g.d_v);
  for (int h = 0; h < g.n_q_heads; ++h) {
    const int kv = h / group;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n, -std::numeric_limits<double>::infinity());
      double max_logit = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!allowed(i, j)) continue;
        double s = 0;
        for (int a = 0; a < 3; ++a) {
          if (g.d_part[a] == 0) continue;
          s += dot(head_part(qproj[a], h, a, i, layer.q_norm[a]),
                   head_part(kproj[a], kv, a, j, layer.k_norm[a]));
        }
        logits[j] = s * g.scale;
        max_logit = std::max(max_logit, logits[j]);
      }
      if (!std::isfinite(max_logit)) continue;  // nothing visible: zero row
      double z = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed(i, j)) z += std::exp(logits[j] - max_logit);
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!allowed(i, j)) continue;
        const double p = std::exp(logits[j] - max_logit) / z;
        for (int c = 0; c < g.d_v; ++c) {
          heads(i, static_cast<std::size_t>(h) * g.d_v + c) +=
              p * vproj(j, static_cast<std::size_t>(kv) * g.d_v + c);
        }
      }
    }
  }
  return matmul(heads, layer.wo);
}

Matrix causal_attention_1d(const Matrix& x, const Layer& layer, const Geometry& g) {
  const std::size_t n = x.rows;
  const int d = g.d_part[0];
  const int group = g.n_q_heads / g.n_kv_heads;
  const Matrix q = matmul(x, layer.wq[0]);
  const Matrix k = matmul(x, layer.wk[0]);
  const Matrix v = matmul(x, layer.wv);

  // Rotary embedding as multiplication of complex pairs by e^{i t theta}.
  auto rope = [&](const Matrix& proj, int head, std::size_t t, const std::vector<double>& gamma) {
    auto u = rms_normalize(row_slice(proj, t, static_cast<std::size_t>(head) * d, d), gamma, g.eps);
    for (int m = 0; m < d / 2; ++m) {
      const double theta = 1.0 / std::pow(g.beta[0], (2.0 * m) / d);
      const std::complex<double> z(u[2 * m], u[2 * m + 1]);
      const auto r = z * std::polar(1.0, static_cast<double>(t) * theta);
      u[2 * m] = r.real();
      u[2 * m + 1] = r.imag();
    }
    return u;
  };

  Matrix heads(n, static_cast<std::size_t>(g.n_q_heads) * g.d_v);
  for (int h = 0; h < g.n_q_heads; ++h) {
    const int kv = h / group;
    for (std::size_t i = 0; i < n; ++i) {
      const auto qi = rope(q, h, i, layer.q_norm[0]);
      std::vector<double> scores(i + 1);
      for (std::size_t j = 0; j <= i; ++j) scores[j] = dot(qi, rope(k, kv, j, layer.k_norm[0])) * g.scale;
      double m = scores[0];
      for (double s : scores) m = std::max(m, s);
      double z = 0;
      for (double& s : scores) z += (s = std::exp(s - m));
      for (std::size_t j = 0; j <= i; ++j) {
        for (int c = 0; c < g.d_v; ++c) {
          heads(i, static_cast<std::size_t>(h) * g.d_v + c) +=
              scores[j] / z * v(j, static_cast<std::size_t>(kv) * g.d_v + c);
        }
      }
    }
  }
  return matmul(heads, layer.wo);
}

Matrix causal_block_1d(const Matrix& x, const Block& block, const Geometry& g) {
  Matrix h = causal_attention_1d(rms_rows(x, block.attn_norm, g.eps), block.attn, g);
  for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += x.data[i];

  const Matrix z = rms_rows(h, block.ffn_norm, g.eps);
  const Matrix a = matmul(z, block.gate);
  const Matrix b = matmul(z, block.up);
  Matrix act(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double s = a.data[i] / (1.0 + std::exp(-a.data[i]));
    act.data[i] = s * b.data[i];
  }
  Matrix out = matmul(act, block.down);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += h.data[i];
  return out;
}

ParamTally tally_params(int d_model, int n_q, int n_kv, int d_t, int d_h, int d_w,
                        int ffn_hidden) {
  auto size = [](long long r, long long c) { return r * c; };
  ParamTally t;
  const long long wq_t = size(d_model, n_q * d_t);
  const long long wk_t = size(d_model, n_kv * d_t);
  const long long wv = size(d_model, n_kv * d_t);
  const long long wo = size(n_q * d_t, d_model);
  const long long ffn = size(d_model, ffn_hidden) * 2 + size(ffn_hidden, d_model);
  t.baseline = wq_t + wk_t + wv + wo + ffn;
  for (int part : {d_h, d_w}) {
    t.extra_projections += size(d_model, n_q * part) + size(d_model, n_kv * part);
    t.extra_norms += 2LL * part;  // one query scale and one key scale
  }
  return t;
}

}  // namespace neo::oracle
