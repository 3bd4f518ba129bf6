#pragma once

// Brute-force references for tests. Nothing here calls into the kernels,
// tensors, rope tables, or mask builder; every formula is re-derived with
// plain loops so a bug in the optimized path cannot hide in both.

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "neo/core/layout.hpp"

namespace neo::oracle {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

// Walks the marker-expanded layout token by token.
std::vector<PositionTriple> enumerate_positions(const SequenceLayout& layout);

// Visibility of key j from query i, found by locating both tokens'
// segments. With `mixed` off everything is causal.
bool mask_allowed(const SequenceLayout& layout, bool mixed, std::size_t i, std::size_t j);

// Rotates adjacent pairs of v by index * base^(-2m / v.size()).
std::vector<double> trig_rotate(std::span<const double> v, int index, double base);

// One attention layer. Part a of query head h occupies columns
// [h * d_part[a], (h + 1) * d_part[a]) of wq[a]; likewise for keys, values.
struct Layer {
  std::array<Matrix, 3> wq;
  std::array<Matrix, 3> wk;
  std::array<std::vector<double>, 3> q_norm;
  std::array<std::vector<double>, 3> k_norm;
  Matrix wv;
  Matrix wo;
};

struct Geometry {
  int n_q_heads = 0;
  int n_kv_heads = 0;
  std::array<int, 3> d_part{};  // T, H, W
  int d_v = 0;
  std::array<double, 3> beta{};
  double eps = 1e-6;
  double scale = 1;
};

// Per-axis RMS norm, rotation by the token's (t, h, w), then masked softmax
// attention, computed one (query, key) pair at a time.
Matrix attention(const Matrix& x, const Layer& layer, const std::vector<PositionTriple>& positions,
                 const std::function<bool(std::size_t, std::size_t)>& allowed,
                 const Geometry& geometry);

// Textbook causal GQA with 1D rotary embedding on the temporal part only,
// rotation done with std::complex. Uses wq[0], wk[0], q_norm[0], k_norm[0].
Matrix causal_attention_1d(const Matrix& x, const Layer& layer, const Geometry& geometry);

// A full pre-norm block (attention + SwiGLU) around causal_attention_1d.
struct Block {
  std::vector<double> attn_norm;
  Layer attn;
  std::vector<double> ffn_norm;
  Matrix gate;
  Matrix up;
  Matrix down;
};

Matrix causal_block_1d(const Matrix& x, const Block& block, const Geometry& geometry);

// Per-block counts, recomputed by summing individual matrix sizes.
struct ParamTally {
  long long baseline = 0;
  long long extra_projections = 0;
  long long extra_norms = 0;
};

ParamTally tally_params(int d_model, int n_q, int n_kv, int d_t, int d_h, int d_w, int ffn_hidden);

}  // namespace neo::oracle
