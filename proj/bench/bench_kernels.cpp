// OpenMP kernels against their serial references. Each benchmark comes in a
// pair, <name>/kernel and <name>/reference, over the same inputs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "neo/kernels/kernels.hpp"
#include "neo/kernels/reference.hpp"

namespace k = neo::kernels;
namespace ref = neo::kernels::reference;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool kReference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  const k::GemmDims dims{n, n, n};
  for (auto _ : state) {
    if constexpr (kReference) {
      ref::gemm<double>(k::GemmOp::kNN, dims, a, b, c, false);
    } else {
      k::gemm<double>(k::GemmOp::kNN, dims, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

template <bool kReference>
void BM_RmsNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto x = random_vector(rows * dim, 3), gamma = random_vector(dim, 4);
  std::vector<double> y(rows * dim), inv(rows);
  for (auto _ : state) {
    if constexpr (kReference) {
      ref::rmsnorm_rows<double>(rows, dim, x, gamma, 1e-6, y, inv);
    } else {
      k::rmsnorm_rows<double>(rows, dim, x, gamma, 1e-6, y, inv);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

// Toy geometry: 4 query heads over 2 kv heads, T/H/W widths 16/8/8, causal.
template <bool kReference>
void BM_Attention(benchmark::State& state) {
  k::AttentionDims dims;
  dims.n = static_cast<std::size_t>(state.range(0));
  dims.q_heads = 4;
  dims.kv_heads = 2;
  dims.d_qk = {16, 8, 8};
  dims.d_v = 16;
  std::array<std::vector<double>, 3> q, kk;
  k::QkParts<const double> qp, kp;
  for (int a = 0; a < 3; ++a) {
    q[a] = random_vector(dims.n * dims.q_heads * dims.d_qk[a], 10 + a);
    kk[a] = random_vector(dims.n * dims.kv_heads * dims.d_qk[a], 20 + a);
    qp.part[a] = q[a];
    kp.part[a] = kk[a];
  }
  const auto v = random_vector(dims.n * dims.kv_heads * dims.d_v, 30);
  std::vector<std::uint8_t> mask(dims.n * dims.n);
  for (std::size_t i = 0; i < dims.n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * dims.n + j] = 1;
  }
  std::vector<double> probs(dims.q_heads * dims.n * dims.n), out(dims.n * dims.q_heads * dims.d_v);
  for (auto _ : state) {
    if constexpr (kReference) {
      ref::attention_forward<double>(dims, qp, kp, v, mask, 0.25, probs, out);
    } else {
      k::attention_forward<double>(dims, qp, kp, v, mask, 0.25, probs, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/kernel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/reference")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_RmsNorm<false>)->Name("rmsnorm/kernel")->Arg(256)->Arg(4096);
BENCHMARK(BM_RmsNorm<true>)->Name("rmsnorm/reference")->Arg(256)->Arg(4096);
BENCHMARK(BM_Attention<false>)->Name("attention/kernel")->Arg(64)->Arg(256);
BENCHMARK(BM_Attention<true>)->Name("attention/reference")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
