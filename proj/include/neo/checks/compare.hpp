#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neo/backbone/backbone.hpp"
#include "neo/core/rng.hpp"
#include "neo/oracle/oracle.hpp"

namespace neo::checks {

// Marker-expanded random layout mixing text, images and video, at most
// max_tokens long.
SequenceLayout random_layout(Rng& rng, std::size_t max_tokens);

// Overwrites every parameter: standard- and zero-tagged entries get
// normal(0, stddev), ones-tagged entries 1 + normal(0, stddev).
template <std::floating_point T>
void randomize_parameters(ParameterStore<T>& store, Rng& rng, double stddev);

// Like randomize_parameters, but matrices get normal(0, gain / sqrt(rows)) so
// every layer sees unit-scale pre-activations; vectors use vector_stddev.
template <std::floating_point T>
void randomize_parameters_fan_in(ParameterStore<T>& store, Rng& rng, double gain,
                                 double vector_stddev);

oracle::Matrix to_matrix(const Tensor<double>& t);
oracle::Geometry to_geometry(const NativeAttentionConfig& cfg);
oracle::Layer to_layer(const AttentionWeights<double>& w, const NativeAttentionConfig& cfg);
oracle::Block to_block(const NativeBlock<double>& b, const NativeAttentionConfig& cfg);

struct OracleReport {
  int case_id = 0;
  std::string pairing;  // positions, mask, rope, attention
  double max_abs_diff = 0;
  double max_rel_diff = 0;
  double tolerance = 0;
  bool pass = false;
};

struct CompareTolerances {
  double positions = 0;  // exact integer agreement
  double mask = 0;       // exact agreement
  double rope = 1e-10;
  double attention = 1e-10;
};

// Deliberate bugs in the optimized path, to prove the comparison bites.
enum class Fault { kNone, kRotationSignFlip };

// Optimized-vs-oracle comparison on n_cases random layouts (n <= 64,
// d_model 64, 64-bit). Pass is judged on the relative difference
// max|a - b| / max|b|; any non-finite value fails its report.
std::vector<OracleReport> compare_all(std::uint64_t seed, int n_cases,
                                      const CompareTolerances& tolerances = {},
                                      Fault fault = Fault::kNone);

// Worst report per pairing, in first-seen order.
std::vector<OracleReport> worst_per_pairing(const std::vector<OracleReport>& reports);

bool all_pass(const std::vector<OracleReport>& reports);

void write_reports_jsonl(const std::filesystem::path& path,
                         const std::vector<OracleReport>& reports);

}  // namespace neo::checks
