#pragma once

// Native-RoPE: per-axis rotary tables, position allocation over modality
// layouts, and the 1D-RoPE baseline.

#include <array>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "neo/core/config.hpp"
#include "neo/core/layout.hpp"

namespace neo {

enum class Axis { kT = 0, kH = 1, kW = 2 };

const char* axis_name(Axis axis);
// Accepts "T"/"H"/"W" in either case.
Axis parse_axis(const std::string& text);

// theta_m = base^(-2m / d_part) for m in [0, d_part / 2). With d_part equal to
// half the temporal width this is the base^(-4i/d) family used for H and W.
std::vector<double> rope_frequencies(double base, int d_part);

// Cached cos/sin of index * theta_m for indices [0, max_index].
class RopeTable {
 public:
  RopeTable() = default;
  RopeTable(Axis axis, double base, int d_part, int max_index);

  // Arbitrary frequencies, for fault injection and unusual schedules.
  static RopeTable from_frequencies(Axis axis, double base, std::vector<double> freqs,
                                    int max_index);

  Axis axis() const { return axis_; }
  double base() const { return base_; }
  int n_freqs() const { return static_cast<int>(freqs_.size()); }
  int max_index() const { return max_index_; }
  double frequency(int m) const { return freqs_[m]; }
  double cos(int index, int m) const { return cos_[offset(index) + m]; }
  double sin(int index, int m) const { return sin_[offset(index) + m]; }

  // Per-token angle rows [indices.size(), n_freqs] for rotate_pairs.
  template <std::floating_point T>
  void gather(std::span<const int> indices, std::vector<T>& cos_out,
              std::vector<T>& sin_out) const;

 private:
  std::size_t offset(int index) const;

  Axis axis_ = Axis::kT;
  double base_ = 1;
  int max_index_ = 0;
  std::vector<double> freqs_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

// One table per axis, sized from the attention config.
struct NativeRopeTables {
  std::array<RopeTable, 3> axes;

  static NativeRopeTables build(const NativeAttentionConfig& cfg, int max_index);
  const RopeTable& operator[](Axis axis) const { return axes[static_cast<int>(axis)]; }
};

// Text tokens get consecutive T with H = W = 0. Each image takes one T, one
// past the largest T so far, and (H, W) = (row, col) of its token grid from
// (0, 0). Video frame f takes base + f. The token after a visual segment
// continues at that segment's largest T plus one.
std::vector<PositionTriple> allocate_positions(const SequenceLayout& layout);

// Baseline allocation: T = token index, H = W = 0 for every token.
std::vector<PositionTriple> allocate_positions_1d(const SequenceLayout& layout);

// One query or key head split into its temporal/height/width parts.
template <std::floating_point T>
struct HeadParts {
  std::vector<T> t;
  std::vector<T> h;
  std::vector<T> w;
  bool operator==(const HeadParts&) const = default;
};

// Rotates adjacent pairs (2m, 2m+1) of `part` by index * theta_m in place.
template <std::floating_point T>
void rotate_part(std::span<T> part, int index, const RopeTable& table);

// Rotates each part by its own axis index and table. Part widths must match
// twice the tables' frequency counts.
template <std::floating_point T>
HeadParts<T> apply_native_rope(HeadParts<T> parts, const PositionTriple& pos,
                               const NativeRopeTables& tables);

// Standard rotary embedding of a temporal part, evaluated without tables.
template <std::floating_point T>
std::vector<T> apply_1d_rope(std::span<const T> part, int t, double base);

}  // namespace neo
