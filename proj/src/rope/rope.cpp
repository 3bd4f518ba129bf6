#include "neo/rope/rope.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "neo/core/errors.hpp"

namespace neo {

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::kT: return "T";
    case Axis::kH: return "H";
    case Axis::kW: return "W";
  }
  return "?";
}

Axis parse_axis(const std::string& text) {
  if (text.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(text[0]))) {
      case 'T': return Axis::kT;
      case 'H': return Axis::kH;
      case 'W': return Axis::kW;
    }
  }
  throw ConfigError("unknown rope axis '" + text + "' (expected T, H or W)");
}

std::vector<double> rope_frequencies(double base, int d_part) {
  if (d_part < 0 || d_part % 2 != 0) {
    throw ConfigError("rope part width must be even and non-negative, got " +
                      std::to_string(d_part));
  }
  if (!(base > 0)) throw ConfigError("rope base must be positive");
  std::vector<double> freqs(d_part / 2);
  for (int m = 0; m < d_part / 2; ++m) {
    freqs[m] = std::pow(base, -2.0 * m / static_cast<double>(d_part));
  }
  return freqs;
}

RopeTable::RopeTable(Axis axis, double base, int d_part, int max_index)
    : RopeTable(from_frequencies(axis, base, rope_frequencies(base, d_part), max_index)) {}

RopeTable RopeTable::from_frequencies(Axis axis, double base, std::vector<double> freqs,
                                      int max_index) {
  if (max_index < 0) throw ConfigError("rope max_index must be >= 0");
  RopeTable table;
  table.axis_ = axis;
  table.base_ = base;
  table.max_index_ = max_index;
  table.freqs_ = std::move(freqs);
  const std::size_t nf = table.freqs_.size();
  table.cos_.resize((max_index + 1) * nf);
  table.sin_.resize((max_index + 1) * nf);
  for (int p = 0; p <= max_index; ++p) {
    for (std::size_t m = 0; m < nf; ++m) {
      const double angle = p * table.freqs_[m];
      table.cos_[p * nf + m] = std::cos(angle);
      table.sin_[p * nf + m] = std::sin(angle);
    }
  }
  return table;
}

std::size_t RopeTable::offset(int index) const {
  if (index < 0 || index > max_index_) {
    throw ConfigError(std::string("rope index ") + std::to_string(index) + " on axis " +
                      axis_name(axis_) + " outside [0, " + std::to_string(max_index_) +
                      "]; raise max_positions");
  }
  return static_cast<std::size_t>(index) * freqs_.size();
}

template <std::floating_point T>
void RopeTable::gather(std::span<const int> indices, std::vector<T>& cos_out,
                       std::vector<T>& sin_out) const {
  const std::size_t nf = freqs_.size();
  cos_out.resize(indices.size() * nf);
  sin_out.resize(indices.size() * nf);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t base = offset(indices[i]);
    for (std::size_t m = 0; m < nf; ++m) {
      cos_out[i * nf + m] = static_cast<T>(cos_[base + m]);
      sin_out[i * nf + m] = static_cast<T>(sin_[base + m]);
    }
  }
}

NativeRopeTables NativeRopeTables::build(const NativeAttentionConfig& cfg, int max_index) {
  NativeRopeTables tables;
  tables.axes[0] = RopeTable(Axis::kT, cfg.beta_t, cfg.d_head_t, max_index);
  tables.axes[1] = RopeTable(Axis::kH, cfg.beta_h, cfg.d_head_h, max_index);
  tables.axes[2] = RopeTable(Axis::kW, cfg.beta_w, cfg.d_head_w, max_index);
  return tables;
}

std::vector<PositionTriple> allocate_positions(const SequenceLayout& layout) {
  std::vector<PositionTriple> out;
  out.reserve(layout.total_len());
  int next_t = 0;
  for (const auto& segment : layout.segments) {
    if (const auto* text = std::get_if<TextRun>(&segment)) {
      for (int i = 0; i < text->n_tokens; ++i) out.push_back({next_t++, 0, 0});
    } else if (const auto* image = std::get_if<ImageGrid>(&segment)) {
      for (int r = 0; r < image->h_tokens; ++r) {
        for (int c = 0; c < image->w_tokens; ++c) out.push_back({next_t, r, c});
      }
      ++next_t;
    } else {
      const auto& video = std::get<VideoClip>(segment);
      for (int f = 0; f < video.n_frames; ++f) {
        for (int r = 0; r < video.h_tokens; ++r) {
          for (int c = 0; c < video.w_tokens; ++c) out.push_back({next_t + f, r, c});
        }
      }
      next_t += video.n_frames;
    }
  }
  return out;
}

std::vector<PositionTriple> allocate_positions_1d(const SequenceLayout& layout) {
  const std::size_t n = layout.total_len();
  std::vector<PositionTriple> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].t = static_cast<int>(i);
  return out;
}

template <std::floating_point T>
void rotate_part(std::span<T> part, int index, const RopeTable& table) {
  if (part.size() != 2 * static_cast<std::size_t>(table.n_freqs())) {
    throw ConfigError(std::string("rope part on axis ") + axis_name(table.axis()) + " has width " +
                      std::to_string(part.size()) + ", table expects " +
                      std::to_string(2 * table.n_freqs()));
  }
  for (int m = 0; m < table.n_freqs(); ++m) {
    const T c = static_cast<T>(table.cos(index, m));
    const T s = static_cast<T>(table.sin(index, m));
    const T x0 = part[2 * m];
    const T x1 = part[2 * m + 1];
    part[2 * m] = x0 * c - x1 * s;
    part[2 * m + 1] = x0 * s + x1 * c;
  }
}

template <std::floating_point T>
HeadParts<T> apply_native_rope(HeadParts<T> parts, const PositionTriple& pos,
                               const NativeRopeTables& tables) {
  rotate_part<T>(parts.t, pos.t, tables[Axis::kT]);
  rotate_part<T>(parts.h, pos.h, tables[Axis::kH]);
  rotate_part<T>(parts.w, pos.w, tables[Axis::kW]);
  return parts;
}

template <std::floating_point T>
std::vector<T> apply_1d_rope(std::span<const T> part, int t, double base) {
  if (part.size() % 2 != 0) throw ConfigError("1D rope needs an even width");
  const auto freqs = rope_frequencies(base, static_cast<int>(part.size()));
  std::vector<T> out(part.begin(), part.end());
  for (std::size_t m = 0; m < freqs.size(); ++m) {
    const double angle = t * freqs[m];
    const T c = static_cast<T>(std::cos(angle));
    const T s = static_cast<T>(std::sin(angle));
    out[2 * m] = part[2 * m] * c - part[2 * m + 1] * s;
    out[2 * m + 1] = part[2 * m] * s + part[2 * m + 1] * c;
  }
  return out;
}

#define NEO_INSTANTIATE(T)                                                                   \
  template void RopeTable::gather<T>(std::span<const int>, std::vector<T>&, std::vector<T>&) \
      const;                                                                                 \
  template void rotate_part<T>(std::span<T>, int, const RopeTable&);                         \
  template HeadParts<T> apply_native_rope<T>(HeadParts<T>, const PositionTriple&,            \
                                             const NativeRopeTables&);                       \
  template std::vector<T> apply_1d_rope<T>(std::span<const T>, int, double);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)
NEO_INSTANTIATE(long double)
#undef NEO_INSTANTIATE

}  // namespace neo
