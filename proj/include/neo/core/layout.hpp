#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace neo {

struct TextRun {
  int n_tokens = 0;
  auto operator<=>(const TextRun&) const = default;
};

struct ImageGrid {
  int h_tokens = 0;
  int w_tokens = 0;
  auto operator<=>(const ImageGrid&) const = default;
};

struct VideoClip {
  int n_frames = 0;
  int h_tokens = 0;
  int w_tokens = 0;
  auto operator<=>(const VideoClip&) const = default;
};

using Segment = std::variant<TextRun, ImageGrid, VideoClip>;

enum class Role { kText, kVisual };

std::size_t segment_length(const Segment& segment);
bool is_visual(const Segment& segment);

// Ordered modality segments. Token order is segment order.
struct SequenceLayout {
  std::vector<Segment> segments;

  std::size_t total_len() const;
  std::vector<Role> roles() const;
  bool operator==(const SequenceLayout&) const = default;
};

// Per-token rotary indices.
struct PositionTriple {
  int t = 0;
  int h = 0;
  int w = 0;
  bool operator==(const PositionTriple&) const = default;
};

// Grammar: comma-separated `t:N`, `img:HxW`, `vid:FxHxW`, all counts >= 1.
SequenceLayout parse_layout(const std::string& spec);
std::string render_layout(const SequenceLayout& layout);

}  // namespace neo
