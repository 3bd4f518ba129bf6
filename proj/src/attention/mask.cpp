#include "neo/attention/mask.hpp"

#include "neo/core/errors.hpp"

namespace neo {

const char* attention_mode_name(AttentionMode mode) {
  return mode == AttentionMode::kCausal ? "causal" : "mixed";
}

AttentionMode parse_attention_mode(const std::string& text) {
  if (text == "causal") return AttentionMode::kCausal;
  if (text == "mixed") return AttentionMode::kMixed;
  throw ConfigError("unknown attention mode '" + text + "' (expected causal or mixed)");
}

MaskSpec::MaskSpec(std::vector<MaskBlock> blocks, std::size_t n)
    : blocks_(std::move(blocks)), block_of_(n, -1) {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (std::size_t t = blocks_[b].start; t < blocks_[b].end; ++t) {
      if (t >= n || block_of_[t] != -1) throw ConfigError("mask blocks overlap or overflow");
      block_of_[t] = static_cast<int>(b);
    }
  }
  for (int b : block_of_) {
    if (b < 0) throw ConfigError("mask blocks leave a token uncovered");
  }
}

std::vector<std::uint8_t> MaskSpec::dense() const {
  const std::size_t n = size();
  std::vector<std::uint8_t> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = allowed(i, j) ? 1 : 0;
  }
  return out;
}

std::string MaskSpec::ascii() const {
  const std::size_t n = size();
  std::string out;
  out.reserve(n * (n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out += allowed(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

MaskSpec build_mask(const SequenceLayout& layout, AttentionMode mode) {
  const bool bidi = mode == AttentionMode::kMixed;
  std::vector<MaskBlock> blocks;
  std::size_t pos = 0;
  for (const auto& segment : layout.segments) {
    if (const auto* text = std::get_if<TextRun>(&segment)) {
      const std::size_t end = pos + text->n_tokens;
      if (!blocks.empty() && blocks.back().kind == BlockKind::kText) {
        blocks.back().end = end;
      } else {
        blocks.push_back({BlockKind::kText, pos, end, false});
      }
      pos = end;
    } else if (const auto* image = std::get_if<ImageGrid>(&segment)) {
      const std::size_t len = static_cast<std::size_t>(image->h_tokens) * image->w_tokens;
      blocks.push_back({BlockKind::kImage, pos, pos + len, bidi});
      pos += len;
    } else {
      const auto& video = std::get<VideoClip>(segment);
      const std::size_t frame = static_cast<std::size_t>(video.h_tokens) * video.w_tokens;
      for (int f = 0; f < video.n_frames; ++f) {
        blocks.push_back({BlockKind::kVideoFrame, pos, pos + frame, bidi});
        pos += frame;
      }
    }
  }
  return MaskSpec(std::move(blocks), pos);
}

}  // namespace neo
