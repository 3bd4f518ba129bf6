#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neo/core/layout.hpp"

namespace neo {

// kMixed: tokens of one image (or one video frame) see each other both ways,
// everything else is causal. kCausal: plain lower-triangular visibility.
enum class AttentionMode { kCausal, kMixed };

const char* attention_mode_name(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& text);

enum class BlockKind { kText, kImage, kVideoFrame };

struct MaskBlock {
  BlockKind kind = BlockKind::kText;
  std::size_t start = 0;  // first token
  std::size_t end = 0;    // one past the last token
  bool bidirectional = false;
};

// Block-structured visibility over a (marker-expanded) layout.
class MaskSpec {
 public:
  MaskSpec() = default;
  MaskSpec(std::vector<MaskBlock> blocks, std::size_t n);

  std::size_t size() const { return block_of_.size(); }
  const std::vector<MaskBlock>& blocks() const { return blocks_; }
  int block_of(std::size_t token) const { return block_of_[token]; }

  bool allowed(std::size_t i, std::size_t j) const {
    if (j <= i) return true;
    const int b = block_of_[i];
    return b == block_of_[j] && blocks_[b].bidirectional;
  }

  // Row-major n x n with 1 = allowed.
  std::vector<std::uint8_t> dense() const;
  // One row of 0/1 characters per query token.
  std::string ascii() const;

 private:
  std::vector<MaskBlock> blocks_;
  std::vector<int> block_of_;
};

// Contiguous text tokens (marker runs included) form one causal block; each
// image and each video frame forms its own block.
MaskSpec build_mask(const SequenceLayout& layout, AttentionMode mode = AttentionMode::kMixed);

}  // namespace neo
