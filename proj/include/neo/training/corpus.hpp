#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "neo/core/layout.hpp"
#include "neo/embedding/embedding.hpp"
#include "neo/embedding/vocab.hpp"

namespace neo {

enum class SampleKind { kMultimodal, kTextOnly };

// A multimodal sample is a grid of solid colour cells, one 32x32 cell per
// visual token, captioned cell by cell in raster order as "row col colour"
// (number words, then the colour name) and closed by <eos>.
// The sequence is `<bos> <img> [grid] </img> caption`. A text-only sample
// is a single text run that already starts with <bos>.
struct SyntheticSample {
  SampleKind kind = SampleKind::kTextOnly;
  int rows = 0;
  int cols = 0;
  int palette_size = 0;
  std::vector<int> cells;    // palette index per cell, raster order
  std::vector<int> caption;  // token ids
  Image image;               // empty for text-only samples

  SequenceLayout layout() const;  // before marker insertion
  std::vector<std::vector<int>> text_ids() const;
  std::vector<VisualInput> visuals() const;
};

// RGB in [0, 1] for toy palette entry `color`.
std::array<float, 3> palette_rgb(int color);

std::vector<int> grid_caption(int rows, int cols, std::span<const int> cells);

// Renders the grid with `cell_pixels` square cells.
Image render_grid(int rows, int cols, std::span<const int> cells, int cell_pixels = 32);

// n captioned grids with cells drawn uniformly from the first palette_size
// colours. palette_size beyond the toy vocabulary's colour words throws.
std::vector<SyntheticSample> gen_corpus(int n, int rows, int cols, int palette_size,
                                        std::uint64_t seed);

// Language-only sentences: counting runs ("<bos> count from n3 : n3 n4 n5
// <eos>") and image-free captions of random rows x cols grids.
std::vector<SyntheticSample> gen_text_corpus(int n, int rows, int cols, int palette_size,
                                             std::uint64_t seed);

// Binary corpus file; layout documented in docs/corpus_format.md.
void write_corpus(const std::filesystem::path& path, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> read_corpus(const std::filesystem::path& path);

}  // namespace neo
