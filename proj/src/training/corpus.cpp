#include "neo/training/corpus.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "neo/core/errors.hpp"
#include "neo/core/rng.hpp"

namespace neo {

namespace {

constexpr std::array<std::array<float, 3>, Vocabulary::kNumColors> kPalette = {{
    {1.0f, 0.0f, 0.0f},   {0.0f, 1.0f, 0.0f},   {0.0f, 0.0f, 1.0f},  {1.0f, 1.0f, 0.0f},
    {0.0f, 1.0f, 1.0f},   {1.0f, 0.0f, 1.0f},   {1.0f, 1.0f, 1.0f},  {0.0f, 0.0f, 0.0f},
    {0.5f, 0.5f, 0.5f},   {1.0f, 0.5f, 0.0f},   {0.5f, 0.0f, 0.5f},  {1.0f, 0.75f, 0.8f},
    {0.6f, 0.3f, 0.1f},   {0.5f, 0.5f, 0.0f},   {0.0f, 0.0f, 0.5f},  {0.0f, 0.5f, 0.5f},
}};

constexpr char kMagic[8] = {'N', 'E', 'O', 'C', 'O', 'R', 'P', '1'};

void check_palette(int palette_size) {
  if (palette_size < 1 || palette_size > Vocabulary::kNumColors) {
    throw ConfigError("palette_size " + std::to_string(palette_size) +
                      " exceeds the vocabulary's " + std::to_string(Vocabulary::kNumColors) +
                      " colour words");
  }
}

// Little-endian scalar I/O.
template <typename U>
void put(std::ostream& out, U value) {
  static_assert(sizeof(U) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

template <typename U>
U get(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("corpus file is truncated");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<U>(bits);
}

std::int32_t get_count(std::istream& in, const char* what) {
  const auto v = get<std::int32_t>(in);
  if (v < 0 || v > (1 << 26)) throw FormatError(std::string("corpus record has bad ") + what);
  return v;
}

}  // namespace

SequenceLayout SyntheticSample::layout() const {
  SequenceLayout l;
  if (kind == SampleKind::kMultimodal) {
    l.segments = {TextRun{1}, ImageGrid{rows, cols},
                  TextRun{static_cast<int>(caption.size())}};
  } else {
    l.segments = {TextRun{static_cast<int>(caption.size())}};
  }
  return l;
}

std::vector<std::vector<int>> SyntheticSample::text_ids() const {
  if (kind == SampleKind::kMultimodal) return {{Vocabulary::kBos}, caption};
  return {caption};
}

std::vector<VisualInput> SyntheticSample::visuals() const {
  if (kind == SampleKind::kMultimodal) return {VisualInput{{image}}};
  return {};
}

std::array<float, 3> palette_rgb(int color) {
  check_palette(color + 1);
  return kPalette[color];
}

std::vector<int> grid_caption(int rows, int cols, std::span<const int> cells) {
  if (cells.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("grid has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(rows * cols));
  }
  const auto& vocab = Vocabulary::toy();
  std::vector<int> caption;
  for (int i = 0; i < rows * cols; ++i) {
    caption.push_back(vocab.number_id(i / cols));
    caption.push_back(vocab.number_id(i % cols));
    caption.push_back(vocab.color_id(cells[i]));
  }
  caption.push_back(Vocabulary::kEos);
  return caption;
}

Image render_grid(int rows, int cols, std::span<const int> cells, int cell_pixels) {
  if (cells.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("grid has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(rows * cols));
  }
  Image img = Image::filled(rows * cell_pixels, cols * cell_pixels, 3, 0.0f);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto rgb = palette_rgb(cells[(y / cell_pixels) * cols + x / cell_pixels]);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
    }
  }
  return img;
}

std::vector<SyntheticSample> gen_corpus(int n, int rows, int cols, int palette_size,
                                        std::uint64_t seed) {
  check_palette(palette_size);
  if (rows < 1 || cols < 1) throw ConfigError("grid must have at least one cell");
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    SyntheticSample s;
    s.kind = SampleKind::kMultimodal;
    s.rows = rows;
    s.cols = cols;
    s.palette_size = palette_size;
    for (int c = 0; c < rows * cols; ++c) s.cells.push_back(rng.uniform_int(0, palette_size - 1));
    s.caption = grid_caption(rows, cols, s.cells);
    s.image = render_grid(rows, cols, s.cells);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticSample> gen_text_corpus(int n, int rows, int cols, int palette_size,
                                             std::uint64_t seed) {
  check_palette(palette_size);
  const auto& vocab = Vocabulary::toy();
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    SyntheticSample s;
    s.kind = SampleKind::kTextOnly;
    s.caption.push_back(Vocabulary::kBos);
    if (rng.bernoulli(0.5)) {
      const int start = rng.uniform_int(0, Vocabulary::kNumNumbers - 1);
      const int len = rng.uniform_int(3, 6);
      for (const char* w : {"count", "from"}) s.caption.push_back(vocab.id(w));
      s.caption.push_back(vocab.number_id(start));
      s.caption.push_back(vocab.id(":"));
      for (int k = 0; k < len; ++k) {
        s.caption.push_back(vocab.number_id((start + k) % Vocabulary::kNumNumbers));
      }
    } else {
      std::vector<int> colors(rows * cols);
      for (int& c : colors) c = rng.uniform_int(0, palette_size - 1);
      const auto listing = grid_caption(rows, cols, colors);
      s.caption.insert(s.caption.end(), listing.begin(), listing.end() - 1);
    }
    s.caption.push_back(Vocabulary::kEos);
    out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<SyntheticSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  put<std::int32_t>(out, static_cast<std::int32_t>(samples.size()));
  for (const auto& s : samples) {
    put<std::int32_t>(out, s.kind == SampleKind::kMultimodal ? 1 : 0);
    put<std::int32_t>(out, s.rows);
    put<std::int32_t>(out, s.cols);
    put<std::int32_t>(out, s.palette_size);
    put<std::int32_t>(out, static_cast<std::int32_t>(s.cells.size()));
    for (int c : s.cells) put<std::int32_t>(out, c);
    put<std::int32_t>(out, static_cast<std::int32_t>(s.caption.size()));
    for (int id : s.caption) put<std::int32_t>(out, id);
    put<std::int32_t>(out, s.image.height);
    put<std::int32_t>(out, s.image.width);
    put<std::int32_t>(out, s.image.channels);
    for (float v : s.image.data) put<float>(out, v);
  }
  if (!out) throw FormatError("cannot write corpus to " + path.string());
}

std::vector<SyntheticSample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError(path.string() + " is not a corpus file");
  }
  const auto count = get_count(in, "sample count");
  std::vector<SyntheticSample> samples(count);
  for (auto& s : samples) {
    const auto kind = get<std::int32_t>(in);
    if (kind != 0 && kind != 1) throw FormatError("corpus record has unknown kind");
    s.kind = kind == 1 ? SampleKind::kMultimodal : SampleKind::kTextOnly;
    s.rows = get<std::int32_t>(in);
    s.cols = get<std::int32_t>(in);
    s.palette_size = get<std::int32_t>(in);
    s.cells.resize(get_count(in, "cell count"));
    for (int& c : s.cells) c = get<std::int32_t>(in);
    s.caption.resize(get_count(in, "caption length"));
    for (int& id : s.caption) id = get<std::int32_t>(in);
    s.image.height = get_count(in, "height");
    s.image.width = get_count(in, "width");
    s.image.channels = get_count(in, "channels");
    s.image.data.resize(static_cast<std::size_t>(s.image.height) * s.image.width *
                        s.image.channels);
    for (float& v : s.image.data) v = get<float>(in);
  }
  return samples;
}

}  // namespace neo
