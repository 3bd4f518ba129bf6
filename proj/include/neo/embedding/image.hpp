#pragma once

#include <filesystem>
#include <vector>

#include "neo/core/tensor.hpp"

namespace neo {

// Planar float image: data[(c * height + y) * width + x], values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  static Image filled(int height, int width, int channels, float value);
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Pixel-major view [height * width, channels] for the patch convolutions.
template <std::floating_point T>
Tensor<T> image_rows(const Image& image);

// Raw little-endian f32 planes at `path`, dimensions in `path` + ".hdr".
void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

}  // namespace neo
