#include "neo/embedding/image.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "neo/core/errors.hpp"

namespace neo {

namespace {

std::filesystem::path header_path(const std::filesystem::path& path) {
  return path.string() + ".hdr";
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

Image Image::filled(int height, int width, int channels, float value) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ConfigError("image dimensions must be positive");
  }
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(height) * width * channels, value);
  return img;
}

template <std::floating_point T>
Tensor<T> image_rows(const Image& image) {
  const std::size_t hw = static_cast<std::size_t>(image.height) * image.width;
  if (image.data.size() != hw * image.channels) {
    throw ShapeError("image data holds " + std::to_string(image.data.size()) +
                     " values, header says " + std::to_string(hw * image.channels));
  }
  std::vector<T> rows(hw * image.channels);
  for (int c = 0; c < image.channels; ++c) {
    for (std::size_t p = 0; p < hw; ++p) rows[p * image.channels + c] = image.data[c * hw + p];
  }
  return Tensor<T>({hw, static_cast<std::size_t>(image.channels)}, std::move(rows));
}

void write_image(const std::filesystem::path& path, const Image& image) {
  std::ofstream hdr(header_path(path));
  hdr << "height " << image.height << "\nwidth " << image.width << "\nchannels "
      << image.channels << "\ndtype f32\nlayout planar\n";
  if (!hdr) throw FormatError("cannot write image header for " + path.string());

  std::ofstream out(path, std::ios::binary);
  for (float v : image.data) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw FormatError("cannot write image data to " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream hdr(header_path(path));
  if (!hdr) throw FormatError("missing image header " + header_path(path).string());
  Image image;
  for (std::string key, value; hdr >> key >> value;) {
    if (key == "height") image.height = std::stoi(value);
    else if (key == "width") image.width = std::stoi(value);
    else if (key == "channels") image.channels = std::stoi(value);
    else if (key == "dtype" && value != "f32") throw FormatError("unsupported image dtype " + value);
    else if (key == "layout" && value != "planar") throw FormatError("unsupported layout " + value);
  }
  if (image.height <= 0 || image.width <= 0 || image.channels <= 0) {
    throw FormatError("image header lacks positive height/width/channels");
  }
  const std::size_t count = static_cast<std::size_t>(image.height) * image.width * image.channels;
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint32_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
  if (in.gcount() != static_cast<std::streamsize>(count * 4)) {
    throw FormatError("image data in " + path.string() + " is shorter than its header says");
  }
  image.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) image.data[i] = std::bit_cast<float>(to_le(raw[i]));
  return image;
}

template Tensor<float> image_rows<float>(const Image&);
template Tensor<double> image_rows<double>(const Image&);
template Tensor<long double> image_rows<long double>(const Image&);

}  // namespace neo
