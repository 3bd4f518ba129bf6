#include "neo/core/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <type_traits>

#include "neo/core/errors.hpp"

namespace neo {

namespace {

constexpr char kMagic[8] = {'N', 'E', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::byte>& out, U value) {
  std::byte raw[sizeof(U)];
  std::memcpy(raw, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
  out.insert(out.end(), raw, raw + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    U value;
    auto raw = take(sizeof(U), what);
    std::byte tmp[sizeof(U)];
    std::copy(raw.begin(), raw.end(), tmp);
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + sizeof(U));
    std::memcpy(&value, tmp, sizeof(U));
    return value;
  }

  std::span<const std::byte> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType dtype) { return dtype == DType::kF32 ? 4 : 8; }

template <typename From, std::floating_point To>
std::vector<To> convert(std::span<const std::byte> payload) {
  std::vector<To> out(payload.size() / sizeof(From));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::byte tmp[sizeof(From)];
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(i * sizeof(From)), sizeof(From),
                tmp);
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + sizeof(From));
    From v;
    std::memcpy(&v, tmp, sizeof(From));
    out[i] = static_cast<To>(v);
  }
  return out;
}

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

const char* init_tag_name(InitTag tag) {
  switch (tag) {
    case InitTag::kStandard: return "standard";
    case InitTag::kZero: return "zero";
    case InitTag::kOnes: return "ones";
  }
  return "?";
}

template <std::floating_point T>
std::vector<T> CheckpointEntry::values_as() const {
  return dtype == DType::kF32 ? convert<float, T>(payload) : convert<double, T>(payload);
}

template <std::floating_point T>
std::vector<std::byte> encode_values(std::span<const T> values) {
  std::vector<std::byte> out;
  // Extended precision is stored as f64, matching dtype_of.
  using Stored = std::conditional_t<sizeof(T) == 4, float, double>;
  out.reserve(values.size() * sizeof(Stored));
  for (const T v : values) put_le(out, static_cast<Stored>(v));
  return out;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  std::set<std::string> names;
  for (const auto& e : ckpt.entries) {
    if (!names.insert(e.name).second) {
      throw FormatError("checkpoint: duplicate entry name '" + e.name + "'");
    }
    if (e.payload.size() != shape_numel(e.shape) * dtype_size(e.dtype)) {
      throw FormatError("checkpoint: entry '" + e.name + "' payload does not match its shape");
    }
  }
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    for (char c : e.name) out.push_back(static_cast<std::byte>(c));
    out.push_back(static_cast<std::byte>(e.dtype));
    out.push_back(static_cast<std::byte>(e.trainable ? 1 : 0));
    out.push_back(static_cast<std::byte>(e.init_tag));
    out.push_back(std::byte{0});
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(out, d);
    put_le<std::uint64_t>(out, e.payload.size());
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  Reader in(bytes);
  const auto magic = in.take(sizeof(kMagic), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic, kMagic + sizeof(kMagic),
                  [](std::byte a, char b) { return a == static_cast<std::byte>(b); })) {
    throw FormatError("checkpoint: bad magic");
  }
  if (const auto v = in.get<std::uint32_t>("version"); v != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  }
  const auto count = in.get<std::uint32_t>("entry count");
  Checkpoint ckpt;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint32_t>("name length");
    const auto name = in.take(name_len, "name");
    e.name.resize(name_len);
    std::transform(name.begin(), name.end(), e.name.begin(),
                   [](std::byte b) { return static_cast<char>(b); });
    const auto dtype = in.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("checkpoint: entry '" + e.name + "' has unknown dtype");
    e.dtype = static_cast<DType>(dtype);
    e.trainable = in.get<std::uint8_t>("trainable flag") != 0;
    const auto tag = in.get<std::uint8_t>("init tag");
    if (tag > 2) throw FormatError("checkpoint: entry '" + e.name + "' has unknown init tag");
    e.init_tag = static_cast<InitTag>(tag);
    in.get<std::uint8_t>("reserved");
    const auto rank = in.get<std::uint32_t>("rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(in.get<std::uint64_t>("dims"));
    const auto payload_bytes = in.get<std::uint64_t>("payload size");
    if (payload_bytes != shape_numel(e.shape) * dtype_size(e.dtype)) {
      throw FormatError("checkpoint: entry '" + e.name + "' payload does not match its shape");
    }
    const auto payload = in.take(payload_bytes, "payload");
    e.payload.assign(payload.begin(), payload.end());
    if (!names.insert(e.name).second) {
      throw FormatError("checkpoint: duplicate entry name '" + e.name + "'");
    }
    ckpt.entries.push_back(std::move(e));
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes after last entry");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::transform(raw.begin(), raw.end(), bytes.begin(), [](char c) { return std::byte(c); });
  return decode_checkpoint(bytes);
}

template std::vector<float> CheckpointEntry::values_as<float>() const;
template std::vector<double> CheckpointEntry::values_as<double>() const;
template std::vector<std::byte> encode_values<float>(std::span<const float>);
template std::vector<std::byte> encode_values<double>(std::span<const double>);
template std::vector<long double> CheckpointEntry::values_as<long double>() const;
template std::vector<std::byte> encode_values<long double>(std::span<const long double>);

}  // namespace neo
