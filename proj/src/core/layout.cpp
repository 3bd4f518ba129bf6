#include "neo/core/layout.hpp"

#include <sstream>

#include "neo/core/errors.hpp"

namespace neo {

namespace {

constexpr const char* kGrammar =
    "layout grammar: comma-separated items `t:N`, `img:HxW`, `vid:FxHxW` "
    "(all counts >= 1), e.g. \"t:3,img:2x2,t:1\"";

[[noreturn]] void bad_layout(const std::string& spec, const std::string& why) {
  throw ConfigError("bad layout spec '" + spec + "': " + why + "; " + kGrammar);
}

int parse_count(const std::string& spec, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    bad_layout(spec, "'" + text + "' is not a positive integer");
  }
  int value = 0;
  try {
    value = std::stoi(text);
  } catch (const std::exception&) {
    bad_layout(spec, "'" + text + "' is out of range");
  }
  if (value < 1) bad_layout(spec, "counts must be >= 1");
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(item);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

std::size_t segment_length(const Segment& segment) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, TextRun>) {
          return static_cast<std::size_t>(s.n_tokens);
        } else if constexpr (std::is_same_v<S, ImageGrid>) {
          return static_cast<std::size_t>(s.h_tokens) * s.w_tokens;
        } else {
          return static_cast<std::size_t>(s.n_frames) * s.h_tokens * s.w_tokens;
        }
      },
      segment);
}

bool is_visual(const Segment& segment) {
  return !std::holds_alternative<TextRun>(segment);
}

std::size_t SequenceLayout::total_len() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += segment_length(s);
  return n;
}

std::vector<Role> SequenceLayout::roles() const {
  std::vector<Role> out;
  out.reserve(total_len());
  for (const auto& s : segments) {
    out.insert(out.end(), segment_length(s), is_visual(s) ? Role::kVisual : Role::kText);
  }
  return out;
}

SequenceLayout parse_layout(const std::string& spec) {
  if (spec.empty()) bad_layout(spec, "empty");
  SequenceLayout layout;
  for (const auto& item : split(spec, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_layout(spec, "item '" + item + "' lacks ':'");
    const std::string kind = item.substr(0, colon);
    const auto dims = split(item.substr(colon + 1), 'x');
    if (kind == "t" && dims.size() == 1) {
      layout.segments.emplace_back(TextRun{parse_count(spec, dims[0])});
    } else if (kind == "img" && dims.size() == 2) {
      layout.segments.emplace_back(
          ImageGrid{parse_count(spec, dims[0]), parse_count(spec, dims[1])});
    } else if (kind == "vid" && dims.size() == 3) {
      layout.segments.emplace_back(VideoClip{parse_count(spec, dims[0]),
                                             parse_count(spec, dims[1]),
                                             parse_count(spec, dims[2])});
    } else {
      bad_layout(spec, "cannot parse item '" + item + "'");
    }
  }
  return layout;
}

std::string render_layout(const SequenceLayout& layout) {
  std::ostringstream out;
  bool first = true;
  for (const auto& seg : layout.segments) {
    if (!first) out << ',';
    first = false;
    std::visit(
        [&out](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, TextRun>) {
            out << "t:" << s.n_tokens;
          } else if constexpr (std::is_same_v<S, ImageGrid>) {
            out << "img:" << s.h_tokens << 'x' << s.w_tokens;
          } else {
            out << "vid:" << s.n_frames << 'x' << s.h_tokens << 'x' << s.w_tokens;
          }
        },
        seg);
  }
  return out.str();
}

}  // namespace neo
