#include "neo/embedding/vocab.hpp"

#include <sstream>

#include "neo/core/errors.hpp"

namespace neo {

namespace {

const char* const kColorNames[Vocabulary::kNumColors] = {
    "red",  "green", "blue",  "yellow", "cyan", "magenta", "white", "black",
    "gray", "orange", "purple", "pink",  "brown", "olive", "navy",  "teal"};

const char* const kGlueWords[] = {"count", "from", ":",     "row",  "col",  "is",
                                  "a",     "image", "of",   "the",  "and",  "then",
                                  "grid",  "cell",  "at",   "with", "left", "right",
                                  "top",   "bottom", "next", "end",  "text", "color",
                                  "many",  "few",   "all"};

std::vector<std::string> toy_tokens() {
  std::vector<std::string> tokens{"<pad>", "<bos>", "<eos>", "<img>", "</img>"};
  for (const char* c : kColorNames) tokens.emplace_back(c);
  for (int n = 0; n < Vocabulary::kNumNumbers; ++n) tokens.push_back("n" + std::to_string(n));
  for (const char* w : kGlueWords) tokens.emplace_back(w);
  return tokens;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  static const char* const reserved[] = {"<pad>", "<bos>", "<eos>", "<img>", "</img>"};
  if (tokens_.size() < 5) throw ConfigError("vocabulary needs the five reserved tokens");
  for (int i = 0; i < 5; ++i) {
    if (tokens_[i] != reserved[i]) {
      throw ConfigError("vocabulary id " + std::to_string(i) + " must be " + reserved[i]);
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

const Vocabulary& Vocabulary::toy() {
  static const Vocabulary vocab(toy_tokens());
  return vocab;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end()) throw ConfigError("token '" + token + "' not in vocabulary");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::istringstream in(text);
  std::vector<int> ids;
  for (std::string word; in >> word;) ids.push_back(id(word));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

int Vocabulary::color_id(int color) const {
  if (color < 0 || color >= kNumColors) {
    throw ConfigError("colour " + std::to_string(color) + " outside the toy palette");
  }
  return id(kColorNames[color]);
}

int Vocabulary::number_id(int n) const {
  if (n < 0 || n >= kNumNumbers) throw ConfigError("number " + std::to_string(n) + " out of range");
  return id("n" + std::to_string(n));
}

}  // namespace neo
