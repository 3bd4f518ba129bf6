#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace neo {

// Whitespace tokenizer over a fixed symbol list. The first five ids are
// reserved: <pad>, <bos>, <eos>, <img>, </img>.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kImgStart = 3;
  static constexpr int kImgEnd = 4;
  static constexpr int kNumColors = 16;
  static constexpr int kNumNumbers = 16;

  explicit Vocabulary(std::vector<std::string> tokens);

  // 64 symbols: reserved ids, 16 colour names, number words n0..n15, and a
  // handful of glue words for the synthetic corpus.
  static const Vocabulary& toy();

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const std::string& text) const;
  std::string decode(std::span<const int> ids) const;

  // Toy-vocabulary helpers.
  int color_id(int color) const;
  int number_id(int n) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace neo
