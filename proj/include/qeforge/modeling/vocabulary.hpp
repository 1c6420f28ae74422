#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qeforge/error.hpp"
#include "qeforge/modeling/render.hpp"

namespace qeforge::modeling {

/// Token table with stable ids. Ids are assigned in insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::span<const std::string> tokens) {
    for (const auto& t : tokens) add(t);
  }

  int add(std::string_view token) {
    if (index_.count(std::string(token)))
      throw ValidationError("token '" + std::string(token) + "' already in vocabulary");
    const int id = static_cast<int>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<int> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view token) const { return find(token).has_value(); }
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) v.add(line);
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline std::string byte_token(unsigned char b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

/// Whitespace-separated pieces of `text`.
inline std::vector<std::string_view> whitespace_pieces(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n')) ++i;
    const std::size_t start = i;
    while (i < text.size() && !(text[i] == ' ' || text[i] == '\t' || text[i] == '\n')) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

/// Word list for a toy backend's base vocabulary.
struct VocabSpec {
  std::vector<std::string> words;
};

/// Most frequent whitespace tokens across `texts` (ties broken alphabetically).
inline VocabSpec build_vocab_spec(std::span<const std::string> texts, std::size_t max_words,
                                  std::size_t min_count = 1) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto piece : whitespace_pieces(t)) ++counts[std::string(piece)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  VocabSpec spec;
  for (const auto& [word, count] : ranked) {
    if (spec.words.size() >= max_words || count < min_count) break;
    spec.words.push_back(word);
  }
  return spec;
}

/// Base vocabulary: "<s>", "</s>", 256 byte-fallback tokens, then spec words
/// that are not already present. Domain tags are added later by extension.
inline Vocabulary base_vocabulary(const VocabSpec& spec) {
  Vocabulary v;
  v.add(SpecialTokens::bos);
  v.add(SpecialTokens::sep);
  for (int b = 0; b < 256; ++b) v.add(byte_token(static_cast<unsigned char>(b)));
  for (const auto& w : spec.words) {
    if (w == SpecialTokens::id_tag || w == SpecialTokens::ood_tag) continue;
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

}  // namespace qeforge::modeling
