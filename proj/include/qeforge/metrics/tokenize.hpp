#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "qeforge/unicode.hpp"

namespace qeforge::metrics {

struct TokenizeOptions {
  bool lowercase = true;
  bool keep_punct = true;
};

/// Tercom-style tokenization: collapse whitespace, optionally lowercase, and
/// make every punctuation/symbol character (Unicode P* and S*) its own token.
/// With keep_punct off those characters are deleted instead.
inline std::vector<std::string> tokenize_tercom(std::string_view text, TokenizeOptions opt = {}) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  unicode::for_each_unit(text, [&](const unicode::Unit& raw) {
    // Lowercasing can expand one codepoint into several (U+0130); classify each.
    const std::string_view bytes = opt.lowercase ? unicode::lower_bytes(raw) : raw.bytes;
    unicode::for_each_unit(bytes, [&](const unicode::Unit& u) {
      if (unicode::is_space(u)) {
        flush();
      } else if (unicode::is_punct_or_symbol(u)) {
        if (opt.keep_punct) {
          flush();
          tokens.emplace_back(u.bytes);
        }
      } else {
        current += u.bytes;
      }
    });
  });
  flush();
  return tokens;
}

}  // namespace qeforge::metrics
