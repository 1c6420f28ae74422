#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "qeforge/detail/unicode_tables.hpp"

namespace qeforge::unicode {

/// One decoded character and the bytes it came from. Malformed input yields
/// single-byte units with `valid == false`; they are passed through untouched.
struct Unit {
  char32_t codepoint = 0;
  std::string_view bytes;
  bool valid = true;
};

/// Decodes the UTF-8 unit starting at `pos`.
inline Unit decode_at(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto invalid = [&] { return Unit{b0, s.substr(pos, 1), false}; };
  if (b0 < 0x80) return {b0, s.substr(pos, 1), true};
  std::size_t len;
  char32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return invalid();
  }
  if (pos + len > s.size()) return invalid();
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[pos + k]);
    if ((b & 0xC0) != 0x80) return invalid();
    cp = (cp << 6) | (b & 0x3F);
  }
  // Overlong forms, surrogates and out-of-range values.
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return invalid();
  return {cp, s.substr(pos, len), true};
}

template <typename Visitor>
void for_each_unit(std::string_view s, Visitor&& visit) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    const Unit u = decode_at(s, pos);
    visit(u);
    pos += u.bytes.size();
  }
}

namespace detail {
template <std::size_t N>
bool in_ranges(const std::array<qeforge::detail::CodepointRange, N>& table, char32_t cp) {
  auto it = std::upper_bound(table.begin(), table.end(), cp,
                             [](char32_t v, const auto& r) { return v < r.first; });
  if (it == table.begin()) return false;
  --it;
  return cp >= it->first && cp <= it->last;
}
}  // namespace detail

inline bool is_space(const Unit& u) {
  return u.valid && detail::in_ranges(qeforge::detail::kWhitespaceRanges, u.codepoint);
}

/// General categories P* and S*.
inline bool is_punct_or_symbol(const Unit& u) {
  return u.valid && detail::in_ranges(qeforge::detail::kPunctSymbolRanges, u.codepoint);
}

/// Per-codepoint lowercase (no context-sensitive rules such as final sigma).
inline std::string_view lower_bytes(const Unit& u) {
  if (!u.valid) return u.bytes;
  const auto& table = qeforge::detail::kLowerMappings;
  auto it = std::lower_bound(table.begin(), table.end(), u.codepoint,
                             [](const auto& m, char32_t v) { return m.codepoint < v; });
  if (it != table.end() && it->codepoint == u.codepoint) return it->utf8;
  return u.bytes;
}

inline std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for_each_unit(s, [&](const Unit& u) { out += lower_bytes(u); });
  return out;
}

}  // namespace qeforge::unicode
