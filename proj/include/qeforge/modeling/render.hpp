#pragma once

#include <string>
#include <string_view>

#include "qeforge/corpus.hpp"
#include "qeforge/error.hpp"

namespace qeforge::modeling {

enum class TagMode { TAG, NOTAG };

inline std::string_view to_string(TagMode m) { return m == TagMode::TAG ? "TAG" : "NOTAG"; }

inline TagMode parse_tag_mode(std::string_view s) {
  if (s == "TAG") return TagMode::TAG;
  if (s == "NOTAG") return TagMode::NOTAG;
  throw ValidationError("unknown tag mode '" + std::string(s) + "' (expected TAG or NOTAG)");
}

struct SpecialTokens {
  static constexpr std::string_view bos = "<s>";
  static constexpr std::string_view sep = "</s>";
  static constexpr std::string_view id_tag = "<ID>";
  static constexpr std::string_view ood_tag = "<OOD>";
};

inline std::string_view domain_tag(Domain d) {
  return d == Domain::ID ? SpecialTokens::id_tag : SpecialTokens::ood_tag;
}

/// "<s> SRC </s> TRG <Tag> </s>" in TAG mode, "<s> SRC </s> TRG </s>" otherwise.
inline std::string render_input(std::string_view src, std::string_view tgt, Domain domain,
                                TagMode mode) {
  std::string out;
  out.reserve(src.size() + tgt.size() + 20);
  out += SpecialTokens::bos;
  out += ' ';
  out += src;
  out += ' ';
  out += SpecialTokens::sep;
  out += ' ';
  out += tgt;
  out += ' ';
  if (mode == TagMode::TAG) {
    out += domain_tag(domain);
    out += ' ';
  }
  out += SpecialTokens::sep;
  return out;
}

inline std::string render_input(const QESample& s, TagMode mode) {
  return render_input(s.src, s.tgt, s.domain, mode);
}

}  // namespace qeforge::modeling
