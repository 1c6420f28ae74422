#!/usr/bin/env python3
"""Regenerates include/qeforge/detail/unicode_tables.hpp from Python's unicodedata."""
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(0x110000):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def is_surrogate(cp):
    return 0xD800 <= cp <= 0xDFFF


def main():
    punct = ranges(lambda cp: not is_surrogate(cp)
                   and unicodedata.category(chr(cp))[0] in "PS")
    space = ranges(lambda cp: not is_surrogate(cp) and chr(cp).isspace())
    lower = []
    for cp in range(0x110000):
        if is_surrogate(cp):
            continue
        lo = chr(cp).lower()
        if lo != chr(cp):
            lower.append((cp, lo.encode("utf-8")))

    def esc(b):
        return "".join("\\x%02x" % c for c in b)

    w = sys.stdout.write
    w("// Generated by tools/gen_unicode_tables.py from Unicode %s. Do not edit.\n"
      % unicodedata.unidata_version)
    w("#pragma once\n\n#include <array>\n#include <cstdint>\n#include <string_view>\n\n")
    w("namespace qeforge::detail {\n\n")
    w("struct CodepointRange {\n  char32_t first;\n  char32_t last;\n};\n\n")
    w("struct LowerMapping {\n  char32_t codepoint;\n  std::string_view utf8;\n};\n\n")
    w('inline constexpr std::string_view kUnicodeVersion = "%s";\n\n'
      % unicodedata.unidata_version)
    for name, table in (("kPunctSymbolRanges", punct), ("kWhitespaceRanges", space)):
        w("inline constexpr std::array<CodepointRange, %d> %s{{\n" % (len(table), name))
        for a, b in table:
            w("    {0x%X, 0x%X},\n" % (a, b))
        w("}};\n\n")
    w("inline constexpr std::array<LowerMapping, %d> kLowerMappings{{\n" % len(lower))
    for cp, b in lower:
        w('    {0x%X, "%s"},\n' % (cp, esc(b)))
    w("}};\n\n}  // namespace qeforge::detail\n")


if __name__ == "__main__":
    main()
