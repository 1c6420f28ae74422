#!/usr/bin/env python3
"""Independent tokenizer used to freeze tests/fixtures/tokenizer_conformance.jsonl.

Convention: per-codepoint lowercasing, whitespace = str.isspace(), every
Unicode P*/S* codepoint is a standalone token (or is deleted when punctuation
is disabled).
"""
import json
import sys
import unicodedata


def tokenize(text, lowercase=True, keep_punct=True):
    if lowercase:
        text = "".join(c.lower() for c in text)
    tokens, cur = [], []
    for c in text:
        if c.isspace():
            if cur:
                tokens.append("".join(cur))
                cur = []
        elif unicodedata.category(c)[0] in "PS":
            if keep_punct:
                if cur:
                    tokens.append("".join(cur))
                    cur = []
                tokens.append(c)
        else:
            cur.append(c)
    if cur:
        tokens.append("".join(cur))
    return tokens


SAMPLES = [
    "Hello, world!",
    "ABC",
    "  a   b ",
    "",
    "   ",
    "good day",
    "Guten Tag",
    "It's 3.5% cheaper -- isn't it?",
    "e-mail: john.doe@example.com",
    "(parenthetical) [bracketed] {braced}",
    "\"quoted\" 'single'",
    "Tabs\tand\nnewlines\r\nmixed",
    "a,b,c",
    "...",
    "Ünïcödé ÀÉÎÕÜ",
    "Straße ẞ",
    "ΣΊΣΥΦΟΣ",
    "Привет, мир!",
    "你好，世界！",
    "日本語のテキスト。",
    "Čeština: příliš žluťoučký kůň.",
    "Română: ȘȚĂÎÂ",
    "$100 + €50 = ¥?",
    "x² ± y³ ≤ z",
    "→ arrows ← ↔",
    "emoji 😀 test 👍🏽",
    "non breaking space",
    "em space and thin",
    "line separator",
    "İstanbul",
    "ǅ titlecase ǈ",
    "MiXeD CaSe WoRdS",
    "numbers 12,345.67 and -8",
    "#hashtag @mention",
    "C++ & C# <tags>",
    "a/b\\c|d",
    "under_score and hyphen-ated",
    "quote «guillemets» „low“",
    "ellipsis… and—dash – en",
    "apostrophe’s curly",
    "¿Qué? ¡Sí!",
    "Ω ohm vs ω",
    "ﬁ ligature",
    "Ⅻ roman",
    "Ｆｕｌｌｗｉｄｔｈ！",
    "ΑΒΓ αβγ",
    "á combining",
    "tab\tonly",
    "trailing punctuation!!!",
    "k=v;x=y",
    "^caret~tilde`grave",
    "50°C",
    "§ 12 ¶",
    "© ® ™",
    "a.b.c.",
    "'leading",
    "mid'dle",
    "ÉCOLE Élève",
    "Добрый день",
    "ĲSSELMEER",
]


def main():
    out = sys.stdout
    for text in SAMPLES:
        for lowercase in (True, False):
            for keep_punct in (True, False):
                rec = {
                    "text": text,
                    "lowercase": lowercase,
                    "keep_punct": keep_punct,
                    "tokens": tokenize(text, lowercase, keep_punct),
                }
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
