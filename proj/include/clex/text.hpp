#pragma once

// UTF-8 handling and tweet normalization.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clex {

namespace utf8 {

/// Decodes UTF-8, dropping invalid bytes. `invalid` receives the number of
/// dropped bytes.
inline std::vector<char32_t> decode(std::string_view s, std::size_t* invalid = nullptr) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t bad = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = p[i];
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    }
    int len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2, cp = c & 0x1F, min = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3, cp = c & 0x0F, min = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4, cp = c & 0x07, min = 0x10000;
    } else {
      ++bad, ++i;
      continue;
    }
    if (i + len > n) {
      ++bad, ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      unsigned char cc = p[i + k];
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      ++bad, ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  if (invalid) *invalid = bad;
  return out;
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(const char32_t* b, const char32_t* e) {
  std::string out;
  for (; b != e; ++b) append(out, *b);
  return out;
}

}  // namespace utf8

namespace chars {

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == 0x00A0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200B) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

/// Skin tones, variation selectors and the zero-width joiner.
inline bool is_emoji_modifier(char32_t c) {
  return (c >= 0x1F3FB && c <= 0x1F3FF) || c == 0xFE0E || c == 0xFE0F || c == 0x200D;
}

inline bool is_emoji(char32_t c) {
  if (is_emoji_modifier(c)) return false;
  if (c >= 0x1F000 && c <= 0x1FAFF) return true;
  if (c >= 0x2600 && c <= 0x27BF) return true;
  if (c >= 0x2300 && c <= 0x23FF) return true;
  switch (c) {
    case 0x00A9: case 0x00AE: case 0x203C: case 0x2049: case 0x2122: case 0x2139:
    case 0x2B05: case 0x2B06: case 0x2B07: case 0x2B1B: case 0x2B1C: case 0x2B50:
    case 0x2B55: case 0x3030: case 0x303D: case 0x3297: case 0x3299:
      return true;
    default:
      break;
  }
  return c >= 0x2194 && c <= 0x2199;
}

inline bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
         (c >= 0x7B && c <= 0x7E);
}

inline bool is_name_char(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') ||
         c == U'_';
}

// ASCII, Latin-1, basic Greek and Cyrillic.
inline char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

}  // namespace chars

struct NormalizeStats {
  std::size_t invalid_bytes = 0;
};

namespace detail {

inline bool starts_with_ci(const std::vector<char32_t>& s, std::size_t b, std::size_t e,
                           std::string_view prefix) {
  if (e - b < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k)
    if (chars::to_lower(s[b + k]) != static_cast<char32_t>(prefix[k])) return false;
  return true;
}

inline void emit_chunk(const std::vector<char32_t>& cps, std::size_t b, std::size_t e,
                       std::vector<std::string>& out) {
  // Leading punctuation ('#' and '@' stay attached to what follows).
  while (b < e && chars::is_ascii_punct(cps[b]) && cps[b] != U'#' && cps[b] != U'@') {
    out.push_back(std::string(1, static_cast<char>(cps[b])));
    ++b;
  }
  std::vector<std::string> trailing;
  while (e > b && chars::is_ascii_punct(cps[e - 1]) && cps[e - 1] != U'#') {
    trailing.push_back(std::string(1, static_cast<char>(cps[e - 1])));
    --e;
  }
  if (b < e) {
    if (starts_with_ci(cps, b, e, "http://") || starts_with_ci(cps, b, e, "https://") ||
        starts_with_ci(cps, b, e, "www.")) {
      out.emplace_back("url");
    } else {
      std::string core;
      std::size_t i = b;
      if (cps[i] == U'@' && i + 1 < e && chars::is_name_char(cps[i + 1])) {
        core = "user";
        i += 1;
        while (i < e && chars::is_name_char(cps[i])) ++i;
      }
      for (; i < e; ++i) utf8::append(core, chars::to_lower(cps[i]));
      out.push_back(std::move(core));
    }
  }
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace detail

/// Lowercases, replaces mentions and URLs by "user"/"url", emits every emoji
/// as its own token, drops emoji modifiers and splits edge punctuation.
/// The result is a fixed point: normalizing the joined output reproduces it.
inline std::vector<std::string> normalize_tweet(std::string_view text,
                                                NormalizeStats* stats = nullptr) {
  std::size_t invalid = 0;
  std::vector<char32_t> raw = utf8::decode(text, &invalid);
  if (stats) stats->invalid_bytes += invalid;

  std::vector<char32_t> cps;
  cps.reserve(raw.size());
  for (char32_t c : raw)
    if (!chars::is_emoji_modifier(c)) cps.push_back(c);

  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= cps.size(); ++i) {
    const bool end = i == cps.size();
    if (end || chars::is_space(cps[i]) || chars::is_emoji(cps[i])) {
      if (start < i) detail::emit_chunk(cps, start, i, out);
      if (!end && chars::is_emoji(cps[i])) {
        std::string tok;
        utf8::append(tok, cps[i]);
        out.push_back(std::move(tok));
      }
      start = i + 1;
    }
  }
  return out;
}

}  // namespace clex
