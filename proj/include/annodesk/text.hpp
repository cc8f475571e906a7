#pragma once

// Small text utilities: UTF-8 scalar counting and lenient JSON preprocessing.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace annodesk::text {

/// Number of Unicode scalar values in a UTF-8 string. Span indices are
/// offsets in this unit. Continuation bytes are not counted; invalid lead
/// bytes count as one scalar each.
inline std::size_t scalar_length(std::string_view utf8) {
  std::size_t count = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xC0) != 0x80) ++count;
  }
  return count;
}

inline bool is_blank(std::string_view s) {
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v') return false;
  }
  return true;
}

/// Replaces trailing commas (a comma followed only by whitespace/comments and
/// then `]` or `}`) with a space. Strings and comments are left untouched and
/// the output has the same length as the input, so parser byte offsets still
/// point into the original text.
inline std::string blank_trailing_commas(std::string_view in) {
  std::string out(in);
  enum class Mode { code, string, line_comment, block_comment };
  Mode mode = Mode::code;
  std::size_t pending_comma = std::string::npos;

  for (std::size_t i = 0; i < out.size(); ++i) {
    const char c = out[i];
    const char next = i + 1 < out.size() ? out[i + 1] : '\0';
    switch (mode) {
      case Mode::string:
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          mode = Mode::code;
        }
        break;
      case Mode::line_comment:
        if (c == '\n') mode = Mode::code;
        break;
      case Mode::block_comment:
        if (c == '*' && next == '/') {
          mode = Mode::code;
          ++i;
        }
        break;
      case Mode::code:
        if (c == '/' && next == '/') {
          mode = Mode::line_comment;
          ++i;
        } else if (c == '/' && next == '*') {
          mode = Mode::block_comment;
          ++i;
        } else if (c == ',') {
          pending_comma = i;
        } else if (c == ']' || c == '}') {
          if (pending_comma != std::string::npos) out[pending_comma] = ' ';
          pending_comma = std::string::npos;
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
          // whitespace keeps a pending comma alive
        } else {
          if (c == '"') mode = Mode::string;
          pending_comma = std::string::npos;
        }
        break;
    }
  }
  return out;
}

/// 1-based line and column of a byte offset.
inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

inline std::string to_hex(const unsigned char* data, std::size_t size) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(size * 2);
  for (std::size_t i = 0; i < size; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0x0F]);
  }
  return out;
}

/// 64-bit FNV-1a; used to derive deterministic seeds, not for security.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace annodesk::text
