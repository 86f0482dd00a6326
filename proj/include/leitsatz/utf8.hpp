#pragma once

#include <cstddef>
#include <string>
#include <string_view>

// Minimal UTF-8 helpers for German legal text. Case mapping and character
// classes cover ASCII, Latin-1 and Latin Extended-A; everything else above
// U+0100 that is not general punctuation counts as a letter.
namespace leitsatz::utf8 {

struct CodePoint {
  char32_t value;
  std::size_t length;  // bytes consumed
};

/// Decodes the code point starting at byte `pos`. Invalid sequences decode
/// to U+FFFD with length 1.
CodePoint decode(std::string_view text, std::size_t pos);

void append(std::string& out, char32_t cp);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view text);

bool is_space(char32_t cp);
bool is_digit(char32_t cp);
bool is_letter(char32_t cp);
bool is_upper(char32_t cp);

inline bool is_alnum(char32_t cp) { return is_letter(cp) || is_digit(cp); }

std::string_view trim(std::string_view text);

/// Collapses every whitespace run to one ASCII space and trims both ends.
std::string collapse_whitespace(std::string_view text);

/// Removes every whitespace code point.
std::string strip_whitespace(std::string_view text);

std::size_t length(std::string_view text);

/// Converts a code point offset into a byte offset. Returns npos when the
/// offset lies beyond the end of the text.
std::size_t byte_offset(std::string_view text, std::size_t codepoint_offset);
std::size_t codepoint_offset(std::string_view text, std::size_t byte_offset);

}  // namespace leitsatz::utf8
