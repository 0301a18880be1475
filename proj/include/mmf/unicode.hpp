#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmf::unicode {

/// Decodes UTF-8; malformed sequences become U+FFFD, so decoding is total.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view cps);
std::string encode_utf8(char32_t cp);

bool is_whitespace(char32_t cp);
bool is_default_punctuation(char32_t cp);
bool is_emoji(char32_t cp);
/// Emoji joiners and presentation selectors that belong to a preceding emoji.
bool is_emoji_modifier(char32_t cp);
/// Control and format characters with no textual content.
bool is_non_textual(char32_t cp);

/// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_words(std::string_view text);

}  // namespace mmf::unicode
