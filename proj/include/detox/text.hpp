#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace detox::text {

// Decodes UTF-8; malformed byte sequences become U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

// Unicode general category P* membership.
bool is_punctuation(char32_t cp);
// Whitespace for word splitting: ASCII controls, space, and the common
// Unicode space separators.
bool is_space(char32_t cp);

std::vector<std::string> split_words(std::string_view s);
std::string join_words(const std::vector<std::string>& words);

}  // namespace detox::text
