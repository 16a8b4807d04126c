// Tokenization shared by entity linking and the dialog vocabulary.
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kbrd {

/// Lowercases ASCII, splits on whitespace and emits every punctuation
/// character as its own token. Bytes >= 0x80 are kept inside words so UTF-8
/// letters survive.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens with punctuation removed: lowercase, punctuation stripped,
/// whitespace collapsed.
std::vector<std::string> normalized_tokens(std::string_view text);

/// normalized_tokens joined by single spaces.
std::string normalize(std::string_view text);

bool is_punctuation_token(std::string_view tok);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace kbrd
