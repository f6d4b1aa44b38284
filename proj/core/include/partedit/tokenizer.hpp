#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace partedit {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kFirstToken = 1;
inline constexpr TokenId kUnknownToken = 2;

/// Fixed word list; index is the token id.
std::span<const std::string_view> vocabulary();
std::size_t vocabulary_size();

/// Lowercases and splits on whitespace, then prepends the first-token marker.
/// Out-of-vocabulary words become the unknown marker.
std::vector<TokenId> tokenize(std::string_view text);

/// Inverse of tokenize for in-vocabulary text; markers other than unknown are dropped.
std::string detokenize(std::span<const TokenId> tokens);

/// Lowercase, single-space separated form of text.
std::string normalize_text(std::string_view text);

/// Lowercased whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace partedit
