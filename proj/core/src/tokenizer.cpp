#include "partedit/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

namespace partedit {

namespace {

constexpr std::array<std::string_view, 35> kVocabulary{
    "<pad>",  "<first>",  "<unk>",                                                    //
    "the",    "its",      "a",        "chair",    "table",    "has", "is", "are",     //
    "much",   "slightly",                                                             //
    "legs",   "leg",      "seat",     "back",     "backrest", "armrests", "armrest",  //
    "arms",   "arm",                                                                  //
    "longer", "shorter",  "taller",   "higher",   "lower",    "deeper",   "shallower",
    "wider",  "broader",  "narrower", "thicker",  "thinner",  "skinnier"};

}  // namespace

std::span<const std::string_view> vocabulary() { return kVocabulary; }
std::size_t vocabulary_size() { return kVocabulary.size(); }

std::vector<std::string> split_words(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lowered);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> tokens{kFirstToken};
  for (const auto& w : split_words(text)) {
    const auto it = std::find(kVocabulary.begin() + 3, kVocabulary.end(), w);
    tokens.push_back(it == kVocabulary.end()
                         ? kUnknownToken
                         : static_cast<TokenId>(std::distance(kVocabulary.begin(), it)));
  }
  return tokens;
}

std::string detokenize(std::span<const TokenId> tokens) {
  std::string out;
  for (TokenId t : tokens) {
    if (t == kPadToken || t == kFirstToken || t >= kVocabulary.size()) continue;
    if (!out.empty()) out += ' ';
    out += kVocabulary[t];
  }
  return out;
}

}  // namespace partedit
