#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "re3/tensor.hpp"

namespace re3 {

// Reserved ids; they occupy the first six slots of every vocabulary.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kImg = 4;
inline constexpr TokenId kSep = 5;
inline constexpr std::size_t kNumSpecial = 6;
inline constexpr std::size_t kMaxTokenLength = 2048;

// Lowercased word-level split. Words are runs of letters/digits, optionally
// joined by inner hyphens or apostrophes ("right-sided"); every other
// non-space character becomes its own token.
std::vector<std::string> word_tokens(std::string_view text);

// Inverse of word_tokens up to normalization: tokens joined by single spaces,
// closing punctuation attached to the preceding word.
std::string join_tokens(std::span<const std::string> tokens);

class Vocab {
 public:
  // Keeps the most frequent tokens (ties broken lexicographically) so that the
  // vocabulary, specials included, has at most max_size entries.
  static Vocab build(std::span<const std::string> corpus, std::size_t max_size);
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(const std::string& token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // Unknown words map to kUnk; output is capped at kMaxTokenLength ids.
  std::vector<TokenId> encode(std::string_view text) const;
  // Special ids are skipped, except UNK which renders as "<unk>".
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

}  // namespace re3
