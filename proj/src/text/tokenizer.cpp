#include "re3/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace re3 {

namespace {

const std::vector<std::string> kSpecialTokens{"<pad>", "<bos>", "<eos>", "<unk>", "<img>", "<sep>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

bool attaches_left(const std::string& token) {
  return token == "." || token == "," || token == ";" || token == ":" || token == "?" ||
         token == "!" || token == ")" || token == "%";
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (!is_word_char(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    std::string word;
    while (i < text.size()) {
      const auto d = static_cast<unsigned char>(text[i]);
      if (is_word_char(d)) {
        word.push_back(static_cast<char>(std::tolower(d)));
        ++i;
      } else if ((d == '-' || d == '\'') && i + 1 < text.size() &&
                 is_word_char(static_cast<unsigned char>(text[i + 1]))) {
        word.push_back(static_cast<char>(d));
        ++i;
      } else {
        break;
      }
    }
    out.push_back(std::move(word));
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = false;
  for (const auto& tok : tokens) {
    if (!out.empty() && !attaches_left(tok) && !glue_next) out.push_back(' ');
    out += tok;
    glue_next = tok == "(";
  }
  return out;
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");
  if (max_size < kNumSpecial + 1) {
    throw EmptyCorpus("vocabulary max_size must be at least " + std::to_string(kNumSpecial + 1));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : word_tokens(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kSpecialTokens);
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) != kSpecialTokens.end()) continue;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecial ||
      !std::equal(kSpecialTokens.begin(), kSpecialTokens.end(), tokens.begin())) {
    throw EmptyCorpus("vocabulary must start with the six reserved tokens");
  }
  Vocab v;
  v.id_to_token_ = std::move(tokens);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i)).second) {
      throw EmptyCorpus("duplicate vocabulary token '" + v.id_to_token_[i] + "'");
    }
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EmptyCorpus("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  for (const auto& tok : id_to_token_) out << tok << '\n';
}

TokenId Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw TokenOutOfRange("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : word_tokens(text)) {
    if (ids.size() >= kMaxTokenLength) break;
    ids.push_back(id(tok));
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> tokens;
  for (auto id : ids) {
    if (id == kUnk || id >= static_cast<TokenId>(kNumSpecial)) tokens.push_back(token(id));
  }
  return join_tokens(tokens);
}

}  // namespace re3
