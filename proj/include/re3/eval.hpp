#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "re3/findings.hpp"
#include "re3/model.hpp"

namespace re3 {

// Lowercased word tokens with punctuation dropped.
std::vector<std::string> metric_tokens(std::string_view text);

// ---- lexical metrics --------------------------------------------------------

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

Prf rouge_l(std::string_view reference, std::string_view hypothesis);

inline constexpr double kBleuEpsilon = 1e-9;

// Clipped unigram/bigram precision, geometric mean, brevity penalty against
// the closest reference length.
double bleu_2(std::span<const std::string> references, std::string_view hypothesis);
double bleu_2(std::string_view reference, std::string_view hypothesis);

// Exact unigram alignment with a fragmentation penalty; no synonymy.
double meteor_simplified(std::string_view reference, std::string_view hypothesis);

// ---- embedding proxies -----------------------------------------------------

// Word vectors borrowed from a trained language model's token table.
class Embedder {
 public:
  Embedder() = default;
  static Embedder from_bundle(const ModelBundle& bundle);

  bool empty() const { return dim_ == 0; }
  std::size_t dim() const { return dim_; }
  std::vector<std::vector<double>> token_vectors(std::string_view text) const;

 private:
  Vocab vocab_;
  std::size_t dim_ = 0;
  std::vector<double> table_;
};

// Greedy max-cosine token matching F (BERTScore-style). Empty hypothesis
// scores 0.
double embed_similarity(std::string_view reference, std::string_view hypothesis, const Embedder& embedder);
// Cosine of mean-pooled token vectors (CheXbert-style).
double chex_similarity(std::string_view reference, std::string_view hypothesis, const Embedder& embedder);

// ---- labeler ---------------------------------------------------------------

enum class Mention { Absent, Negative, Uncertain, Positive };
std::string_view mention_name(Mention m);

struct LabelVector {
  std::array<Mention, kNumFindings> values{};
  std::array<double, kNumFindings> scores{};

  Mention operator[](Finding f) const { return values[static_cast<std::size_t>(f)]; }
  double score(Finding f) const { return scores[static_cast<std::size_t>(f)]; }
  // Positive or uncertain.
  bool flagged(Finding f) const;
  bool operator==(const LabelVector&) const = default;
};

struct LexiconEntry {
  std::string kind;   // finding, anatomy, negation or uncertainty
  std::string label;  // finding name, "-" otherwise
  std::string phrase;
};

class Lexicon {
 public:
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  // The table shipped in data/lexicon.tsv, compiled in.
  static const Lexicon& standard();
  static std::string_view standard_text();

  const std::vector<LexiconEntry>& entries() const { return entries_; }

 private:
  std::vector<LexiconEntry> entries_;
};

class Labeler {
 public:
  explicit Labeler(const Lexicon& lexicon = Lexicon::standard());

  // Per sentence: lexicon match, then a negation cue earlier in the sentence
  // makes the mention negative, an uncertainty cue makes it uncertain, else
  // positive. Across mentions positive > uncertain > negative. No Finding is
  // positive when no other finding is flagged.
  LabelVector label(std::string_view report) const;

  struct Span {
    std::size_t begin = 0, end = 0;  // token range in the sentence
    const LexiconEntry* entry = nullptr;
    std::string text;
  };
  // Longest lexicon match at each position, left to right, non-overlapping.
  std::vector<Span> spans(const std::vector<std::string>& sentence) const;
  // Status of spans[index] within its sentence.
  static Mention status(const std::vector<Span>& spans, std::size_t index);

 private:
  std::vector<LexiconEntry> entries_;
  std::vector<std::vector<std::string>> phrases_;  // tokenized entries_
};

// Sentences as token lists; split on . ! ? ; and newlines.
std::vector<std::vector<std::string>> sentences(std::string_view text);

// ---- RadGraph-style proxy --------------------------------------------------

struct Entity {
  std::string text;
  std::string type;  // ANAT, OBS-DP, OBS-U or OBS-DA
  auto operator<=>(const Entity&) const = default;
};

struct Relation {
  Entity observation;
  Entity anatomy;
  auto operator<=>(const Relation&) const = default;
};

struct Graph {
  std::vector<Entity> entities;
  std::vector<Relation> relations;  // located_in, within one sentence
};

Graph extract_graph(std::string_view text, const Labeler& labeler);

// Mean of entity F1 and relation F1 over distinct items. With no relation on
// either side the score is the entity F1; two empty texts score 1.
double radgraph_f1_proxy(std::string_view reference, std::string_view hypothesis, const Labeler& labeler);

// ---- composite ---------------------------------------------------------------

struct RadCliqWeights {
  double c0 = 3.0;
  std::array<double, 4> w{1.0, 0.5, 0.5, 1.0};  // bleu, embed, chex, radgraph
};

struct RadCliqInputs {
  std::optional<double> bleu, embed_sim, chex_sim, radgraph_f1;
};

// Lower is better. MissingComponent when any input is absent; ConfigError on
// a negative weight.
double radcliq_proxy(const RadCliqInputs& inputs, const RadCliqWeights& weights = {});

// ---- classification ------------------------------------------------------

// Mann-Whitney AUC with ties counted as half. DegenerateLabels when either
// class is empty.
double auc(std::span<const double> scores, const std::vector<bool>& labels);

}  // namespace re3
